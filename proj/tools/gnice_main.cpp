// gnice: command-line driver for simulation, fitting, estimation and reporting.
//
// Exit codes: 0 success, 1 missing input or I/O failure, 2 configuration
// error, 3 numeric failure. Failures print one machine-readable JSON line
// ("gnice-error: {...}") followed by a human-readable detail line on stderr.

#include <CLI11.hpp>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>

#include "gnice/errors.hpp"
#include "gnice/log.hpp"
#include "pipeline/pipeline.hpp"

namespace {

using gnice::pipeline::ConfigError;
using nlohmann::json;

struct Flags {
  std::string config;
  std::optional<std::string> name, scenario, preset, output_dir, log_level;
  std::optional<bool> include_u, svg;
  std::vector<int> sizes;
  std::optional<int> horizon, mc_samples, threads, search_trials;
  std::optional<std::uint64_t> sim_seed, truth_seed, train_seed, mc_seed;
  std::optional<std::int64_t> truth_n;
  std::vector<std::string> methods;
  bool no_u = false;
  std::string strategy = "natural";
};

void add_flags(CLI::App& app, Flags& f) {
  app.add_option("-c,--config", f.config, "Experiment config (JSON); flags below override its fields");
  app.add_option("--name", f.name, "Run name (directory under the output dir)");
  app.add_option("--scenario", f.scenario, "simple | complex")->check(CLI::IsMember({"simple", "complex"}));
  app.add_option("--include-u", f.include_u, "Keep the unmeasured confounder's effects (true|false)");
  app.add_option("-n,--sample-size", f.sizes, "Sample size(s); repeat for several");
  app.add_flag("--no-u", f.no_u, "Shorthand for --include-u false");
  app.add_option("-k,--horizon", f.horizon, "Follow-up months K");
  app.add_option("--sim-seed", f.sim_seed, "Seed for the simulated cohorts");
  app.add_option("--truth-seed", f.truth_seed, "Seed for the ground-truth draws");
  app.add_option("--train-seed", f.train_seed, "Seed for network training and search");
  app.add_option("--mc-seed", f.mc_seed, "Seed for Monte Carlo estimation");
  app.add_option("--truth-n", f.truth_n, "Ground-truth draws per strategy");
  app.add_option("-m,--method", f.methods,
                 "Method(s): parametric:dgp_matched | parametric:lag1 | parametric:lag_cumavg | dl");
  app.add_option("--preset", f.preset, "Network preset: desk | paper")->check(CLI::IsMember({"desk", "paper"}));
  app.add_option("--search-trials", f.search_trials, "Run a random search with this many trials per network");
  app.add_option("--mc-samples", f.mc_samples, "Monte Carlo histories per strategy");
  app.add_option("-o,--output-dir", f.output_dir, "Parent directory of run directories");
  app.add_option("-j,--threads", f.threads, "Worker cap for every stage");
  app.add_option("--svg", f.svg, "Also write SVG line charts (true|false)");
  app.add_option("--log-level", f.log_level, "debug | info | warning | error")
      ->check(CLI::IsMember({"debug", "info", "warning", "error"}));
}

json build_config_json(const Flags& f) {
  json j = json::object();
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw gnice::pipeline::MissingInputError("cannot read config " + f.config);
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("/", std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("/", "expected an object");
  }
  if (f.name) j["name"] = *f.name;
  if (f.scenario) j["scenario"] = *f.scenario;
  if (f.include_u) j["include_u"] = *f.include_u;
  if (f.no_u) j["include_u"] = false;
  if (!f.sizes.empty()) j["sample_sizes"] = f.sizes;
  if (f.horizon) j["horizon"] = *f.horizon;
  auto seed = [&](const char* key, const std::optional<std::uint64_t>& v) {
    if (!v) return;
    if (!j.contains("seeds") || !j["seeds"].is_object()) j["seeds"] = json::object();
    j["seeds"][key] = *v;
  };
  seed("simulation", f.sim_seed);
  seed("truth", f.truth_seed);
  seed("training", f.train_seed);
  seed("monte_carlo", f.mc_seed);
  if (f.truth_n) j["truth_n"] = *f.truth_n;
  if (!f.methods.empty()) j["methods"] = f.methods;
  if (f.preset) {
    if (!j.contains("network") || !j["network"].is_object()) j["network"] = json::object();
    j["network"]["preset"] = *f.preset;
  }
  if (f.search_trials) {
    if (!j.contains("search") || !j["search"].is_object()) j["search"] = json::object();
    j["search"]["trials"] = *f.search_trials;
  }
  if (f.mc_samples) j["monte_carlo"] = {{"n_samples", *f.mc_samples}};
  if (f.output_dir) j["output_dir"] = *f.output_dir;
  if (f.threads) j["threads"] = *f.threads;
  if (f.svg) j["svg"] = *f.svg;
  return j;
}

int fail(int code, const std::string& kind, const std::string& message, const std::string& field = {}) {
  json e{{"code", code}, {"kind", kind}, {"message", message}};
  if (!field.empty()) e["field"] = field;
  std::cerr << "gnice-error: " << e.dump() << '\n' << "error: " << message << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"g-computation with parametric and recurrent-network models"};
  app.require_subcommand(1);
  Flags flags;

  using gnice::pipeline::Pipeline;
  using Stage = std::function<void(Pipeline&)>;
  const std::vector<std::tuple<std::string, std::string, Stage>> commands = {
      {"simulate", "Simulate the observed cohorts",
       [&](Pipeline& p) { p.simulate(gnice::parse_strategy(flags.strategy)); }},
      {"truth", "Compute ground-truth risks under every strategy", [](Pipeline& p) { p.truth(); }},
      {"fit-parametric", "Fit the configured parametric model sets", [](Pipeline& p) { p.fit_parametric(); }},
      {"fit-dl", "Train the covariate and outcome networks", [](Pipeline& p) { p.fit_dl(); }},
      {"search-dl", "Random hyperparameter search for both networks", [](Pipeline& p) { p.search_dl(); }},
      {"estimate", "Monte Carlo risk estimates under every strategy", [](Pipeline& p) { p.estimate(); }},
      {"evaluate", "Bias of every estimate against the ground truth", [](Pipeline& p) { p.evaluate(); }},
      {"report", "Tables and figure data", [](Pipeline& p) { p.report(); }},
      {"run", "Every stage in order, then the run manifest", [](Pipeline& p) { p.run(); }},
  };
  std::vector<CLI::App*> subs;
  for (const auto& [name, help, fn] : commands) {
    auto* sub = app.add_subcommand(name, help);
    add_flags(*sub, flags);
    if (name == "simulate")
      sub->add_option("--strategy", flags.strategy, "natural | always | never (non-natural cohorts are not fitted)")
          ->check(CLI::IsMember({"natural", "always", "never"}));
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (flags.log_level) {
    const auto& l = *flags.log_level;
    gnice::set_log_level(l == "debug"     ? gnice::LogLevel::Debug
                         : l == "warning" ? gnice::LogLevel::Warning
                         : l == "error"   ? gnice::LogLevel::Error
                                          : gnice::LogLevel::Info);
  }

  try {
    gnice::pipeline::Pipeline pipeline(gnice::pipeline::parse_config(build_config_json(flags)));
    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (!subs[i]->parsed()) continue;
      std::get<2>(commands[i])(pipeline);
      if (std::get<0>(commands[i]) == "run") std::cout << pipeline.paths().manifest().string() << '\n';
    }
    return 0;
  } catch (const ConfigError& e) {
    return fail(2, "config", e.what(), e.field());
  } catch (const gnice::NumericError& e) {
    return fail(3, "numeric", e.what());
  } catch (const gnice::pipeline::MissingInputError& e) {
    return fail(1, "missing_input", e.what());
  } catch (const std::exception& e) {
    return fail(1, "io", e.what());
  }
}
