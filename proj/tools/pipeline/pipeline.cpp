#include "pipeline.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>

#include "gnice/cohort_io.hpp"
#include "gnice/evaluation.hpp"
#include "gnice/log.hpp"
#include "gnice/montecarlo.hpp"
#include "gnice/parametric.hpp"

namespace gnice::pipeline {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

fs::path RunPaths::cohort(int n, Strategy s) const {
  const std::string suffix = s == Strategy::NaturalCourse ? "" : "_" + std::string(to_string(s));
  return data() / ("cohort_" + std::to_string(n) + suffix + ".csv");
}
fs::path RunPaths::truth(Strategy s) const { return data() / ("truth_" + std::string(to_string(s)) + ".csv"); }
fs::path RunPaths::parametric_model(int n, FeatureSpec spec) const {
  return models() / std::to_string(n) / ("parametric_" + std::string(to_string(spec)) + ".json");
}
fs::path RunPaths::deep_model(int n) const { return models() / std::to_string(n) / "dl"; }
fs::path RunPaths::search_result(int n, NetworkRole role) const {
  return models() / std::to_string(n) / ("search_" + std::string(to_string(role)) + ".json");
}
fs::path RunPaths::risk(int n, const Method& m, Strategy s) const {
  return risks() / std::to_string(n) / (m.slug() + "_" + std::string(to_string(s)) + ".csv");
}
fs::path RunPaths::estimate_record(int n, const Method& m) const {
  return risks() / std::to_string(n) / (m.slug() + ".json");
}

std::uint64_t cohort_seed(const ExperimentConfig& c, int n) {
  return derive_seed(c.seeds.simulation, static_cast<std::uint64_t>(n));
}
std::uint64_t training_seed(const ExperimentConfig& c, int n, NetworkRole role) {
  return derive_seed(c.seeds.training, 2 * static_cast<std::uint64_t>(n) + (role == NetworkRole::Outcome ? 1 : 0));
}
std::uint64_t search_seed(const ExperimentConfig& c, int n, NetworkRole role) {
  return derive_seed(training_seed(c, n, role), 0x5ea2c4);
}

namespace {

std::string hash_of(const ojson& j) { return hex64(fnv1a(j.dump())); }

std::string scenario_name(ScenarioKind k) { return k == ScenarioKind::Simple ? "simple" : "complex"; }

void write_json(const fs::path& path, const ojson& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("missing input " + path.string());
  return nlohmann::json::parse(in);
}

void require(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path)) throw MissingInputError("missing input " + path.string() + " (run '" + producer + "' first)");
}

Cohort load_cohort(const ExperimentConfig& c, const RunPaths& p, int n) {
  require(p.cohort(n), "simulate");
  return read_cohort(p.cohort(n), c.horizon, c.scenario_def().tag());
}

StrategyRisks load_risks(const std::function<fs::path(Strategy)>& path_of, const std::string& producer) {
  auto one = [&](Strategy s) {
    require(path_of(s), producer);
    return read_risk_csv(path_of(s)).risk;
  };
  return {one(Strategy::NaturalCourse), one(Strategy::AlwaysTreat), one(Strategy::NeverTreat)};
}

}  // namespace

Pipeline::Pipeline(ExperimentConfig config) : config_(std::move(config)), paths_{config_.run_dir()} {
  validate(config_);
}

// ---------------------------------------------------------------- stamps

bool Pipeline::fresh(const std::string& id, const std::string& key, const std::vector<fs::path>& outputs) const {
  std::ifstream in(paths_.stamps() / (id + ".key"));
  std::string stored;
  if (!in || !std::getline(in, stored) || stored != key) return false;
  return std::all_of(outputs.begin(), outputs.end(), [](const fs::path& p) { return fs::exists(p); });
}

void Pipeline::stamp(const std::string& id, const std::string& key) const {
  fs::create_directories(paths_.stamps());
  std::ofstream out(paths_.stamps() / (id + ".key"), std::ios::binary);
  out << key << '\n';
  if (!out) throw std::runtime_error("cannot write stamp " + id);
}

template <typename Fn>
void Pipeline::stage(const std::string& name, const std::string& id, const std::string& key,
                     const std::vector<fs::path>& outputs, Fn&& work) {
  const auto t0 = std::chrono::steady_clock::now();
  if (fresh(id, key, outputs)) {
    log_info(name + ": up to date");
    records_.push_back({name, 0.0, true});
    return;
  }
  log_info(name + ": running");
  // Invalidate first so an interrupted stage is never mistaken for a finished one.
  fs::remove(paths_.stamps() / (id + ".key"));
  work();
  stamp(id, key);
  records_.push_back({name, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), false});
}

// ---------------------------------------------------------------- keys

std::string Pipeline::key_cohort(int n, Strategy s) const {
  return hash_of({{"stage", "simulate"},
                  {"strategy", to_string(s)},
                  {"scenario", scenario_name(config_.scenario)},
                  {"include_u", config_.include_u},
                  {"horizon", config_.horizon},
                  {"n", n},
                  {"seed", cohort_seed(config_, n)}});
}

std::string Pipeline::key_truth(Strategy s) const {
  return hash_of({{"stage", "truth"},
                  {"scenario", scenario_name(config_.scenario)},
                  {"include_u", config_.include_u},
                  {"horizon", config_.horizon},
                  {"strategy", to_string(s)},
                  {"n", config_.truth_n},
                  {"seed", config_.seeds.truth}});
}

std::string Pipeline::key_parametric(int n, FeatureSpec spec) const {
  return hash_of({{"stage", "fit-parametric"}, {"data", key_cohort(n)}, {"spec", to_string(spec)}});
}

std::string Pipeline::key_search(int n, NetworkRole role) const {
  const auto& space = role == NetworkRole::Covariate ? config_.search->covariate : config_.search->outcome;
  return hash_of({{"stage", "search-dl"},
                  {"data", key_cohort(n)},
                  {"role", to_string(role)},
                  {"trials", config_.search->trials},
                  {"space", to_json(space)},
                  {"seed", search_seed(config_, n, role)}});
}

std::string Pipeline::key_deep(int n) const {
  ojson j{{"stage", "fit-dl"}, {"data", key_cohort(n)}};
  for (const auto role : {NetworkRole::Covariate, NetworkRole::Outcome}) {
    const std::string r(to_string(role));
    j[r + "_seed"] = training_seed(config_, n, role);
    if (config_.search)
      j[r + "_search"] = key_search(n, role);
    else
      j[r + "_config"] = to_json(config_.network.resolve(config_.scenario, n, role));
  }
  return hash_of(j);
}

std::string Pipeline::key_fit(int n, const Method& m) const {
  return m.deep ? key_deep(n) : key_parametric(n, m.spec);
}

std::string Pipeline::key_estimate(int n, const Method& m) const {
  return hash_of({{"stage", "estimate"},
                  {"model", key_fit(n, m)},
                  {"data", key_cohort(n)},
                  {"n_samples", config_.mc_samples},
                  {"horizon", config_.horizon},
                  {"seed", config_.seeds.monte_carlo}});
}

std::string Pipeline::key_evaluation() const {
  ojson j{{"stage", "evaluate"}};
  auto& parts = j["inputs"] = ojson::array();
  for (const auto s : kAllStrategies) parts.push_back(key_truth(s));
  for (const int n : config_.sample_sizes)
    for (const auto& m : config_.methods) parts.push_back({n, m.name(), key_estimate(n, m)});
  return hash_of(j);
}

std::string Pipeline::key_report() const {
  return hash_of({{"stage", "report"}, {"evaluation", key_evaluation()}, {"svg", config_.svg}});
}

NetworkConfig Pipeline::network_for(int n, NetworkRole role) const {
  if (!config_.search) return config_.network.resolve(config_.scenario, n, role);
  const auto path = paths_.search_result(n, role);
  require(path, "search-dl");
  const auto j = read_json(path);
  return network_config_from_json(j.at("best"), NetworkConfig{});
}

// ---------------------------------------------------------------- stages

void Pipeline::simulate(Strategy strategy) {
  const std::string tag = strategy == Strategy::NaturalCourse ? "" : "_" + std::string(to_string(strategy));
  for (const int n : config_.sample_sizes) {
    const auto out = paths_.cohort(n, strategy);
    stage("simulate" + (tag.empty() ? "" : " " + tag.substr(1)) + " n=" + std::to_string(n), "simulate_" + std::to_string(n) + tag, key_cohort(n, strategy), {out}, [&] {
      const auto cohort = simulate_cohort(config_.scenario_def(), n, config_.horizon, strategy,
                                          cohort_seed(config_, n), config_.threads);
      fs::create_directories(out.parent_path());
      write_cohort(cohort, out);
    });
  }
}

void Pipeline::truth() {
  for (const auto s : kAllStrategies) {
    const auto out = paths_.truth(s);
    stage("truth " + std::string(to_string(s)), "truth_" + std::string(to_string(s)), key_truth(s), {out}, [&] {
      const auto risk = ground_truth_risk(config_.scenario_def(), s, config_.truth_n, config_.horizon,
                                          config_.seeds.truth, config_.threads);
      std::vector<double> se(risk.size());
      const auto N = static_cast<double>(config_.truth_n);
      for (std::size_t i = 0; i < se.size(); ++i) se[i] = std::sqrt(risk[i] * (1.0 - risk[i]) / N);
      fs::create_directories(out.parent_path());
      write_risk_csv(risk, se, out);
    });
  }
}

void Pipeline::fit_parametric() {
  for (const int n : config_.sample_sizes) {
    for (const auto& m : config_.methods) {
      if (m.deep) continue;
      const auto out = paths_.parametric_model(n, m.spec);
      const std::string id = "fit_" + std::to_string(n) + "_" + m.slug();
      stage("fit " + m.name() + " n=" + std::to_string(n), id, key_parametric(n, m.spec), {out}, [&] {
        const auto cohort = load_cohort(config_, paths_, n);
        ParametricFitOptions opts;
        opts.threads = config_.threads;
        const auto model = fit_parametric_modelset(cohort, m.spec, opts);
        fs::create_directories(out.parent_path());
        model.save(out);
      });
    }
  }
}

void Pipeline::search_dl() {
  if (!config_.search || !config_.has_deep()) return;
  for (const int n : config_.sample_sizes) {
    for (const auto role : {NetworkRole::Covariate, NetworkRole::Outcome}) {
      const auto out = paths_.search_result(n, role);
      const std::string r(to_string(role));
      stage("search-dl " + r + " n=" + std::to_string(n), "search_" + std::to_string(n) + "_" + r,
            key_search(n, role), {out}, [&] {
              const auto cohort = load_cohort(config_, paths_, n);
              const auto& space = role == NetworkRole::Covariate ? config_.search->covariate : config_.search->outcome;
              const auto result = random_search(cohort, role, space, config_.search->trials,
                                                search_seed(config_, n, role), [&](const TrialRecord& t) {
                                                  log_info("search " + r + " trial " + std::to_string(t.trial) +
                                                           " validation loss " + std::to_string(t.validation_loss));
                                                });
              ojson j;
              j["role"] = r;
              j["n"] = n;
              j["space"] = to_json(space);
              j["best"] = to_json(result.best);
              j["best_validation_loss"] = result.best_validation_loss;
              j["evaluations"] = result.evaluations;
              auto& trials = j["trials"] = ojson::array();
              for (const auto& t : result.trials) trials.push_back(to_json(t));
              write_json(out, j);
            });
    }
  }
}

void Pipeline::fit_dl() {
  if (!config_.has_deep()) return;
  for (const int n : config_.sample_sizes) {
    const auto dir = paths_.deep_model(n);
    stage("fit dl n=" + std::to_string(n), "fit_" + std::to_string(n) + "_dl", key_deep(n),
          {dir / "covariate.gnet", dir / "outcome.gnet"}, [&] {
            const auto cohort = load_cohort(config_, paths_, n);
            auto cov = train_network(cohort, NetworkRole::Covariate, network_for(n, NetworkRole::Covariate),
                                     training_seed(config_, n, NetworkRole::Covariate));
            auto out = train_network(cohort, NetworkRole::Outcome, network_for(n, NetworkRole::Outcome),
                                     training_seed(config_, n, NetworkRole::Outcome));
            DeepModelSet(std::move(cov), std::move(out)).save(dir);
          });
  }
}

void Pipeline::estimate() {
  for (const int n : config_.sample_sizes) {
    for (const auto& m : config_.methods) {
      std::vector<fs::path> outputs{paths_.estimate_record(n, m)};
      for (const auto s : kAllStrategies) outputs.push_back(paths_.risk(n, m, s));
      stage("estimate " + m.name() + " n=" + std::to_string(n), "estimate_" + std::to_string(n) + "_" + m.slug(),
            key_estimate(n, m), outputs, [&] {
              const auto cohort = load_cohort(config_, paths_, n);
              std::unique_ptr<ModelSet> model;
              if (m.deep) {
                require(paths_.deep_model(n) / "covariate.gnet", "fit-dl");
                model = std::make_unique<DeepModelSet>(DeepModelSet::load(paths_.deep_model(n)));
              } else {
                require(paths_.parametric_model(n, m.spec), "fit-parametric");
                model = std::make_unique<ParametricModelSet>(ParametricModelSet::load(paths_.parametric_model(n, m.spec)));
              }
              const auto starts = baseline_rows(cohort);
              const MonteCarloConfig mc{config_.mc_samples, config_.horizon, config_.seeds.monte_carlo,
                                        config_.threads};
              ojson record{{"method", m.name()}, {"n", n}};
              auto& runs = record["estimates"] = ojson::array();
              fs::create_directories(outputs.front().parent_path());
              for (const auto s : kAllStrategies) {
                const auto est = estimate_risk(*model, starts, s, mc);
                write_risk_csv(est.risk, est.mc_se, paths_.risk(n, m, s));
                auto entry = estimate_manifest(est, m.name());
                entry.erase("seconds");  // keep the record a function of its inputs
                runs.push_back(std::move(entry));
              }
              write_json(outputs.front(), record);
            });
    }
  }
}

namespace {

std::vector<BiasReport> collect_reports(const ExperimentConfig& c, const RunPaths& p) {
  const auto truth = load_risks([&](Strategy s) { return p.truth(s); }, "truth");
  std::vector<BiasReport> all;
  for (const int n : c.sample_sizes) {
    std::vector<MethodRisks> methods;
    for (const auto& m : c.methods)
      methods.push_back({m.name(), load_risks([&](Strategy s) { return p.risk(n, m, s); }, "estimate")});
    ReportMeta meta{scenario_name(c.scenario), n, "", cohort_seed(c, n), c.seeds.training, c.seeds.monte_carlo};
    auto reports = compare_methods(truth, methods, meta);
    for (auto& r : reports) all.push_back(std::move(r));
  }
  return all;
}

ojson series_json(const BiasSeries& s) { return {{"mean_abs", s.mean_abs}, {"mean", s.mean}, {"per_k", s.per_k}}; }

}  // namespace

void Pipeline::evaluate() {
  const auto out = paths_.report() / "evaluation.json";
  stage("evaluate", "evaluate", key_evaluation(), {out}, [&] {
    ojson j = ojson::array();
    for (const auto& r : collect_reports(config_, paths_)) {
      ojson rr_per_k = ojson::array();
      for (const auto& v : r.effect.rr.per_k) rr_per_k.push_back(v ? ojson(*v) : ojson(nullptr));
      j.push_back({{"scenario", r.meta.scenario},
                   {"n", r.meta.n},
                   {"method", r.meta.method},
                   {"natural_course", series_json(r.natural_course)},
                   {"always_treat", series_json(r.always_treat)},
                   {"never_treat", series_json(r.never_treat)},
                   {"rd", series_json(r.effect.rd)},
                   {"rr",
                    {{"mean_abs", r.effect.rr.mean_abs},
                     {"mean", r.effect.rr.mean},
                     {"months_averaged", r.effect.rr.months.size()},
                     {"months_excluded", r.effect.rr.excluded},
                     {"exclusion_rule", "months where any compared never-treat risk is zero"},
                     {"per_k", rr_per_k}}}});
    }
    write_json(out, j);
  });
}

void Pipeline::report() {
  std::vector<fs::path> outputs{paths_.report() / "bias_summary.csv"};
  for (const int n : config_.sample_sizes)
    outputs.push_back(paths_.report() / ("table_" + scenario_name(config_.scenario) + "_" + std::to_string(n) + ".md"));
  stage("report", "report", key_report(), outputs, [&] {
    const auto reports = collect_reports(config_, paths_);
    RenderOptions opts;
    opts.svg = config_.svg;
    render_report(reports, paths_.report(), opts);
    for (const auto& r : reports)
      log_info(r.meta.scenario + " n=" + std::to_string(r.meta.n) + " " + r.meta.method +
               ": natural-course mean absolute bias " + std::to_string(r.natural_course.mean_abs));
  });
}

void Pipeline::run() {
  simulate();
  truth();
  fit_parametric();
  search_dl();
  fit_dl();
  estimate();
  evaluate();
  report();
  write_json(paths_.manifest(), manifest());
}

ojson Pipeline::manifest() const {
  ojson j;
  j["format"] = "gnice-run-manifest";
  j["config_hash"] = config_hash(config_);
  j["config"] = to_json(config_);
  auto& derived = j["derived"] = ojson::object();
  for (const int n : config_.sample_sizes) {
    ojson d{{"cohort_seed", cohort_seed(config_, n)}};
    if (config_.has_deep()) {
      for (const auto role : {NetworkRole::Covariate, NetworkRole::Outcome}) {
        const std::string r(to_string(role));
        d[r + "_training_seed"] = training_seed(config_, n, role);
        if (config_.search)
          d[r + "_search_seed"] = search_seed(config_, n, role);
        else
          d[r + "_network"] = to_json(config_.network.resolve(config_.scenario, n, role));
      }
    }
    derived[std::to_string(n)] = d;
  }
  j["versions"] = {{"gnice", GNICE_VERSION},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                   {"compiler", __VERSION__},
                   {"checkpoint_format", kCheckpointVersion},
                   {"parametric_format", kParametricFormatVersion}};
  auto& stages = j["stages"] = ojson::array();
  for (const auto& r : records_) stages.push_back({{"stage", r.stage}, {"seconds", r.seconds}, {"reused", r.reused}});
  return j;
}

}  // namespace gnice::pipeline
