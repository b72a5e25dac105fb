#include "experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

namespace gnice::pipeline {

std::string Method::name() const { return deep ? "dl" : "parametric:" + std::string(to_string(spec)); }
std::string Method::slug() const { return deep ? "dl" : "parametric_" + std::string(to_string(spec)); }

Method parse_method(const std::string& text) {
  if (text == "dl") return {true, FeatureSpec::DgpMatched};
  constexpr std::string_view prefix = "parametric:";
  if (text.starts_with(prefix)) return {false, parse_feature_spec(std::string_view(text).substr(prefix.size()))};
  throw std::invalid_argument("unknown method '" + text + "'");
}

bool ExperimentConfig::has_deep() const {
  return std::any_of(methods.begin(), methods.end(), [](const Method& m) { return m.deep; });
}

NetworkConfig NetworkSettings::resolve(ScenarioKind scenario, int n, NetworkRole role) const {
  const NetworkConfig base = preset == NetworkPreset::Paper ? paper_config(scenario, n, role) : desk_config(role);
  return network_config_from_json(role == NetworkRole::Covariate ? covariate : outcome, base);
}

namespace {

using json = nlohmann::json;

void check_keys(const json& j, const std::string& where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigError(where.empty() ? "/" : where, "expected an object");
  for (const auto& [key, v] : j.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError(where + "/" + key, "unknown field");
}

template <typename T>
T get_field(const json& j, const std::string& where, const std::string& key) {
  if (!j.contains(key)) throw ConfigError(where + "/" + key, "required field missing");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "/" + key, "wrong type");
  }
}

template <typename T>
T get_or(const json& j, const std::string& where, const std::string& key, T fallback) {
  return j.contains(key) ? get_field<T>(j, where, key) : fallback;
}

std::string_view preset_name(NetworkPreset p) { return p == NetworkPreset::Paper ? "paper" : "desk"; }

}  // namespace

ExperimentConfig parse_config(const json& j) {
  check_keys(j, "", {"name", "scenario", "include_u", "sample_sizes", "horizon", "seeds", "truth_n", "methods",
                     "network", "search", "monte_carlo", "output_dir", "threads", "svg"});
  ExperimentConfig c;
  c.name = get_field<std::string>(j, "", "name");

  const auto scenario = get_field<std::string>(j, "", "scenario");
  if (scenario == "simple") c.scenario = ScenarioKind::Simple;
  else if (scenario == "complex") c.scenario = ScenarioKind::Complex;
  else throw ConfigError("/scenario", "expected 'simple' or 'complex', got '" + scenario + "'");

  c.include_u = get_or<bool>(j, "", "include_u", true);
  c.sample_sizes = get_field<std::vector<int>>(j, "", "sample_sizes");
  c.horizon = get_or<int>(j, "", "horizon", kDefaultHorizon);

  if (!j.contains("seeds")) throw ConfigError("/seeds", "required field missing");
  const auto& s = j["seeds"];
  check_keys(s, "/seeds", {"simulation", "truth", "training", "monte_carlo"});
  c.seeds.simulation = get_field<std::uint64_t>(s, "/seeds", "simulation");
  c.seeds.truth = get_field<std::uint64_t>(s, "/seeds", "truth");
  c.seeds.training = get_field<std::uint64_t>(s, "/seeds", "training");
  c.seeds.monte_carlo = get_field<std::uint64_t>(s, "/seeds", "monte_carlo");

  c.truth_n = get_or<std::int64_t>(j, "", "truth_n", 1000000);

  const auto methods = get_field<std::vector<std::string>>(j, "", "methods");
  for (std::size_t i = 0; i < methods.size(); ++i) {
    try {
      c.methods.push_back(parse_method(methods[i]));
    } catch (const std::invalid_argument& e) {
      throw ConfigError("/methods/" + std::to_string(i), e.what());
    }
  }

  if (j.contains("network")) {
    const auto& n = j["network"];
    check_keys(n, "/network", {"preset", "covariate", "outcome"});
    const auto preset = get_or<std::string>(n, "/network", "preset", "desk");
    if (preset == "desk") c.network.preset = NetworkPreset::Desk;
    else if (preset == "paper") c.network.preset = NetworkPreset::Paper;
    else throw ConfigError("/network/preset", "expected 'desk' or 'paper', got '" + preset + "'");
    if (n.contains("covariate")) c.network.covariate = n["covariate"];
    if (n.contains("outcome")) c.network.outcome = n["outcome"];
  }

  if (j.contains("search") && !j["search"].is_null()) {
    const auto& sj = j["search"];
    check_keys(sj, "/search", {"trials", "covariate", "outcome"});
    SearchSettings ss;
    ss.trials = get_field<int>(sj, "/search", "trials");
    try {
      if (sj.contains("covariate")) ss.covariate = search_space_from_json(sj["covariate"], ss.covariate);
    } catch (const std::exception& e) {
      throw ConfigError("/search/covariate", e.what());
    }
    try {
      if (sj.contains("outcome")) ss.outcome = search_space_from_json(sj["outcome"], ss.outcome);
    } catch (const std::exception& e) {
      throw ConfigError("/search/outcome", e.what());
    }
    c.search = ss;
  }

  if (j.contains("monte_carlo")) {
    check_keys(j["monte_carlo"], "/monte_carlo", {"n_samples"});
    c.mc_samples = get_or<int>(j["monte_carlo"], "/monte_carlo", "n_samples", 10000);
  }
  c.output_dir = get_or<std::string>(j, "", "output_dir", "runs");
  c.threads = get_or<int>(j, "", "threads", 1);
  c.svg = get_or<bool>(j, "", "svg", false);
  validate(c);
  return c;
}

void validate(const ExperimentConfig& c) {
  if (c.name.empty() || c.name.find_first_of("/\\") != std::string::npos || c.name == "." || c.name == "..")
    throw ConfigError("/name", "must be a non-empty directory name");
  if (c.sample_sizes.empty()) throw ConfigError("/sample_sizes", "at least one sample size is required");
  std::set<int> seen;
  for (std::size_t i = 0; i < c.sample_sizes.size(); ++i) {
    if (c.sample_sizes[i] < 1) throw ConfigError("/sample_sizes/" + std::to_string(i), "must be >= 1");
    if (!seen.insert(c.sample_sizes[i]).second)
      throw ConfigError("/sample_sizes/" + std::to_string(i), "duplicate sample size");
  }
  if (c.horizon < 1) throw ConfigError("/horizon", "must be >= 1");
  if (c.seeds.truth == c.seeds.simulation)
    throw ConfigError("/seeds/truth", "must differ from seeds/simulation (the truth would replay the data)");
  if (c.truth_n < 1) throw ConfigError("/truth_n", "must be >= 1");
  if (c.methods.empty()) throw ConfigError("/methods", "at least one method is required");
  for (std::size_t i = 0; i < c.methods.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (c.methods[i] == c.methods[j]) throw ConfigError("/methods/" + std::to_string(i), "duplicate method");
  if (c.mc_samples < 1) throw ConfigError("/monte_carlo/n_samples", "must be >= 1");
  if (c.threads < 1) throw ConfigError("/threads", "must be >= 1");
  if (c.search && c.search->trials < 1) throw ConfigError("/search/trials", "must be >= 1");
  if (c.has_deep()) {
    for (const int n : c.sample_sizes) {
      for (const auto role : {NetworkRole::Covariate, NetworkRole::Outcome}) {
        const std::string field = "/network/" + std::string(to_string(role));
        try {
          c.network.resolve(c.scenario, n, role);
        } catch (const std::exception& e) {
          throw ConfigError(field, e.what());
        }
      }
    }
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("/", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["name"] = c.name;
  j["scenario"] = c.scenario == ScenarioKind::Simple ? "simple" : "complex";
  j["include_u"] = c.include_u;
  j["sample_sizes"] = c.sample_sizes;
  j["horizon"] = c.horizon;
  j["seeds"] = {{"simulation", c.seeds.simulation},
                {"truth", c.seeds.truth},
                {"training", c.seeds.training},
                {"monte_carlo", c.seeds.monte_carlo}};
  j["truth_n"] = c.truth_n;
  auto& methods = j["methods"] = nlohmann::ordered_json::array();
  for (const auto& m : c.methods) methods.push_back(m.name());
  // Overrides are stored as given; the resolved per-n configs go to the manifest.
  j["network"] = {{"preset", preset_name(c.network.preset)},
                  {"covariate", nlohmann::ordered_json::parse(c.network.covariate.dump())},
                  {"outcome", nlohmann::ordered_json::parse(c.network.outcome.dump())}};
  if (c.search)
    j["search"] = {{"trials", c.search->trials},
                   {"covariate", to_json(c.search->covariate)},
                   {"outcome", to_json(c.search->outcome)}};
  else
    j["search"] = nullptr;
  j["monte_carlo"] = {{"n_samples", c.mc_samples}};
  j["output_dir"] = c.output_dir.generic_string();
  j["threads"] = c.threads;
  j["svg"] = c.svg;
  return j;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string config_hash(const ExperimentConfig& c) {
  auto j = to_json(c);
  j.erase("threads");  // results do not depend on the worker count
  return hex64(fnv1a(j.dump()));
}

}  // namespace gnice::pipeline
