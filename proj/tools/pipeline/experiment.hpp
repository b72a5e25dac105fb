#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gnice/deepnet.hpp"
#include "gnice/features.hpp"
#include "gnice/simulator.hpp"

namespace gnice::pipeline {

/// Invalid or incomplete configuration. `field` is a JSON-pointer-like path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// An upstream artifact a command needs is absent.
class MissingInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// "parametric:<spec>" or "dl".
struct Method {
  bool deep = false;
  FeatureSpec spec = FeatureSpec::DgpMatched;

  std::string name() const;
  /// File-name form: "parametric_dgp_matched" or "dl".
  std::string slug() const;
  bool operator==(const Method&) const = default;
};

Method parse_method(const std::string& text);

struct Seeds {
  std::uint64_t simulation = 0;
  std::uint64_t truth = 0;
  std::uint64_t training = 0;
  std::uint64_t monte_carlo = 0;
};

enum class NetworkPreset { Desk, Paper };

struct NetworkSettings {
  NetworkPreset preset = NetworkPreset::Desk;
  nlohmann::json covariate = nlohmann::json::object();  // overrides
  nlohmann::json outcome = nlohmann::json::object();

  /// Preset config for (scenario, n, role) with the overrides applied.
  NetworkConfig resolve(ScenarioKind scenario, int n, NetworkRole role) const;
};

struct SearchSettings {
  int trials = 0;
  SearchSpace covariate = SearchSpace::reference(NetworkRole::Covariate);
  SearchSpace outcome = SearchSpace::reference(NetworkRole::Outcome);
};

struct ExperimentConfig {
  std::string name;
  ScenarioKind scenario = ScenarioKind::Simple;
  bool include_u = true;
  std::vector<int> sample_sizes;
  int horizon = kDefaultHorizon;
  Seeds seeds;
  std::int64_t truth_n = 1000000;
  std::vector<Method> methods;
  NetworkSettings network;
  std::optional<SearchSettings> search;
  int mc_samples = 10000;
  std::filesystem::path output_dir = "runs";
  int threads = 1;
  bool svg = false;

  Scenario scenario_def() const { return Scenario{scenario, include_u}; }
  std::filesystem::path run_dir() const { return output_dir / name; }
  bool has_deep() const;
};

/// Parses and validates. Required: name, scenario, sample_sizes, seeds (all
/// four), methods. Unknown keys are errors. Throws ConfigError.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Every field with defaults materialized; parse_config(to_json(c)) == c.
nlohmann::ordered_json to_json(const ExperimentConfig& c);
void validate(const ExperimentConfig& c);

/// 64-bit FNV-1a over bytes.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t v);
/// Hash of the materialized config; independent of key order in the input.
std::string config_hash(const ExperimentConfig& c);

}  // namespace gnice::pipeline
