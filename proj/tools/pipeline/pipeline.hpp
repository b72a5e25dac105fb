#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "experiment.hpp"

namespace gnice::pipeline {

/// runs/<name>/{data,models,risks,report,manifest.json}.
struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path data() const { return root / "data"; }
  std::filesystem::path models() const { return root / "models"; }
  std::filesystem::path risks() const { return root / "risks"; }
  std::filesystem::path report() const { return root / "report"; }
  std::filesystem::path stamps() const { return root / ".stamps"; }
  std::filesystem::path manifest() const { return root / "manifest.json"; }

  /// Natural-course cohorts feed the fits; other strategies get a suffixed file.
  std::filesystem::path cohort(int n, Strategy s = Strategy::NaturalCourse) const;
  std::filesystem::path truth(Strategy s) const;
  std::filesystem::path parametric_model(int n, FeatureSpec spec) const;
  std::filesystem::path deep_model(int n) const;
  std::filesystem::path search_result(int n, NetworkRole role) const;
  std::filesystem::path risk(int n, const Method& m, Strategy s) const;
  std::filesystem::path estimate_record(int n, const Method& m) const;
};

struct StageRecord {
  std::string stage;
  double seconds = 0.0;
  /// Outputs were present and their stamp matched, so nothing was recomputed.
  bool reused = false;
};

/// Seeds actually used, derived from the configured ones.
std::uint64_t cohort_seed(const ExperimentConfig& c, int n);
std::uint64_t training_seed(const ExperimentConfig& c, int n, NetworkRole role);
std::uint64_t search_seed(const ExperimentConfig& c, int n, NetworkRole role);

/// Runs pipeline stages against one run directory. Each stage skips work whose
/// outputs exist and whose stamp (a hash of every input that determines them,
/// chained through upstream stamps) matches, so partial pipelines resume and
/// reruns leave artifacts untouched.
class Pipeline {
 public:
  explicit Pipeline(ExperimentConfig config);

  const ExperimentConfig& config() const { return config_; }
  const RunPaths& paths() const { return paths_; }
  const std::vector<StageRecord>& records() const { return records_; }

  void simulate(Strategy strategy = Strategy::NaturalCourse);
  void truth();
  void fit_parametric();
  void search_dl();
  void fit_dl();
  void estimate();
  void evaluate();
  void report();
  /// Every stage in order, then manifest.json.
  void run();

  nlohmann::ordered_json manifest() const;

 private:
  ExperimentConfig config_;
  RunPaths paths_;
  std::vector<StageRecord> records_;

  std::string key_cohort(int n, Strategy s = Strategy::NaturalCourse) const;
  std::string key_truth(Strategy s) const;
  std::string key_parametric(int n, FeatureSpec spec) const;
  std::string key_search(int n, NetworkRole role) const;
  std::string key_deep(int n) const;
  std::string key_estimate(int n, const Method& m) const;
  std::string key_evaluation() const;
  std::string key_report() const;
  std::string key_fit(int n, const Method& m) const;

  NetworkConfig network_for(int n, NetworkRole role) const;

  bool fresh(const std::string& id, const std::string& key, const std::vector<std::filesystem::path>& outputs) const;
  void stamp(const std::string& id, const std::string& key) const;
  template <typename Fn>
  void stage(const std::string& name, const std::string& id, const std::string& key,
             const std::vector<std::filesystem::path>& outputs, Fn&& work);
};

}  // namespace gnice::pipeline
