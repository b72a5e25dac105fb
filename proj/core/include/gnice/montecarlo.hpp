#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "gnice/model_set.hpp"
#include "gnice/risk.hpp"
#include "gnice/rng.hpp"

namespace gnice {

/// Baseline covariates plus the month-0 time-varying covariates, resampled
/// jointly from observed data. The month-0 treatment field is not used.
struct BaselineRow {
  Baseline baseline;
  MonthRecord month0;
};

/// One row per person: baseline and month-0 covariates.
std::vector<BaselineRow> baseline_rows(const Cohort& cohort);

struct MonteCarloConfig {
  int n_samples = 10000;
  int horizon = kDefaultHorizon;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct ClampCounts {
  std::int64_t cd4_low = 0, cd4_high = 0, rna_low = 0, rna_high = 0;

  std::int64_t total() const { return cd4_low + cd4_high + rna_low + rna_high; }
  ClampCounts& operator+=(const ClampCounts& o);
};

struct SimulatedHistory {
  Baseline baseline;
  /// Months 0..K-1; insti is the assigned or sampled treatment.
  std::vector<MonthRecord> records;
  /// hazards[k] = P(event at step k | event-free through k), k = 0..K-1.
  std::vector<double> hazards;

  RiskCurve risk() const { return cumulative_incidence(hazards); }
};

/// Simulates months 0..K-1 under `strategy`. Month-0 covariates come from `start`;
/// later covariates from model.covariate_step. Draw order per month is cd4, rna,
/// high_bmi (months >= 1 only), then one treatment uniform that is consumed under
/// every strategy, so paired runs share random numbers. Trajectories are never
/// terminated: hazards are accumulated analytically.
/// Throws NumericError if the model returns a non-finite value or a probability
/// outside [0,1].
SimulatedHistory simulate_history(const ModelSet& model, const BaselineRow& start, Strategy strategy, int horizon,
                                  RngStream& rng, ClampCounts* clamps = nullptr);

struct RiskEstimate {
  RiskCurve risk;
  /// Monte Carlo standard error of risk by month: sd over histories / sqrt(n).
  std::vector<double> mc_se;
  ClampCounts clamps;
  Strategy strategy = Strategy::NaturalCourse;
  MonteCarloConfig config;
  double seconds = 0.0;
};

/// Average cumulative incidence over n_samples simulated histories. History m
/// uses RNG stream m of config.seed and first draws its start row uniformly with
/// replacement from `starts`. The result does not depend on config.threads.
RiskEstimate estimate_risk(const ModelSet& model, std::span<const BaselineRow> starts, Strategy strategy,
                           const MonteCarloConfig& config);
RiskEstimate estimate_risk(const ModelSet& model, const Cohort& cohort, Strategy strategy,
                           const MonteCarloConfig& config);

/// Simulated natural-course risk minus the cohort's empirical risk, months 1..K.
std::vector<double> natural_course_diagnostic(const ModelSet& model, const Cohort& cohort,
                                              const MonteCarloConfig& config);

/// CSV with header `k,risk,mc_se`, k = 1..K.
void write_risk_csv(const RiskCurve& risk, std::span<const double> mc_se, const std::filesystem::path& path);
void write_risk_csv(const RiskCurve& risk, std::span<const double> mc_se, std::ostream& out);
struct RiskTable {
  RiskCurve risk;
  std::vector<double> mc_se;
};
RiskTable read_risk_csv(const std::filesystem::path& path);
RiskTable read_risk_csv(std::istream& in);

/// Run record for one estimate: model id, strategy, seeds, clamp counts, timing.
nlohmann::ordered_json estimate_manifest(const RiskEstimate& estimate, const std::string& model_id);

}  // namespace gnice
