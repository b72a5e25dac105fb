#pragma once

#include <cstdint>
#include <vector>

#include "gnice/risk.hpp"
#include "gnice/rng.hpp"
#include "gnice/types.hpp"

namespace gnice {

enum class ScenarioKind { Simple, Complex };

/// Which data-generating process to run.
struct Scenario {
  ScenarioKind kind = ScenarioKind::Simple;
  /// false zeroes every coefficient on the unmeasured confounder U.
  bool include_u = true;
  /// Added to the outcome linear predictor. Test hook: -infinity makes every
  /// hazard exactly zero.
  double outcome_logit_offset = 0.0;

  ScenarioTag tag() const { return kind == ScenarioKind::Simple ? ScenarioTag::Simple : ScenarioTag::Complex; }
};

/// Months of simulated history before baseline.
inline constexpr int kSimplePreBaselineMonths = 1;
inline constexpr int kComplexPreBaselineMonths = 30;

struct BaselineDraw {
  int sex = 0;
  double age = 0.0;
  int smoking = 0;
  double u = 0.0;  // unmeasured confounder
};

/// One independent baseline draw: sex, age, smoking, then U.
BaselineDraw draw_baseline(RngStream& rng);
/// `n` independent draws from the same stream. Throws std::invalid_argument for n < 1.
std::vector<BaselineDraw> sample_baseline(int n, RngStream& rng);

/// Simulates one person on RNG stream `id` of `seed`. Random numbers are consumed
/// in a fixed order independent of the strategy, so static strategies sharing a
/// seed see identical baseline and pre-baseline draws.
PersonTrajectory simulate_person(const Scenario& scenario, int horizon, Strategy strategy,
                                 std::uint64_t seed, std::int64_t id);

/// Persons get ids 1..n and are simulated independently; the result does not
/// depend on `threads`.
Cohort simulate_cohort(const Scenario& scenario, int n, int horizon, Strategy strategy,
                       std::uint64_t seed, int threads = 1);

/// Empirical cumulative incidence over `n` simulated persons, without storing
/// trajectories.
RiskCurve ground_truth_risk(const Scenario& scenario, Strategy strategy, std::int64_t n, int horizon,
                            std::uint64_t seed, int threads = 1);

/// Empirical risk of a cohort: fraction with event_time <= k for k = 1..K.
RiskCurve empirical_risk(const Cohort& cohort);

}  // namespace gnice
