#pragma once

#include <memory>
#include <string>

#include "gnice/features.hpp"

namespace gnice {

/// Normal(mean, sd) restricted to [lo, hi] by clamping the draw.
struct ClampedNormal {
  double mean = 0.0;
  double sd = 0.0;
  double lo = -INFINITY;
  double hi = INFINITY;
};

/// Conditional law of the month-k covariates given history through k-1.
struct CovariateDistribution {
  ClampedNormal cd4;
  ClampedNormal rna;
  double high_bmi_prob = 0.0;
};

/// Per-history scratch space an implementation may keep between calls
/// (e.g. recurrent state).
class ModelState {
 public:
  virtual ~ModelState() = default;
};

/// Anything that supplies the conditional densities of the g-formula: covariates,
/// treatment and discrete-time hazard given a history.
///
/// Call-order contract for a given state object: all calls for month k happen
/// after all calls for months < k; within a month the order is covariate_step,
/// treatment_prob, hazard, and any of them may be skipped. Implementations must
/// be safe for concurrent calls with distinct state objects.
class ModelSet {
 public:
  virtual ~ModelSet() = default;

  virtual std::unique_ptr<ModelState> make_state() const { return nullptr; }

  /// history.records holds months 0..k-1.
  virtual CovariateDistribution covariate_step(const HistoryView& history, int k, ModelState* state) const = 0;
  /// P(treated at k). history.records holds months 0..k; the month-k treatment is ignored.
  virtual double treatment_prob(const HistoryView& history, int k, ModelState* state) const = 0;
  /// P(event at step k | event-free, history through k). history.records holds months 0..k.
  virtual double hazard(const HistoryView& history, int k, ModelState* state) const = 0;

  virtual std::string describe() const = 0;
};

}  // namespace gnice
