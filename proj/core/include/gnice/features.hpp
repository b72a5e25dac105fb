#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gnice/types.hpp"

namespace gnice {

/// Covariate history as seen by a model: baseline plus months 0..size()-1.
struct HistoryView {
  const Baseline& baseline;
  std::span<const MonthRecord> records;
};

/// Parametric model families.
///  - DgpMatched: the simple-scenario equations term by term, without U.
///  - Lag1: lagged covariates and treatment only.
///  - LagPlusCumAvg: Lag1 plus the mean of each covariate and treatment over months 0..k-1.
/// Every spec also carries an intercept, the baseline covariates, k, k^2 and the
/// early-regime indicator {k <= 5}.
enum class FeatureSpec { DgpMatched, Lag1, LagPlusCumAvg };

/// What a model predicts at month k.
///  - Cd4, Rna, HighBmi: need records 0..k-1.
///  - Insti: needs records 0..k; the month-k treatment field is ignored.
///  - Event: needs records 0..k including month-k treatment.
enum class Target { Cd4, Rna, HighBmi, Insti, Event };

inline constexpr Target kAllTargets[] = {Target::Cd4, Target::Rna, Target::HighBmi, Target::Insti,
                                         Target::Event};

std::string_view to_string(FeatureSpec spec);
FeatureSpec parse_feature_spec(std::string_view text);
std::string_view to_string(Target target);

std::vector<std::string> feature_names(FeatureSpec spec, Target target);
std::size_t feature_count(FeatureSpec spec, Target target);

/// Writes the feature vector for `target` at month k into `out` (size
/// feature_count). At k = 0 there is no observed earlier month: lagged and
/// cumulative-average covariates take the month-0 values when the history holds
/// month 0 (and 0 otherwise); lagged and averaged treatment are 0.
/// Throws std::invalid_argument if the history is too short for the target.
void build_features(const HistoryView& history, int k, FeatureSpec spec, Target target, std::span<double> out);
std::vector<double> build_features(const HistoryView& history, int k, FeatureSpec spec, Target target);

}  // namespace gnice
