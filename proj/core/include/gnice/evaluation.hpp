#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gnice/risk.hpp"

namespace gnice {

/// Signed per-month bias (estimate - truth) with its time averages.
/// Invariant: |mean| <= mean_abs.
struct BiasSeries {
  std::vector<double> per_k;
  double mean_abs = 0.0;
  double mean = 0.0;
};

/// Throws std::invalid_argument if the curves differ in length.
BiasSeries risk_bias(const RiskCurve& estimated, const RiskCurve& truth);

/// rd = always - never; rr = always / never where never > 0.
EffectCurve effects(const RiskCurve& always, const RiskCurve& never);

/// Risk-ratio bias over a restricted month set. per_k is empty outside `months`.
struct RatioBias {
  std::vector<std::optional<double>> per_k;
  std::vector<std::size_t> months;  // 0-based indices averaged over
  std::size_t excluded = 0;
  double mean_abs = 0.0;
  double mean = 0.0;
};

struct EffectBias {
  BiasSeries rd;
  RatioBias rr;
};

/// Months (0-based) where every listed curve has a defined risk ratio.
std::vector<std::size_t> common_rr_months(std::span<const EffectCurve> curves);

/// RR bias averages over the months where both ratios are defined.
EffectBias effect_bias(const EffectCurve& estimated, const EffectCurve& truth);
/// RR bias averages over `rr_months`; each listed month must be defined in both
/// curves (std::invalid_argument otherwise).
EffectBias effect_bias(const EffectCurve& estimated, const EffectCurve& truth, std::span<const std::size_t> rr_months);

/// Risk curves under the three strategies.
struct StrategyRisks {
  RiskCurve natural_course, always_treat, never_treat;
};

struct ReportMeta {
  std::string scenario;  // "simple", "complex", or a free label
  int n = 0;
  std::string method;
  std::uint64_t data_seed = 0, train_seed = 0, mc_seed = 0;
};

struct BiasReport {
  ReportMeta meta;
  StrategyRisks estimated, truth;
  EffectCurve estimated_effect, truth_effect;
  BiasSeries natural_course, always_treat, never_treat;
  EffectBias effect;
};

struct MethodRisks {
  std::string method;
  StrategyRisks risks;
};

/// One report per method against a shared truth. The RR month set is the
/// intersection over the truth and every method, so all rows of one table
/// average over the same months. `meta.method` is overwritten per method.
std::vector<BiasReport> compare_methods(const StrategyRisks& truth, std::span<const MethodRisks> methods,
                                        const ReportMeta& meta);

struct RenderOptions {
  bool svg = false;
};

/// Writes into `dir`:
///  - bias_summary.csv: one row per report (header only when empty);
///  - table_<scenario>_<n>.md and .csv: mean absolute biases at three decimals,
///    one row per method in input order;
///  - fig_<scenario>_<n>_<quantity>.csv for quantity in natural_course,
///    always_treat, never_treat, rd, rr: columns k, truth, one per method;
///  - the matching .svg line charts when requested.
/// Output bytes depend only on the reports. Returns the written paths.
std::vector<std::filesystem::path> render_report(std::span<const BiasReport> reports,
                                                 const std::filesystem::path& dir, const RenderOptions& options = {});

}  // namespace gnice
