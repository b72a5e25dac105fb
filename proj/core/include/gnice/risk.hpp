#pragma once

#include <optional>
#include <span>
#include <vector>

namespace gnice {

/// Cumulative incidence by month: values[k-1] is the risk by month k, k = 1..K.
/// Invariant: every value lies in [0,1] and the sequence is non-decreasing.
class RiskCurve {
 public:
  RiskCurve() = default;
  /// Throws std::domain_error if the invariant does not hold.
  explicit RiskCurve(std::vector<double> values);

  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  /// Risk by month k (1-based).
  double at_month(int k) const { return values_.at(static_cast<std::size_t>(k - 1)); }
  double operator[](std::size_t i) const { return values_[i]; }

  bool operator==(const RiskCurve&) const = default;

 private:
  std::vector<double> values_;
};

/// Risk-scale contrasts of always-treat against never-treat, month by month.
/// rr[i] is empty where the never-treat risk is zero.
struct EffectCurve {
  std::vector<double> rd;
  std::vector<std::optional<double>> rr;

  std::size_t size() const { return rd.size(); }
};

/// risk_k = 1 - prod_{s<=k} (1 - h_s). Throws std::domain_error for hazards
/// outside [0,1] or NaN.
RiskCurve cumulative_incidence(std::span<const double> hazards);

}  // namespace gnice
