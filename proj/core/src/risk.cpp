#include "gnice/risk.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace gnice {

RiskCurve::RiskCurve(std::vector<double> values) : values_(std::move(values)) {
  double prev = 0.0;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const double v = values_[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::domain_error("risk curve value out of [0,1] at month " + std::to_string(i + 1));
    }
    if (v < prev) {
      throw std::domain_error("risk curve decreases at month " + std::to_string(i + 1));
    }
    prev = v;
  }
}

RiskCurve cumulative_incidence(std::span<const double> hazards) {
  std::vector<double> risk;
  risk.reserve(hazards.size());
  double survival = 1.0;
  for (std::size_t i = 0; i < hazards.size(); ++i) {
    const double h = hazards[i];
    if (!(h >= 0.0 && h <= 1.0)) {
      throw std::domain_error("hazard out of [0,1] at month " + std::to_string(i + 1));
    }
    survival *= 1.0 - h;
    risk.push_back(1.0 - survival);
  }
  return RiskCurve(std::move(risk));
}

}  // namespace gnice
