#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "gnice/glm.hpp"
#include "gnice/model_set.hpp"

namespace gnice {

/// Pooled person-time design for one target.
struct Design {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<std::int64_t> person_ids;
  std::vector<int> months;
};

/// Risk-set rows for `target`: covariate models use months 1..T (month 0 is
/// resampled from the data, never modelled); treatment and event models use months
/// 0..T. Only event-free person-time through the row's month is included.
Design build_design(const Cohort& cohort, FeatureSpec spec, Target target);

/// Gaussian-linear models for CD4 and RNA, logistic models for high BMI,
/// treatment and the event, all over one feature specification.
class ParametricModelSet final : public ModelSet {
 public:
  ParametricModelSet(FeatureSpec spec, LinearModel cd4, LinearModel rna, LogisticModel high_bmi,
                     LogisticModel insti, LogisticModel event);

  FeatureSpec spec() const { return spec_; }
  const LinearModel& cd4() const { return cd4_; }
  const LinearModel& rna() const { return rna_; }
  const LogisticModel& high_bmi() const { return high_bmi_; }
  const LogisticModel& insti() const { return insti_; }
  const LogisticModel& event() const { return event_; }

  CovariateDistribution covariate_step(const HistoryView& history, int k, ModelState* state) const override;
  double treatment_prob(const HistoryView& history, int k, ModelState* state) const override;
  double hazard(const HistoryView& history, int k, ModelState* state) const override;
  std::string describe() const override;

  nlohmann::ordered_json to_json() const;
  static ParametricModelSet from_json(const nlohmann::json& doc);
  void save(const std::filesystem::path& path) const;
  static ParametricModelSet load(const std::filesystem::path& path);

 private:
  FeatureSpec spec_;
  LinearModel cd4_, rna_;
  LogisticModel high_bmi_, insti_, event_;
};

struct ParametricFitOptions {
  LogisticFitOptions logistic;
  /// Models are independent; up to five are fitted concurrently.
  int threads = 1;
};

ParametricModelSet fit_parametric_modelset(const Cohort& cohort, FeatureSpec spec, ParametricFitOptions options = {});

inline constexpr int kParametricFormatVersion = 1;

/// Coefficient standard errors: sigma^2 (X'X)^-1 for the linear model and
/// (X'WX)^-1 for the logistic model, with zero for aliased columns.
Eigen::VectorXd standard_errors(const Eigen::MatrixXd& X, const LinearModel& model);
Eigen::VectorXd standard_errors(const Eigen::MatrixXd& X, const LogisticModel& model);

}  // namespace gnice
