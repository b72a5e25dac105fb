#include <gtest/gtest.h>

#include <map>

#include "gnice/parametric.hpp"
#include "gnice/simulator.hpp"
#include "support/oracles.hpp"

namespace gnice {
namespace {

Cohort two_person_cohort() {
  PersonTrajectory a;
  a.id = 1;
  a.baseline = {1, 40, 0};
  a.records = {{500, 50, 0, 0}, {510, 52, 1, 1}, {505, 48, 1, 1}};
  a.event_time = 3;
  PersonTrajectory b;
  b.id = 2;
  b.baseline = {0, 60, 1};
  b.records = {{450, 60, 0, 1}, {440, 61, 0, 1}, {430, 62, 0, 0}, {420, 63, 1, 0}};
  return Cohort(CovariateSchema{4}, {a, b});
}

TEST(BuildDesign, EventRowsStopAtTheEvent) {
  const auto d = build_design(two_person_cohort(), FeatureSpec::Lag1, Target::Event);
  ASSERT_EQ(d.X.rows(), 7);
  EXPECT_EQ(d.person_ids, (std::vector<std::int64_t>{1, 1, 1, 2, 2, 2, 2}));
  EXPECT_EQ(d.months, (std::vector<int>{0, 1, 2, 0, 1, 2, 3}));
  EXPECT_EQ(std::vector<double>(d.y.data(), d.y.data() + d.y.size()), (std::vector<double>{0, 0, 1, 0, 0, 0, 0}));
}

TEST(BuildDesign, CovariateRowsStartAtMonthOne) {
  const auto d = build_design(two_person_cohort(), FeatureSpec::Lag1, Target::Cd4);
  EXPECT_EQ(d.months, (std::vector<int>{1, 2, 1, 2, 3}));
  EXPECT_EQ(d.y[0], 510.0);
  const auto t = build_design(two_person_cohort(), FeatureSpec::Lag1, Target::Insti);
  EXPECT_EQ(t.X.rows(), 7);
  EXPECT_EQ(t.y[3], 1.0);
}

TEST(BuildDesign, NoRowFollowsAnEventInASimulatedCohort) {
  const auto c = simulate_cohort({ScenarioKind::Simple}, 500, 60, Strategy::NaturalCourse, 9);
  std::map<std::int64_t, std::optional<int>> event_of;
  for (const auto& p : c.persons()) event_of[p.id] = p.event_time;
  for (const auto t : kAllTargets) {
    const auto d = build_design(c, FeatureSpec::LagPlusCumAvg, t);
    for (std::size_t i = 0; i < d.months.size(); ++i) {
      const auto e = event_of.at(d.person_ids[i]);
      if (e) ASSERT_LT(d.months[i], *e) << to_string(t);
      if (t == Target::Event) ASSERT_EQ(d.y[static_cast<Eigen::Index>(i)], e && d.months[i] == *e - 1 ? 1.0 : 0.0);
    }
  }
}

class FittedModelSet : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    cohort_ = new Cohort(simulate_cohort({ScenarioKind::Simple}, 1000, 60, Strategy::NaturalCourse, 5));
    model_ = new ParametricModelSet(fit_parametric_modelset(*cohort_, FeatureSpec::LagPlusCumAvg));
  }
  static void TearDownTestSuite() {
    delete model_;
    delete cohort_;
  }
  static Cohort* cohort_;
  static ParametricModelSet* model_;
};
Cohort* FittedModelSet::cohort_ = nullptr;
ParametricModelSet* FittedModelSet::model_ = nullptr;

TEST_F(FittedModelSet, JsonRoundTripPreservesEveryCoefficient) {
  const auto doc = model_->to_json();
  const auto back = ParametricModelSet::from_json(nlohmann::json::parse(doc.dump()));
  EXPECT_EQ(back.to_json().dump(), doc.dump());
  EXPECT_EQ(back.event().coefficients, model_->event().coefficients);
  EXPECT_EQ(back.cd4().residual_sd, model_->cd4().residual_sd);

  const auto path = testing::scratch_dir("parametric_roundtrip") / "model.json";
  model_->save(path);
  EXPECT_EQ(ParametricModelSet::load(path).to_json().dump(), doc.dump());
}

TEST_F(FittedModelSet, LoadRejectsForeignDocuments) {
  EXPECT_THROW(ParametricModelSet::from_json(nlohmann::json{{"format", "other"}}), std::exception);
  auto doc = nlohmann::json::parse(model_->to_json().dump());
  doc["version"] = kParametricFormatVersion + 1;
  EXPECT_THROW(ParametricModelSet::from_json(doc), std::runtime_error);
  EXPECT_THROW(ParametricModelSet::load(testing::scratch_dir("parametric_missing") / "none.json"), std::runtime_error);
}

TEST_F(FittedModelSet, ExposesTheModelSetContract) {
  const auto& p = (*cohort_)[0];
  const int k = std::min(3, p.last_month());
  const HistoryView before{p.baseline, std::span(p.records).first(static_cast<std::size_t>(k))};
  const HistoryView through{p.baseline, std::span(p.records).first(static_cast<std::size_t>(k + 1))};
  const ModelSet& m = *model_;
  const auto d = m.covariate_step(before, k, nullptr);
  EXPECT_GT(d.cd4.sd, 0.0);
  EXPECT_EQ(d.cd4.lo, model_->cd4().range_min);
  EXPECT_EQ(d.cd4.hi, model_->cd4().range_max);
  EXPECT_GE(d.high_bmi_prob, 0.0);
  EXPECT_LE(d.high_bmi_prob, 1.0);
  const double a = m.treatment_prob(through, k, nullptr);
  const double h = m.hazard(through, k, nullptr);
  EXPECT_TRUE(a >= 0.0 && a <= 1.0);
  EXPECT_TRUE(h >= 0.0 && h <= 1.0);
  EXPECT_NE(m.describe().find("lag_cumavg"), std::string::npos);
}

TEST_F(FittedModelSet, ThreadCountDoesNotChangeTheFit) {
  ParametricFitOptions opt;
  opt.threads = 5;
  const auto parallel = fit_parametric_modelset(*cohort_, FeatureSpec::LagPlusCumAvg, opt);
  EXPECT_EQ(parallel.to_json().dump(), model_->to_json().dump());
}

TEST(ParametricRecovery, Cd4CoefficientsWithinThreeStandardErrorsOfTheGenerator) {
  // Generator coefficients of the month-k CD4 mean (late regime, plus the
  // early-regime differences), with the unmeasured confounder switched off.
  const std::map<std::string, double> truth{
      {"intercept", 0.0},      {"sex", 0.7},         {"age", -0.8},          {"smoking", 0.6},
      {"k", 0.0},              {"k_sq", 0.0},        {"early", 0.0},         {"age_sq", -0.05},
      {"cd4_lag", 1.8},        {"cd4_lag_sq", 0.008}, {"rna_lag", -1.0},      {"high_bmi_lag", -0.1},
      {"insti_lag", 0.05},     {"high_bmi_lag:rna_lag", 0.1}, {"high_bmi_lag:sex", 0.08},
      {"cd4_lag:age", -0.1},   {"early:cd4_lag", 0.2}, {"early:cd4_lag_sq", -0.003}};
  const auto cohort = simulate_cohort({ScenarioKind::Simple, false}, 10000, 60, Strategy::NaturalCourse, 101);
  const auto design = build_design(cohort, FeatureSpec::DgpMatched, Target::Cd4);
  const auto model = fit_linear(design.X, design.y);
  const auto se = standard_errors(design.X, model);
  const auto names = feature_names(FeatureSpec::DgpMatched, Target::Cd4);
  ASSERT_EQ(names.size(), truth.size());
  for (std::size_t j = 0; j < names.size(); ++j) {
    const auto i = static_cast<Eigen::Index>(j);
    EXPECT_LE(std::abs(model.coefficients[i] - truth.at(names[j])), 3.0 * se[i])
        << names[j] << ": estimate " << model.coefficients[i] << ", se " << se[i];
  }
}

}  // namespace
}  // namespace gnice
