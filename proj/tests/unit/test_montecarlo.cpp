#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "gnice/errors.hpp"
#include "gnice/montecarlo.hpp"
#include "support/toy_model.hpp"

namespace gnice {
namespace {

/// Constant hazard, arbitrary covariates.
class ConstantHazard final : public ModelSet {
 public:
  explicit ConstantHazard(double h, double bad = 0.0) : h_(h), bad_(bad) {}
  CovariateDistribution covariate_step(const HistoryView&, int, ModelState*) const override {
    return {{480.0, 40.0, 300.0, 700.0}, {55.0, 5.0, 20.0, 90.0}, 0.3};
  }
  double treatment_prob(const HistoryView&, int k, ModelState*) const override { return k == 2 ? 0.5 + bad_ : 0.5; }
  double hazard(const HistoryView&, int, ModelState*) const override { return h_; }
  std::string describe() const override { return "constant"; }

 private:
  double h_, bad_;
};

BaselineRow start_row() { return {{1, 40.0, 0}, {450.0, 50.0, 0, 0}}; }

TEST(SimulateHistory, ConstantHazardGivesOneMinusPowerCurve) {
  RngStream rng(1);
  const auto h = simulate_history(ConstantHazard(0.1), start_row(), Strategy::NaturalCourse, 10, rng);
  const auto r = h.risk();
  for (int k = 1; k <= 10; ++k) EXPECT_NEAR(r.at_month(k), 1.0 - std::pow(0.9, k), 1e-14);
}

TEST(SimulateHistory, AlwaysTreatSetsEveryMonth) {
  RngStream rng(2);
  const auto h = simulate_history(ConstantHazard(0.1), start_row(), Strategy::AlwaysTreat, 12, rng);
  ASSERT_EQ(h.records.size(), 12u);
  for (const auto& r : h.records) EXPECT_EQ(r.insti, 1);
  EXPECT_EQ(h.records[0].cd4, 450.0);
}

TEST(SimulateHistory, SameStreamSameHistory) {
  RngStream a(5, 3), b(5, 3);
  const auto x = simulate_history(ConstantHazard(0.1), start_row(), Strategy::NaturalCourse, 20, a);
  const auto y = simulate_history(ConstantHazard(0.1), start_row(), Strategy::NaturalCourse, 20, b);
  EXPECT_EQ(x.records, y.records);
  EXPECT_EQ(x.hazards, y.hazards);
}

TEST(SimulateHistory, ClampsAreCountedAndRespected) {
  RngStream rng(4);
  ClampCounts c;
  const auto h = simulate_history(ConstantHazard(0.0), start_row(), Strategy::NaturalCourse, 60, rng, &c);
  for (std::size_t k = 1; k < h.records.size(); ++k) {
    EXPECT_GE(h.records[k].cd4, 300.0);
    EXPECT_LE(h.records[k].rna, 90.0);
  }
  EXPECT_EQ(c.total(), c.cd4_low + c.cd4_high + c.rna_low + c.rna_high);
}

TEST(SimulateHistory, InvalidModelOutputRaisesNumericError) {
  RngStream rng(1);
  EXPECT_THROW(simulate_history(ConstantHazard(NAN), start_row(), Strategy::NeverTreat, 3, rng), NumericError);
  EXPECT_THROW(simulate_history(ConstantHazard(1.5), start_row(), Strategy::NeverTreat, 3, rng), NumericError);
  EXPECT_THROW(simulate_history(ConstantHazard(0.1, 0.7), start_row(), Strategy::NaturalCourse, 3, rng),
               NumericError);
  // The forced strategies never consult the faulty treatment model.
  EXPECT_NO_THROW(simulate_history(ConstantHazard(0.1, 0.7), start_row(), Strategy::AlwaysTreat, 3, rng));
}

TEST(EstimateRisk, SingleSampleEqualsThatHistory) {
  const auto starts = testing::toy_starts(3, 2);
  const testing::ToyModelSet toy;
  MonteCarloConfig cfg{1, 3, 77, 1};
  const auto est = estimate_risk(toy, starts, Strategy::NaturalCourse, cfg);
  RngStream rng(77, 0);
  const auto& start = starts[rng.below(starts.size())];
  const auto h = simulate_history(toy, start, Strategy::NaturalCourse, 3, rng);
  EXPECT_EQ(est.risk, h.risk());
  EXPECT_EQ(est.mc_se, std::vector<double>(3, 0.0));
}

TEST(EstimateRisk, TwoPeriodToyMatchesEnumeration) {
  const testing::ToyProbabilities p;
  const testing::ToyModelSet toy(p);
  const auto starts = testing::toy_starts(6, 4);  // P(L_0 = 1) = 0.4
  for (const auto [strategy, forced] : {std::pair{Strategy::NaturalCourse, -1}, std::pair{Strategy::AlwaysTreat, 1},
                                        std::pair{Strategy::NeverTreat, 0}}) {
    const auto exact = testing::toy_exact_risk(p, 0.4, 2, forced);
    const auto est = estimate_risk(toy, starts, strategy, {40000, 2, 9, 1});
    for (std::size_t k = 0; k < 2; ++k)
      EXPECT_LE(std::abs(est.risk[k] - exact[k]), 3.0 * est.mc_se[k])
          << to_string(strategy) << " month " << k + 1 << ": " << est.risk[k] << " vs " << exact[k];
  }
}

TEST(EstimateRisk, DoublingTheSampleStaysWithinFourStandardErrors) {
  // History m always uses stream m, so the first half of the doubled run is the
  // smaller run itself.
  const testing::ToyModelSet toy;
  const auto starts = testing::toy_starts(5, 5);
  const auto half = estimate_risk(toy, starts, Strategy::NaturalCourse, {5000, 3, 21, 1});
  const auto full = estimate_risk(toy, starts, Strategy::NaturalCourse, {10000, 3, 21, 1});
  for (std::size_t k = 0; k < 3; ++k) EXPECT_LE(std::abs(full.risk[k] - half.risk[k]), 4.0 * half.mc_se[k]);
}

TEST(EstimateRisk, RejectsEmptyInputs) {
  const testing::ToyModelSet toy;
  EXPECT_THROW(estimate_risk(toy, std::span<const BaselineRow>{}, Strategy::NaturalCourse, {}), std::invalid_argument);
  EXPECT_THROW(estimate_risk(toy, testing::toy_starts(1, 1), Strategy::NaturalCourse, {0, 3, 1, 1}),
               std::invalid_argument);
}

TEST(BaselineRows, OneRowPerPersonFromMonthZero) {
  const auto c = testing::toy_cohort({}, 0.5, 50, 3, 1);
  const auto rows = baseline_rows(c);
  ASSERT_EQ(rows.size(), 50u);
  EXPECT_EQ(rows[7].month0, c[7].records[0]);
  EXPECT_EQ(rows[7].baseline, c[7].baseline);
}

TEST(NaturalCourseDiagnostic, ShrinksAsTheCohortGrows) {
  const testing::ToyProbabilities p;
  const testing::ToyModelSet toy(p);
  auto max_abs = [&](int n) {
    const auto c = testing::toy_cohort(p, 0.4, n, 3, 3);
    const auto d = natural_course_diagnostic(toy, c, {50000, 3, 4, 1});
    EXPECT_EQ(d.size(), 3u);
    double m = 0;
    for (const double v : d) m = std::max(m, std::abs(v));
    return m;
  };
  const double small = max_abs(300), large = max_abs(30000);
  EXPECT_LT(large, small);
  EXPECT_LT(large, 0.01);
}

TEST(NaturalCourseDiagnostic, RejectsMismatchedHorizon) {
  const testing::ToyModelSet toy;
  EXPECT_THROW(natural_course_diagnostic(toy, testing::toy_cohort({}, 0.5, 10, 3, 1), {100, 4, 1, 1}),
               std::invalid_argument);
}

TEST(RiskCsv, RoundTripsExactly) {
  const RiskCurve r({0.1, 0.1 + 1e-17, 0.30000000000000004});
  const std::vector<double> se{0.001, 0.0, 1.0 / 3.0};
  std::stringstream io;
  write_risk_csv(r, se, io);
  EXPECT_EQ(io.str().substr(0, 12), "k,risk,mc_se");
  const auto back = read_risk_csv(io);
  EXPECT_EQ(back.risk, r);
  EXPECT_EQ(back.mc_se, se);
}

TEST(RiskCsv, RejectsMalformedInput) {
  std::istringstream bad_header("k,risk\n1,0.1\n");
  EXPECT_THROW(read_risk_csv(bad_header), std::runtime_error);
  std::istringstream bad_order("k,risk,mc_se\n2,0.1,0\n");
  EXPECT_THROW(read_risk_csv(bad_order), std::runtime_error);
  std::ostringstream out;
  EXPECT_THROW(write_risk_csv(RiskCurve({0.1}), std::vector<double>{0.1, 0.2}, out), std::invalid_argument);
}

TEST(EstimateManifest, RecordsSeedsStrategyAndClamps) {
  const testing::ToyModelSet toy;
  const auto est = estimate_risk(toy, testing::toy_starts(1, 1), Strategy::NeverTreat, {10, 3, 99, 1});
  const auto j = estimate_manifest(est, "toy");
  EXPECT_EQ(j["model"], "toy");
  EXPECT_EQ(j["strategy"], std::string(to_string(Strategy::NeverTreat)));
  EXPECT_EQ(j["seed"], 99u);
  EXPECT_EQ(j["n_samples"], 10);
  EXPECT_TRUE(j.contains("clamps"));
  EXPECT_TRUE(j.contains("seconds"));
}

}  // namespace
}  // namespace gnice
