#include <gtest/gtest.h>

#include <algorithm>

#include "gnice/features.hpp"

namespace gnice {
namespace {

const Baseline kBase{1, 40.0, 2};
const std::vector<MonthRecord> kRecords{
    {500, 60, 0, 1}, {520, 55, 1, 1}, {480, 50, 1, 0}, {470, 45, 0, 1}, {460, 44, 0, 1}};

double feature(FeatureSpec spec, Target target, int k, const std::string& name, std::size_t months) {
  const HistoryView h{kBase, std::span(kRecords).first(months)};
  const auto names = feature_names(spec, target);
  const auto values = build_features(h, k, spec, target);
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw std::out_of_range("no feature " + name);
  return values[static_cast<std::size_t>(it - names.begin())];
}

TEST(Features, Lag1AtMonthZeroHasNoLaggedTreatment) {
  for (const auto target : {Target::Insti, Target::Event})
    EXPECT_EQ(feature(FeatureSpec::Lag1, target, 0, "insti_lag", 1), 0.0);
}

TEST(Features, CumulativeAverageAtMonthOneEqualsMonthZero) {
  EXPECT_EQ(feature(FeatureSpec::LagPlusCumAvg, Target::Cd4, 1, "cd4_cummean", 1), 500.0);
  EXPECT_EQ(feature(FeatureSpec::LagPlusCumAvg, Target::Rna, 1, "rna_cummean", 1), 60.0);
  EXPECT_EQ(feature(FeatureSpec::LagPlusCumAvg, Target::HighBmi, 1, "high_bmi_cummean", 1), 0.0);
  EXPECT_EQ(feature(FeatureSpec::LagPlusCumAvg, Target::Event, 1, "insti_cummean", 2), 1.0);
}

TEST(Features, CumulativeAverageOverSeveralMonths) {
  EXPECT_DOUBLE_EQ(feature(FeatureSpec::LagPlusCumAvg, Target::Cd4, 3, "cd4_cummean", 3), 500.0);
  EXPECT_DOUBLE_EQ(feature(FeatureSpec::LagPlusCumAvg, Target::Event, 4, "insti_cummean", 5), 0.75);
}

TEST(Features, DgpMatchedCd4CarriesTheSquareAndAgeInteraction) {
  // Lagged month is 2: cd4 480, rna 50, high_bmi 1, insti 0.
  const auto spec = FeatureSpec::DgpMatched;
  EXPECT_EQ(feature(spec, Target::Cd4, 3, "cd4_lag", 3), 480.0);
  EXPECT_EQ(feature(spec, Target::Cd4, 3, "cd4_lag_sq", 3), 480.0 * 480.0);
  EXPECT_EQ(feature(spec, Target::Cd4, 3, "cd4_lag:age", 3), 480.0 * 40.0);
  EXPECT_EQ(feature(spec, Target::Cd4, 3, "high_bmi_lag:rna_lag", 3), 50.0);
  EXPECT_EQ(feature(spec, Target::Cd4, 3, "high_bmi_lag:sex", 3), 1.0);
  EXPECT_EQ(feature(spec, Target::Cd4, 3, "early:cd4_lag", 3), 480.0);
  EXPECT_EQ(feature(spec, Target::Cd4, 3, "age_sq", 3), 1600.0);
}

TEST(Features, EveryVectorStartsWithTheSharedTerms) {
  for (const auto spec : {FeatureSpec::DgpMatched, FeatureSpec::Lag1, FeatureSpec::LagPlusCumAvg})
    for (const auto target : kAllTargets) {
      const auto names = feature_names(spec, target);
      ASSERT_GE(names.size(), 7u);
      EXPECT_EQ(std::vector<std::string>(names.begin(), names.begin() + 7),
                (std::vector<std::string>{"intercept", "sex", "age", "smoking", "k", "k_sq", "early"}));
      EXPECT_EQ(feature_count(spec, target), names.size());
    }
  EXPECT_EQ(feature(FeatureSpec::Lag1, Target::Cd4, 3, "k_sq", 3), 9.0);
  EXPECT_EQ(feature(FeatureSpec::Lag1, Target::Cd4, 3, "early", 3), 1.0);
}

TEST(Features, EarlyIndicatorSwitchesAfterMonthFive) {
  std::vector<MonthRecord> long_history(8, MonthRecord{500, 50, 0, 0});
  const HistoryView h{kBase, long_history};
  const auto names = feature_names(FeatureSpec::Lag1, Target::Event);
  const auto idx = static_cast<std::size_t>(std::find(names.begin(), names.end(), "early") - names.begin());
  EXPECT_EQ(build_features(h, 5, FeatureSpec::Lag1, Target::Event)[idx], 1.0);
  EXPECT_EQ(build_features(h, 6, FeatureSpec::Lag1, Target::Event)[idx], 0.0);
}

TEST(Features, TreatmentFeaturesIgnoreTheCurrentTreatment) {
  std::vector<MonthRecord> a = kRecords, b = kRecords;
  b[2].insti = 1 - b[2].insti;
  for (const auto spec : {FeatureSpec::DgpMatched, FeatureSpec::Lag1, FeatureSpec::LagPlusCumAvg})
    EXPECT_EQ(build_features({kBase, std::span(a).first(3)}, 2, spec, Target::Insti),
              build_features({kBase, std::span(b).first(3)}, 2, spec, Target::Insti));
}

TEST(Features, ShortHistoryIsRejected) {
  const HistoryView h{kBase, std::span(kRecords).first(2)};
  EXPECT_THROW(build_features(h, 3, FeatureSpec::Lag1, Target::Cd4), std::invalid_argument);
  EXPECT_THROW(build_features(h, 2, FeatureSpec::Lag1, Target::Event), std::invalid_argument);
  std::vector<double> wrong(3);
  EXPECT_THROW(build_features(h, 1, FeatureSpec::Lag1, Target::Event, wrong), std::invalid_argument);
}

TEST(Features, SpecNamesRoundTrip) {
  for (const auto spec : {FeatureSpec::DgpMatched, FeatureSpec::Lag1, FeatureSpec::LagPlusCumAvg})
    EXPECT_EQ(parse_feature_spec(to_string(spec)), spec);
  EXPECT_THROW(parse_feature_spec("lag2"), std::invalid_argument);
}

}  // namespace
}  // namespace gnice
