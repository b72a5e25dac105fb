#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gnice {

/// Follow-up length used throughout the reference experiments (months).
inline constexpr int kDefaultHorizon = 60;

/// First month of the late regime; months 0..5 follow the early-treatment equations.
inline constexpr int kRegimeSwitchMonth = 6;

inline constexpr bool in_early_regime(int k) { return k < kRegimeSwitchMonth; }

/// Time-fixed covariates measured at baseline.
struct Baseline {
  int sex = 0;      // 1 = male
  double age = 0.0; // years
  int smoking = 0;  // 0 never, 1 current, 2 former

  bool operator==(const Baseline&) const = default;
};

/// One person-month: time-varying covariates and treatment at month k.
struct MonthRecord {
  double cd4 = 0.0;
  double rna = 0.0;
  int high_bmi = 0;
  int insti = 0;

  bool operator==(const MonthRecord&) const = default;
};

enum class CovariateKind { Binary, Continuous, Categorical };

struct CovariateField {
  std::string_view name;
  CovariateKind kind;
};

/// Names and kinds of every column plus the follow-up horizon. Identical for all
/// persons in a cohort.
struct CovariateSchema {
  static constexpr CovariateField kBaseline[] = {
      {"sex", CovariateKind::Binary},
      {"age", CovariateKind::Continuous},
      {"smoking", CovariateKind::Categorical},
  };
  static constexpr CovariateField kTimeVarying[] = {
      {"cd4", CovariateKind::Continuous},
      {"rna", CovariateKind::Continuous},
      {"high_bmi", CovariateKind::Binary},
  };
  static constexpr CovariateField kTreatment{"insti", CovariateKind::Binary};
  static constexpr CovariateField kOutcome{"event", CovariateKind::Binary};

  int horizon = kDefaultHorizon;

  bool operator==(const CovariateSchema&) const = default;
};

/// Longitudinal record of one person. `records[k]` holds month k; the list ends at
/// min(K-1, event_time-1). An event at step k sets event_time = k+1.
struct PersonTrajectory {
  std::int64_t id = 0;
  Baseline baseline;
  std::vector<MonthRecord> records;
  std::optional<int> event_time;

  int last_month() const { return static_cast<int>(records.size()) - 1; }
  bool had_event() const { return event_time.has_value(); }

  bool operator==(const PersonTrajectory&) const = default;
};

enum class ScenarioTag { Simple, Complex, External };

std::string_view to_string(ScenarioTag tag);
ScenarioTag parse_scenario_tag(std::string_view text);

/// A validated collection of trajectories sharing one schema.
class Cohort {
 public:
  Cohort(CovariateSchema schema, std::vector<PersonTrajectory> persons,
         ScenarioTag tag = ScenarioTag::External);

  const CovariateSchema& schema() const { return schema_; }
  int horizon() const { return schema_.horizon; }
  std::span<const PersonTrajectory> persons() const { return persons_; }
  std::size_t size() const { return persons_.size(); }
  const PersonTrajectory& operator[](std::size_t i) const { return persons_[i]; }
  ScenarioTag tag() const { return tag_; }

  /// Number of person-months across all trajectories.
  std::size_t person_months() const;

  bool operator==(const Cohort&) const = default;

 private:
  CovariateSchema schema_;
  std::vector<PersonTrajectory> persons_;
  ScenarioTag tag_;
};

enum class Strategy { NaturalCourse, AlwaysTreat, NeverTreat };

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view text);

inline constexpr Strategy kAllStrategies[] = {Strategy::NaturalCourse, Strategy::AlwaysTreat,
                                              Strategy::NeverTreat};

/// Treatment forced by a static strategy, or nullopt for the natural course.
inline std::optional<int> forced_treatment(Strategy s) {
  switch (s) {
    case Strategy::AlwaysTreat: return 1;
    case Strategy::NeverTreat: return 0;
    case Strategy::NaturalCourse: return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace gnice
