#include "gnice/types.hpp"

#include <cmath>
#include <unordered_set>

namespace gnice {

std::string_view to_string(ScenarioTag tag) {
  switch (tag) {
    case ScenarioTag::Simple: return "simple";
    case ScenarioTag::Complex: return "complex";
    case ScenarioTag::External: return "external";
  }
  return "external";
}

ScenarioTag parse_scenario_tag(std::string_view text) {
  if (text == "simple") return ScenarioTag::Simple;
  if (text == "complex") return ScenarioTag::Complex;
  if (text == "external") return ScenarioTag::External;
  throw std::invalid_argument("unknown scenario '" + std::string(text) + "'");
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::NaturalCourse: return "natural";
    case Strategy::AlwaysTreat: return "always";
    case Strategy::NeverTreat: return "never";
  }
  return "natural";
}

Strategy parse_strategy(std::string_view text) {
  if (text == "natural") return Strategy::NaturalCourse;
  if (text == "always") return Strategy::AlwaysTreat;
  if (text == "never") return Strategy::NeverTreat;
  throw std::invalid_argument("unknown strategy '" + std::string(text) + "'");
}

namespace {

void validate_person(const PersonTrajectory& p, int horizon) {
  const auto where = [&] { return " (person " + std::to_string(p.id) + ")"; };
  if (p.records.empty()) throw std::invalid_argument("trajectory has no records" + where());
  if (!std::isfinite(p.baseline.age)) throw std::invalid_argument("non-finite age" + where());
  if (p.baseline.sex != 0 && p.baseline.sex != 1) throw std::invalid_argument("sex must be 0/1" + where());
  if (p.baseline.smoking < 0 || p.baseline.smoking > 2)
    throw std::invalid_argument("smoking must be 0, 1 or 2" + where());
  for (const auto& r : p.records) {
    if (!std::isfinite(r.cd4) || !std::isfinite(r.rna))
      throw std::invalid_argument("non-finite covariate" + where());
    if ((r.high_bmi != 0 && r.high_bmi != 1) || (r.insti != 0 && r.insti != 1))
      throw std::invalid_argument("binary field outside {0,1}" + where());
  }
  const int n = static_cast<int>(p.records.size());
  if (p.event_time) {
    if (*p.event_time < 1 || *p.event_time > horizon)
      throw std::invalid_argument("event_time outside 1..K" + where());
    if (n != *p.event_time) throw std::invalid_argument("records must end at event_time-1" + where());
  } else if (n != horizon) {
    throw std::invalid_argument("event-free trajectory must cover all K months" + where());
  }
}

}  // namespace

Cohort::Cohort(CovariateSchema schema, std::vector<PersonTrajectory> persons, ScenarioTag tag)
    : schema_(schema), persons_(std::move(persons)), tag_(tag) {
  if (schema_.horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (persons_.empty()) throw std::invalid_argument("cohort must be nonempty");
  std::unordered_set<std::int64_t> ids;
  ids.reserve(persons_.size());
  for (const auto& p : persons_) {
    if (!ids.insert(p.id).second)
      throw std::invalid_argument("duplicate person id " + std::to_string(p.id));
    validate_person(p, schema_.horizon);
  }
}

std::size_t Cohort::person_months() const {
  std::size_t total = 0;
  for (const auto& p : persons_) total += p.records.size();
  return total;
}

}  // namespace gnice
