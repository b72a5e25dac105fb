#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>

#include "gnice/types.hpp"

namespace gnice {

/// Long-format header, one row per person-month.
inline constexpr std::string_view kCohortCsvHeader = "id,k,sex,age,smoking,cd4,rna,high_bmi,insti,event";

class CohortParseError : public std::runtime_error {
 public:
  CohortParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Reads a long-format cohort. When `horizon` is not given it is inferred as the
/// longest trajectory. Throws CohortParseError naming the offending line.
Cohort read_cohort(std::istream& in, std::optional<int> horizon = std::nullopt,
                   ScenarioTag tag = ScenarioTag::External);
Cohort read_cohort(const std::filesystem::path& path, std::optional<int> horizon = std::nullopt,
                   ScenarioTag tag = ScenarioTag::External);

/// Doubles are written in shortest round-trip form, so write(read(write(c))) is
/// byte-identical to write(c).
void write_cohort(const Cohort& cohort, std::ostream& out);
void write_cohort(const Cohort& cohort, const std::filesystem::path& path);

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

}  // namespace gnice
