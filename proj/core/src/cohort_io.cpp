#include "gnice/cohort_io.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

namespace gnice {

std::string format_double(double value) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc{}) throw std::runtime_error("failed to format double");
  return std::string(buf.data(), ptr);
}

namespace {

constexpr std::size_t kColumns = 10;

struct Row {
  std::int64_t id;
  int k;
  Baseline baseline;
  MonthRecord record;
  int event;
};

template <typename T>
T parse_number(std::string_view field, std::size_t line, std::string_view column) {
  T value{};
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) {
    throw CohortParseError(line, "invalid value '" + std::string(field) + "' in column " +
                                     std::string(column));
  }
  return value;
}

Row parse_row(std::string_view text, std::size_t line) {
  std::array<std::string_view, kColumns> fields;
  std::size_t count = 0;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = text.find(',', start);
    if (count == kColumns) throw CohortParseError(line, "too many columns");
    fields[count++] = text.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                          : comma - start);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (count != kColumns) {
    throw CohortParseError(line, "expected " + std::to_string(kColumns) + " columns, found " +
                                     std::to_string(count));
  }
  Row r{};
  r.id = parse_number<std::int64_t>(fields[0], line, "id");
  r.k = parse_number<int>(fields[1], line, "k");
  r.baseline.sex = parse_number<int>(fields[2], line, "sex");
  r.baseline.age = parse_number<double>(fields[3], line, "age");
  r.baseline.smoking = parse_number<int>(fields[4], line, "smoking");
  r.record.cd4 = parse_number<double>(fields[5], line, "cd4");
  r.record.rna = parse_number<double>(fields[6], line, "rna");
  r.record.high_bmi = parse_number<int>(fields[7], line, "high_bmi");
  r.record.insti = parse_number<int>(fields[8], line, "insti");
  r.event = parse_number<int>(fields[9], line, "event");
  if (r.event != 0 && r.event != 1) throw CohortParseError(line, "event must be 0 or 1");
  return r;
}

}  // namespace

Cohort read_cohort(std::istream& in, std::optional<int> horizon, ScenarioTag tag) {
  std::string text;
  std::size_t line = 1;
  if (!std::getline(in, text)) throw CohortParseError(line, "empty input");
  if (!text.empty() && text.back() == '\r') text.pop_back();
  if (text != kCohortCsvHeader) {
    throw CohortParseError(line, "header must be '" + std::string(kCohortCsvHeader) + "'");
  }

  std::vector<PersonTrajectory> persons;
  bool closed = true;  // current person ended with an event row
  std::size_t longest = 0;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.empty()) continue;
    const Row row = parse_row(text, line);

    const bool continues = !persons.empty() && persons.back().id == row.id;
    if (!continues) {
      if (row.k != 0) throw CohortParseError(line, "trajectory must start at k=0");
      PersonTrajectory p;
      p.id = row.id;
      p.baseline = row.baseline;
      persons.push_back(std::move(p));
      closed = false;
    } else {
      auto& p = persons.back();
      if (closed) throw CohortParseError(line, "record after event for id " + std::to_string(row.id));
      if (row.k != static_cast<int>(p.records.size())) {
        throw CohortParseError(line, "non-contiguous k for id " + std::to_string(row.id));
      }
      if (!(row.baseline == p.baseline)) {
        throw CohortParseError(line, "baseline covariates change within id " + std::to_string(row.id));
      }
    }
    auto& p = persons.back();
    p.records.push_back(row.record);
    if (row.event == 1) {
      p.event_time = row.k + 1;
      closed = true;
    }
    longest = std::max(longest, p.records.size());
  }
  if (persons.empty()) throw CohortParseError(line, "no data rows");

  CovariateSchema schema;
  schema.horizon = horizon.value_or(static_cast<int>(longest));
  try {
    return Cohort(schema, std::move(persons), tag);
  } catch (const std::invalid_argument& e) {
    throw CohortParseError(line, e.what());
  }
}

Cohort read_cohort(const std::filesystem::path& path, std::optional<int> horizon, ScenarioTag tag) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_cohort(in, horizon, tag);
}

void write_cohort(const Cohort& cohort, std::ostream& out) {
  out << kCohortCsvHeader << '\n';
  for (const auto& p : cohort.persons()) {
    const std::string prefix_id = std::to_string(p.id);
    const std::string base = std::to_string(p.baseline.sex) + ',' + format_double(p.baseline.age) +
                             ',' + std::to_string(p.baseline.smoking);
    for (std::size_t k = 0; k < p.records.size(); ++k) {
      const auto& r = p.records[k];
      const bool event = p.event_time && static_cast<int>(k) + 1 == *p.event_time;
      out << prefix_id << ',' << k << ',' << base << ',' << format_double(r.cd4) << ','
          << format_double(r.rna) << ',' << r.high_bmi << ',' << r.insti << ',' << (event ? 1 : 0)
          << '\n';
    }
  }
}

void write_cohort(const Cohort& cohort, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_cohort(cohort, out);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace gnice
