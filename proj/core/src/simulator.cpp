#include "gnice/simulator.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

#include "gnice/distributions.hpp"
#include "gnice/parallel.hpp"

namespace gnice {

namespace {

constexpr std::uint64_t kSimulationStreamTag = 0x51u;

// Age ~ TruncatedNormal(50, 12, 18, 80); CD4/RNA starting values share the same form.
struct TruncSpec {
  double mu, sigma, lo, hi;
};
constexpr TruncSpec kAge{50.0, 12.0, 18.0, 80.0};
constexpr TruncSpec kCd4Start{450.0, 100.0, 350.0, 800.0};
constexpr TruncSpec kRnaStart{60.0, 30.0, 40.0, 90.0};

struct Regime {
  double sigma, lo, hi;
};
constexpr Regime kCd4Early{100.0, 350.0, 800.0};
constexpr Regime kCd4Late{80.0, 400.0, 800.0};
constexpr Regime kRnaEarly{30.0, 40.0, 80.0};
constexpr Regime kRnaLate{20.0, 20.0, 70.0};

// Covariate path from the first pre-baseline month through the current month,
// with running sums for window means.
class PathBuffer {
 public:
  enum Var { kCd4, kRna, kBmi, kInsti, kVars };

  PathBuffer(int first_month, int horizon) : first_(first_month) {
    const auto cap = static_cast<std::size_t>(horizon - first_month + 1);
    for (auto& v : values_) v.reserve(cap);
    for (auto& p : prefix_) {
      p.reserve(cap + 1);
      p.push_back(0.0);
    }
  }

  int first() const { return first_; }
  int next_month() const { return first_ + static_cast<int>(values_[0].size()); }

  void push(double cd4, double rna, int bmi, int insti) {
    const std::array<double, kVars> row{cd4, rna, static_cast<double>(bmi), static_cast<double>(insti)};
    for (int v = 0; v < kVars; ++v) {
      values_[v].push_back(row[v]);
      prefix_[v].push_back(prefix_[v].back() + row[v]);
    }
  }

  double at(Var v, int month) const { return values_[v][static_cast<std::size_t>(month - first_)]; }

  // Mean over months [lo, hi] intersected with the recorded path; 0 when empty.
  double mean(Var v, int lo, int hi) const {
    lo = std::max(lo, first_);
    hi = std::min(hi, next_month() - 1);
    if (hi < lo) return 0.0;
    const auto a = static_cast<std::size_t>(lo - first_);
    const auto b = static_cast<std::size_t>(hi - first_ + 1);
    return (prefix_[v][b] - prefix_[v][a]) / static_cast<double>(b - a);
  }

 private:
  int first_;
  std::array<std::vector<double>, kVars> values_;
  std::array<std::vector<double>, kVars> prefix_;
};

struct Person {
  BaselineDraw base;
  double u;  // U with the include_u scaling applied
};

// Lagged values feeding the month-k equations.
struct Lags {
  double cd4, rna, bmi, insti;
};

// History summaries at month k for the complex scenario.
struct Windows {
  double cd4_6, cd4_24, cd4_old;
  double rna_6, rna_24, rna_old;
  double bmi_6, bmi_24, bmi_old;
  double insti_mean;  // months 0..k-1
};

Windows windows_at(const PathBuffer& path, int k) {
  constexpr int oldest = -kComplexPreBaselineMonths;
  using V = PathBuffer;
  return Windows{
      path.mean(V::kCd4, k - 6, k - 1),  path.mean(V::kCd4, k - 24, k - 7),  path.mean(V::kCd4, oldest, k - 25),
      path.mean(V::kRna, k - 6, k - 1),  path.mean(V::kRna, k - 24, k - 7),  path.mean(V::kRna, oldest, k - 25),
      path.mean(V::kBmi, k - 6, k - 1),  path.mean(V::kBmi, k - 24, k - 7),  path.mean(V::kBmi, oldest, k - 25),
      path.mean(V::kInsti, 0, k - 1),
  };
}

// ---- simple time dependency ----

double simple_cd4_mu(const Person& p, const Lags& l, int k) {
  const auto& b = p.base;
  const bool early = in_early_regime(k);
  const double insti_coef = k == 0 ? 0.0 : 0.05;
  return -0.8 * p.u + 0.7 * b.sex - 0.8 * b.age - 0.05 * b.age * b.age + 0.6 * b.smoking +
         (early ? 2.0 : 1.8) * l.cd4 + (early ? 0.005 : 0.008) * l.cd4 * l.cd4 - 1.0 * l.rna -
         0.1 * l.bmi + insti_coef * l.insti + 0.1 * l.bmi * l.rna + 0.08 * l.bmi * b.sex -
         0.1 * l.cd4 * b.age;
}

double simple_rna_mu(const Person& p, const Lags& l, int k) {
  const auto& b = p.base;
  const bool early = in_early_regime(k);
  return 0.5 * p.u + 0.5 * b.sex + 0.3 * b.age + 0.006 * b.age * b.age + 0.8 * b.smoking -
         0.5 * l.cd4 - 0.0001 * l.cd4 * l.cd4 + (early ? 2.0 : 1.8) * l.rna + 0.3 * l.bmi +
         0.05 * l.insti + 0.08 * l.bmi * l.rna + 0.1 * l.bmi * b.sex - 0.01 * l.cd4 * b.age;
}

double simple_bmi_mu(const Person& p, const Lags& l) {
  const auto& b = p.base;
  return -8.0 - 2.0 * p.u + 0.03 * b.sex + 0.01 * b.age + 0.0001 * b.age * b.age + 0.04 * b.smoking -
         0.0001 * l.cd4 + 0.001 * l.rna + 10.0 * l.bmi + 5.0 * l.insti + 0.001 * l.bmi * l.rna +
         0.004 * l.bmi * b.sex + 0.00001 * l.cd4 * b.age;
}

double simple_insti_mu(const Person& p, const MonthRecord& cur, double insti_lag) {
  const auto& b = p.base;
  return -4.5 + 0.5 * b.sex + 0.01 * b.age + 0.0001 * b.age * b.age + 0.1 * b.smoking +
         0.001 * cur.cd4 + 0.01 * cur.rna - 7.0 * cur.high_bmi + 10.0 * insti_lag +
         0.0001 * cur.high_bmi * cur.rna + 0.001 * cur.high_bmi * b.sex + 0.00001 * cur.cd4 * b.age;
}

double simple_outcome_mu(const Person& p, const MonthRecord& cur) {
  const auto& b = p.base;
  return -0.08 * p.u + 0.005 * b.sex + 0.015 * b.age + 0.00000005 * b.age * b.age +
         0.025 * b.smoking - 0.015 * cur.cd4 + 0.03 * cur.rna + 0.0000004 * cur.rna * cur.rna +
         0.1 * cur.high_bmi + 0.09 * cur.insti;
}

// ---- complex time dependency ----

double complex_cd4_mu(const Person& p, const Lags& l, const Windows& w, int k) {
  const auto& b = p.base;
  const bool early = in_early_regime(k);
  return -2.0 * p.u + 0.1 * b.sex - 1.0 * b.age - 0.05 * b.age * b.age + 0.3 * b.smoking +
         (early ? 1.0 : 1.8) * l.cd4 + (early ? 0.005 : 0.008) * l.cd4 * l.cd4 +
         (early ? 0.8 : 1.0) * w.cd4_6 + (early ? 0.6 : 0.5) * w.cd4_24 + (early ? 0.5 : 0.2) * w.cd4_old -
         0.8 * l.rna - 0.5 * w.rna_6 - 0.3 * w.rna_24 - 0.1 * w.rna_old - 0.1 * l.bmi - 0.08 * w.bmi_6 -
         0.04 * w.bmi_24 - 0.02 * w.bmi_old + 0.05 * l.insti + 0.02 * w.insti_mean +
         0.1 * l.bmi * l.rna + 0.08 * l.bmi * b.sex - 0.1 * l.cd4 * b.age;
}

// Early and late RNA regimes share coefficients; only the noise and bounds differ.
double complex_rna_mu(const Person& p, const Lags& l, const Windows& w) {
  const auto& b = p.base;
  return 2.0 * p.u + 1.0 * b.sex + 1.5 * b.age + 0.006 * b.age * b.age + 0.5 * b.smoking - 0.5 * l.cd4 -
         0.0001 * l.cd4 * l.cd4 - 0.2 * w.cd4_6 - 0.05 * w.cd4_24 - 0.01 * w.cd4_old + 6.0 * l.rna +
         5.0 * w.rna_6 + 3.0 * w.rna_24 + 2.0 * w.rna_old + 0.3 * l.bmi + 0.1 * w.bmi_6 + 0.06 * w.bmi_24 +
         0.03 * w.bmi_old + 0.05 * l.insti + 0.01 * w.insti_mean + 0.08 * l.bmi * l.rna +
         0.1 * l.bmi * b.sex - 0.01 * l.cd4 * b.age;
}

double complex_bmi_mu(const Person& p, const Lags& l, const Windows& w) {
  const auto& b = p.base;
  return -6.5 - 1.0 * p.u - 0.6 * b.sex + 0.01 * b.age + 0.0001 * b.age * b.age - 0.04 * b.smoking -
         0.0001 * l.cd4 + 0.000001 * l.cd4 * l.cd4 - 0.001 * w.cd4_6 - 0.0001 * w.cd4_24 -
         0.001 * w.cd4_old + 0.01 * l.rna + 0.01 * w.rna_6 + 0.007 * w.rna_24 + 0.006 * w.rna_old +
         4.5 * l.bmi + 3.0 * w.bmi_6 + 1.6 * w.bmi_24 + 1.0 * w.bmi_old + 2.0 * l.insti +
         1.0 * w.insti_mean;
}

double complex_insti_mu(const Person& p, const MonthRecord& cur, double insti_lag, const Windows& w) {
  const auto& b = p.base;
  return -4.0 + 0.5 * b.sex + 0.05 * b.age + 0.00005 * b.age * b.age + 0.2 * b.smoking -
         0.001 * cur.cd4 + 0.0000001 * cur.cd4 * cur.cd4 - 0.0001 * w.cd4_6 + 0.001 * cur.rna +
         0.0003 * w.rna_6 - 3.0 * cur.high_bmi - 2.0 * w.bmi_6 - 1.3 * w.bmi_24 - 0.8 * w.bmi_old +
         6.0 * insti_lag + 4.0 * w.insti_mean;
}

double complex_outcome_mu(const Person& p, const MonthRecord& cur, const Windows& w) {
  const auto& b = p.base;
  return -0.05 * p.u + 0.007 * b.sex + 0.02 * b.age + 0.00000005 * b.age * b.age + 0.03 * b.smoking -
         0.009 * cur.cd4 - 0.008 * w.cd4_6 - 0.006 * w.cd4_24 - 0.004 * w.cd4_old + 0.045 * cur.rna +
         0.0000004 * cur.rna * cur.rna + 0.03 * w.rna_6 + 0.025 * w.rna_24 + 0.02 * w.rna_old +
         0.14 * cur.high_bmi + 0.11 * w.bmi_6 + 0.08 * w.bmi_24 + 0.06 * w.bmi_old + 0.13 * cur.insti +
         0.11 * w.insti_mean;
}

double draw_trunc(const TruncSpec& s, RngStream& rng) {
  return sample_truncated_normal(s.mu, s.sigma, s.lo, s.hi, rng);
}

double draw_regime(double mu, const Regime& r, RngStream& rng) {
  return sample_truncated_normal(mu, r.sigma, r.lo, r.hi, rng);
}

int draw_bernoulli_logit(double mu, RngStream& rng) { return rng.uniform() < expit(mu) ? 1 : 0; }

Lags lags_at(const PathBuffer& path, int k) {
  using V = PathBuffer;
  return Lags{path.at(V::kCd4, k - 1), path.at(V::kRna, k - 1), path.at(V::kBmi, k - 1),
              path.at(V::kInsti, k - 1)};
}

void simulate_pre_baseline(const Scenario& scenario, const Person& person, PathBuffer& path, RngStream& rng) {
  const double cd4 = draw_trunc(kCd4Start, rng);
  const double rna = draw_trunc(kRnaStart, rng);
  // The first high-BMI value uses the starting CD4/RNA as lags, with no prior
  // high BMI and no prior treatment.
  const Lags start{cd4, rna, 0.0, 0.0};
  if (scenario.kind == ScenarioKind::Simple) {
    path.push(cd4, rna, draw_bernoulli_logit(simple_bmi_mu(person, start), rng), 0);
    return;
  }
  const Windows empty{};
  path.push(cd4, rna, draw_bernoulli_logit(complex_bmi_mu(person, start, empty), rng), 0);
  for (int m = path.first() + 1; m < 0; ++m) {
    const Lags l = lags_at(path, m);
    const Windows w = windows_at(path, m);
    const int bmi = draw_bernoulli_logit(complex_bmi_mu(person, l, w), rng);
    path.push(l.cd4 * 0.995, l.rna * 1.01, bmi, 0);
  }
}

struct SimulationResult {
  std::vector<MonthRecord> records;
  std::optional<int> event_time;
};

SimulationResult run_person(const Scenario& scenario, const BaselineDraw& base, int horizon,
                            Strategy strategy, RngStream& rng, bool keep_records) {
  const Person person{base, scenario.include_u ? base.u : 0.0};
  const bool simple = scenario.kind == ScenarioKind::Simple;
  const int first = simple ? -kSimplePreBaselineMonths : -kComplexPreBaselineMonths;
  PathBuffer path(first, horizon);
  simulate_pre_baseline(scenario, person, path, rng);

  const auto forced = forced_treatment(strategy);
  SimulationResult result;
  if (keep_records) result.records.reserve(static_cast<std::size_t>(horizon));
  for (int k = 0; k < horizon; ++k) {
    const Lags l = lags_at(path, k);
    const Windows w = simple ? Windows{} : windows_at(path, k);
    const Regime& cd4_regime = in_early_regime(k) ? kCd4Early : kCd4Late;
    const Regime& rna_regime = in_early_regime(k) ? kRnaEarly : kRnaLate;

    MonthRecord cur;
    if (simple) {
      cur.cd4 = draw_regime(simple_cd4_mu(person, l, k), cd4_regime, rng);
      cur.rna = draw_regime(simple_rna_mu(person, l, k), rna_regime, rng);
      cur.high_bmi = draw_bernoulli_logit(simple_bmi_mu(person, l), rng);
    } else {
      cur.cd4 = draw_regime(complex_cd4_mu(person, l, w, k), cd4_regime, rng);
      cur.rna = draw_regime(complex_rna_mu(person, l, w), rna_regime, rng);
      cur.high_bmi = draw_bernoulli_logit(complex_bmi_mu(person, l, w), rng);
    }

    // The treatment uniform is consumed under every strategy to keep streams aligned.
    const double treat_u = rng.uniform();
    if (forced) {
      cur.insti = *forced;
    } else {
      const double mu = simple ? simple_insti_mu(person, cur, l.insti) : complex_insti_mu(person, cur, l.insti, w);
      cur.insti = treat_u < expit(mu) ? 1 : 0;
    }

    const double y_mu = (simple ? simple_outcome_mu(person, cur) : complex_outcome_mu(person, cur, w)) +
                        scenario.outcome_logit_offset;
    const bool event = rng.uniform() < expit(y_mu);

    path.push(cur.cd4, cur.rna, cur.high_bmi, cur.insti);
    if (keep_records) result.records.push_back(cur);
    if (event) {
      result.event_time = k + 1;
      break;
    }
  }
  return result;
}

RngStream person_stream(std::uint64_t seed, std::int64_t id) {
  return RngStream(derive_seed(seed, kSimulationStreamTag), static_cast<std::uint64_t>(id));
}

void check_horizon(int horizon) {
  if (horizon < 1 || horizon > kDefaultHorizon)
    throw std::invalid_argument("horizon must be in 1.." + std::to_string(kDefaultHorizon));
}

}  // namespace

BaselineDraw draw_baseline(RngStream& rng) {
  BaselineDraw d;
  d.sex = rng.uniform() < 0.8 ? 1 : 0;
  d.age = draw_trunc(kAge, rng);
  const double s = rng.uniform();
  d.smoking = s < 0.45 ? 0 : (s < 0.85 ? 1 : 2);
  d.u = rng.uniform();
  return d;
}

std::vector<BaselineDraw> sample_baseline(int n, RngStream& rng) {
  if (n < 1) throw std::invalid_argument("sample_baseline: n must be >= 1");
  std::vector<BaselineDraw> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(draw_baseline(rng));
  return out;
}

PersonTrajectory simulate_person(const Scenario& scenario, int horizon, Strategy strategy,
                                 std::uint64_t seed, std::int64_t id) {
  check_horizon(horizon);
  RngStream rng = person_stream(seed, id);
  const BaselineDraw base = draw_baseline(rng);
  auto sim = run_person(scenario, base, horizon, strategy, rng, true);
  PersonTrajectory p;
  p.id = id;
  p.baseline = Baseline{base.sex, base.age, base.smoking};
  p.records = std::move(sim.records);
  p.event_time = sim.event_time;
  return p;
}

Cohort simulate_cohort(const Scenario& scenario, int n, int horizon, Strategy strategy,
                       std::uint64_t seed, int threads) {
  if (n < 1) throw std::invalid_argument("simulate_cohort: n must be >= 1");
  check_horizon(horizon);
  std::vector<PersonTrajectory> persons(static_cast<std::size_t>(n));
  parallel_for(persons.size(), threads, [&](std::size_t begin, std::size_t end, int) {
    for (std::size_t i = begin; i < end; ++i)
      persons[i] = simulate_person(scenario, horizon, strategy, seed, static_cast<std::int64_t>(i + 1));
  });
  CovariateSchema schema;
  schema.horizon = horizon;
  return Cohort(schema, std::move(persons), scenario.tag());
}

RiskCurve ground_truth_risk(const Scenario& scenario, Strategy strategy, std::int64_t n, int horizon,
                            std::uint64_t seed, int threads) {
  if (n < 1) throw std::invalid_argument("ground_truth_risk: n must be >= 1");
  check_horizon(horizon);
  const int workers = std::max(1, threads);
  std::vector<std::vector<std::int64_t>> counts(static_cast<std::size_t>(workers),
                                                std::vector<std::int64_t>(static_cast<std::size_t>(horizon), 0));
  parallel_for(static_cast<std::size_t>(n), workers, [&](std::size_t begin, std::size_t end, int w) {
    auto& local = counts[static_cast<std::size_t>(w)];
    for (std::size_t i = begin; i < end; ++i) {
      RngStream rng = person_stream(seed, static_cast<std::int64_t>(i + 1));
      const BaselineDraw base = draw_baseline(rng);
      const auto sim = run_person(scenario, base, horizon, strategy, rng, false);
      if (sim.event_time) ++local[static_cast<std::size_t>(*sim.event_time - 1)];
    }
  });
  std::vector<double> risk(static_cast<std::size_t>(horizon));
  std::int64_t cumulative = 0;
  for (int k = 0; k < horizon; ++k) {
    for (const auto& local : counts) cumulative += local[static_cast<std::size_t>(k)];
    risk[static_cast<std::size_t>(k)] = static_cast<double>(cumulative) / static_cast<double>(n);
  }
  return RiskCurve(std::move(risk));
}

RiskCurve empirical_risk(const Cohort& cohort) {
  const int horizon = cohort.horizon();
  std::vector<std::int64_t> events(static_cast<std::size_t>(horizon), 0);
  for (const auto& p : cohort.persons())
    if (p.event_time) ++events[static_cast<std::size_t>(*p.event_time - 1)];
  std::vector<double> risk(static_cast<std::size_t>(horizon));
  std::int64_t cumulative = 0;
  for (int k = 0; k < horizon; ++k) {
    cumulative += events[static_cast<std::size_t>(k)];
    risk[static_cast<std::size_t>(k)] = static_cast<double>(cumulative) / static_cast<double>(cohort.size());
  }
  return RiskCurve(std::move(risk));
}

}  // namespace gnice
