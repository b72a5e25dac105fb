#include "gnice/montecarlo.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <algorithm>
#include <string>

#include "gnice/cohort_io.hpp"
#include "gnice/errors.hpp"
#include "gnice/parallel.hpp"
#include "gnice/simulator.hpp"

namespace gnice {

ClampCounts& ClampCounts::operator+=(const ClampCounts& o) {
  cd4_low += o.cd4_low;
  cd4_high += o.cd4_high;
  rna_low += o.rna_low;
  rna_high += o.rna_high;
  return *this;
}

std::vector<BaselineRow> baseline_rows(const Cohort& cohort) {
  std::vector<BaselineRow> rows;
  rows.reserve(cohort.size());
  for (const auto& p : cohort.persons()) rows.push_back({p.baseline, p.records.front()});
  return rows;
}

namespace {

[[noreturn]] void bad_value(std::string_view what, int k, double v) {
  throw NumericError("model returned invalid " + std::string(what) + " " + std::to_string(v) + " at month " +
                     std::to_string(k));
}

double checked_probability(std::string_view what, int k, double p) {
  if (!(p >= 0.0 && p <= 1.0)) bad_value(what, k, p);
  return p;
}

double draw_clamped(const ClampedNormal& d, std::string_view what, int k, RngStream& rng, std::int64_t* low,
                    std::int64_t* high) {
  if (!std::isfinite(d.mean)) bad_value(std::string(what) + " mean", k, d.mean);
  if (!std::isfinite(d.sd) || d.sd < 0.0) bad_value(std::string(what) + " sd", k, d.sd);
  const double x = d.mean + d.sd * rng.normal();
  if (x < d.lo) {
    ++*low;
    return d.lo;
  }
  if (x > d.hi) {
    ++*high;
    return d.hi;
  }
  return x;
}

}  // namespace

SimulatedHistory simulate_history(const ModelSet& model, const BaselineRow& start, Strategy strategy, int horizon,
                                  RngStream& rng, ClampCounts* clamps) {
  if (horizon < 1) throw std::invalid_argument("simulate_history: horizon must be >= 1");
  ClampCounts local;
  SimulatedHistory h;
  h.baseline = start.baseline;
  h.records.reserve(static_cast<std::size_t>(horizon));
  h.hazards.reserve(static_cast<std::size_t>(horizon));
  const auto forced = forced_treatment(strategy);
  auto state = model.make_state();

  for (int k = 0; k < horizon; ++k) {
    MonthRecord cur;
    if (k == 0) {
      cur = start.month0;
    } else {
      const CovariateDistribution d = model.covariate_step({h.baseline, h.records}, k, state.get());
      cur.cd4 = draw_clamped(d.cd4, "cd4", k, rng, &local.cd4_low, &local.cd4_high);
      cur.rna = draw_clamped(d.rna, "rna", k, rng, &local.rna_low, &local.rna_high);
      cur.high_bmi = rng.bernoulli(checked_probability("high_bmi probability", k, d.high_bmi_prob)) ? 1 : 0;
    }
    cur.insti = 0;
    h.records.push_back(cur);

    const double u = rng.uniform();
    if (forced) {
      h.records.back().insti = *forced;
    } else {
      const double p = checked_probability("treatment probability", k,
                                           model.treatment_prob({h.baseline, h.records}, k, state.get()));
      h.records.back().insti = u < p ? 1 : 0;
    }
    h.hazards.push_back(checked_probability("hazard", k, model.hazard({h.baseline, h.records}, k, state.get())));
  }
  if (clamps) *clamps += local;
  return h;
}

RiskEstimate estimate_risk(const ModelSet& model, std::span<const BaselineRow> starts, Strategy strategy,
                           const MonteCarloConfig& config) {
  if (config.n_samples < 1) throw std::invalid_argument("estimate_risk: n_samples must be >= 1");
  if (starts.empty()) throw std::invalid_argument("estimate_risk: no baseline rows to resample");
  const auto t0 = std::chrono::steady_clock::now();
  const auto n = static_cast<std::size_t>(config.n_samples);
  const auto K = static_cast<std::size_t>(config.horizon);

  // Per-history curves are kept so the reduction order is fixed regardless of threads.
  std::vector<double> curves(n * K);
  std::vector<ClampCounts> clamps(static_cast<std::size_t>(std::max(1, config.threads)));
  parallel_for(n, config.threads, [&](std::size_t begin, std::size_t end, int worker) {
    for (std::size_t m = begin; m < end; ++m) {
      RngStream rng(config.seed, m);
      const auto& start = starts[rng.below(starts.size())];
      const auto h = simulate_history(model, start, strategy, config.horizon, rng, &clamps[static_cast<std::size_t>(worker)]);
      double survival = 1.0;
      for (std::size_t k = 0; k < K; ++k) {
        survival *= 1.0 - h.hazards[k];
        curves[m * K + k] = 1.0 - survival;
      }
    }
  });

  std::vector<double> mean(K, 0.0), se(K, 0.0);
  for (std::size_t m = 0; m < n; ++m)
    for (std::size_t k = 0; k < K; ++k) mean[k] += curves[m * K + k];
  for (auto& v : mean) v /= static_cast<double>(n);
  if (n > 1) {
    for (std::size_t m = 0; m < n; ++m)
      for (std::size_t k = 0; k < K; ++k) {
        const double d = curves[m * K + k] - mean[k];
        se[k] += d * d;
      }
    for (auto& v : se) v = std::sqrt(v / static_cast<double>(n - 1) / static_cast<double>(n));
  }

  RiskEstimate est;
  est.risk = RiskCurve(std::move(mean));
  est.mc_se = std::move(se);
  for (const auto& c : clamps) est.clamps += c;
  est.strategy = strategy;
  est.config = config;
  est.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return est;
}

RiskEstimate estimate_risk(const ModelSet& model, const Cohort& cohort, Strategy strategy,
                           const MonteCarloConfig& config) {
  const auto rows = baseline_rows(cohort);
  return estimate_risk(model, rows, strategy, config);
}

std::vector<double> natural_course_diagnostic(const ModelSet& model, const Cohort& cohort,
                                              const MonteCarloConfig& config) {
  if (config.horizon != cohort.horizon())
    throw std::invalid_argument("natural_course_diagnostic: horizon differs from the cohort's");
  const auto est = estimate_risk(model, cohort, Strategy::NaturalCourse, config);
  const auto observed = empirical_risk(cohort);
  std::vector<double> diff(est.risk.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = est.risk[i] - observed[i];
  return diff;
}

void write_risk_csv(const RiskCurve& risk, std::span<const double> mc_se, std::ostream& out) {
  if (!mc_se.empty() && mc_se.size() != risk.size())
    throw std::invalid_argument("write_risk_csv: mc_se length differs from risk length");
  out << "k,risk,mc_se\n";
  for (std::size_t i = 0; i < risk.size(); ++i)
    out << i + 1 << ',' << format_double(risk[i]) << ',' << format_double(mc_se.empty() ? 0.0 : mc_se[i]) << '\n';
}

void write_risk_csv(const RiskCurve& risk, std::span<const double> mc_se, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_risk_csv(risk, mc_se, out);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

RiskTable read_risk_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "k,risk,mc_se") throw std::runtime_error("risk csv: bad header");
  std::vector<double> risk, se;
  int expected = 1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    double fields[3];
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (int f = 0; f < 3; ++f) {
      const auto r = std::from_chars(p, end, fields[f]);
      if (r.ec != std::errc{} || (f < 2 && (r.ptr == end || *r.ptr != ',')) || (f == 2 && r.ptr != end))
        throw std::runtime_error("risk csv: malformed row " + std::to_string(expected));
      p = r.ptr + 1;
    }
    if (fields[0] != expected) throw std::runtime_error("risk csv: months must run 1..K in order");
    risk.push_back(fields[1]);
    se.push_back(fields[2]);
    ++expected;
  }
  return {RiskCurve(std::move(risk)), std::move(se)};
}

RiskTable read_risk_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return read_risk_csv(in);
}

nlohmann::ordered_json estimate_manifest(const RiskEstimate& e, const std::string& model_id) {
  nlohmann::ordered_json j;
  j["model"] = model_id;
  j["strategy"] = std::string(to_string(e.strategy));
  j["n_samples"] = e.config.n_samples;
  j["horizon"] = e.config.horizon;
  j["seed"] = e.config.seed;
  j["threads"] = e.config.threads;
  j["clamps"] = {{"cd4_low", e.clamps.cd4_low},
                 {"cd4_high", e.clamps.cd4_high},
                 {"rna_low", e.clamps.rna_low},
                 {"rna_high", e.clamps.rna_high}};
  j["seconds"] = e.seconds;
  return j;
}

}  // namespace gnice
