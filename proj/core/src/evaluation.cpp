#include "gnice/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "gnice/cohort_io.hpp"

namespace gnice {

namespace {

void summarize(BiasSeries& s) {
  double abs_sum = 0.0, sum = 0.0;
  for (const double b : s.per_k) {
    abs_sum += std::abs(b);
    sum += b;
  }
  const auto n = static_cast<double>(s.per_k.size());
  s.mean_abs = s.per_k.empty() ? 0.0 : abs_sum / n;
  s.mean = s.per_k.empty() ? 0.0 : sum / n;
}

}  // namespace

BiasSeries risk_bias(const RiskCurve& estimated, const RiskCurve& truth) {
  if (estimated.size() != truth.size())
    throw std::invalid_argument("risk_bias: length mismatch (" + std::to_string(estimated.size()) + " vs " +
                                std::to_string(truth.size()) + ")");
  BiasSeries s;
  s.per_k.resize(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) s.per_k[i] = estimated[i] - truth[i];
  summarize(s);
  return s;
}

EffectCurve effects(const RiskCurve& always, const RiskCurve& never) {
  if (always.size() != never.size()) throw std::invalid_argument("effects: length mismatch");
  EffectCurve e;
  e.rd.resize(always.size());
  e.rr.resize(always.size());
  for (std::size_t i = 0; i < always.size(); ++i) {
    e.rd[i] = always[i] - never[i];
    if (never[i] > 0.0) e.rr[i] = always[i] / never[i];
  }
  return e;
}

std::vector<std::size_t> common_rr_months(std::span<const EffectCurve> curves) {
  std::vector<std::size_t> months;
  if (curves.empty()) return months;
  const std::size_t K = curves.front().size();
  for (const auto& c : curves)
    if (c.size() != K) throw std::invalid_argument("common_rr_months: length mismatch");
  for (std::size_t i = 0; i < K; ++i)
    if (std::all_of(curves.begin(), curves.end(), [i](const EffectCurve& c) { return c.rr[i].has_value(); }))
      months.push_back(i);
  return months;
}

EffectBias effect_bias(const EffectCurve& estimated, const EffectCurve& truth, std::span<const std::size_t> rr_months) {
  if (estimated.size() != truth.size()) throw std::invalid_argument("effect_bias: length mismatch");
  EffectBias b;
  b.rd.per_k.resize(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) b.rd.per_k[i] = estimated.rd[i] - truth.rd[i];
  summarize(b.rd);

  b.rr.per_k.assign(truth.size(), std::nullopt);
  b.rr.months.assign(rr_months.begin(), rr_months.end());
  b.rr.excluded = truth.size() - rr_months.size();
  double abs_sum = 0.0, sum = 0.0;
  for (const auto i : rr_months) {
    if (i >= truth.size() || !estimated.rr[i] || !truth.rr[i])
      throw std::invalid_argument("effect_bias: risk ratio undefined at month " + std::to_string(i + 1));
    const double d = *estimated.rr[i] - *truth.rr[i];
    b.rr.per_k[i] = d;
    abs_sum += std::abs(d);
    sum += d;
  }
  if (!rr_months.empty()) {
    b.rr.mean_abs = abs_sum / static_cast<double>(rr_months.size());
    b.rr.mean = sum / static_cast<double>(rr_months.size());
  }
  return b;
}

EffectBias effect_bias(const EffectCurve& estimated, const EffectCurve& truth) {
  const EffectCurve pair[] = {estimated, truth};
  const auto months = common_rr_months(pair);
  return effect_bias(estimated, truth, months);
}

std::vector<BiasReport> compare_methods(const StrategyRisks& truth, std::span<const MethodRisks> methods,
                                        const ReportMeta& meta) {
  std::vector<EffectCurve> curves;
  curves.push_back(effects(truth.always_treat, truth.never_treat));
  for (const auto& m : methods) curves.push_back(effects(m.risks.always_treat, m.risks.never_treat));
  const auto months = common_rr_months(curves);

  std::vector<BiasReport> reports;
  for (std::size_t i = 0; i < methods.size(); ++i) {
    const auto& m = methods[i];
    BiasReport r;
    r.meta = meta;
    r.meta.method = m.method;
    r.estimated = m.risks;
    r.truth = truth;
    r.estimated_effect = curves[i + 1];
    r.truth_effect = curves[0];
    r.natural_course = risk_bias(m.risks.natural_course, truth.natural_course);
    r.always_treat = risk_bias(m.risks.always_treat, truth.always_treat);
    r.never_treat = risk_bias(m.risks.never_treat, truth.never_treat);
    r.effect = effect_bias(r.estimated_effect, r.truth_effect, months);
    reports.push_back(std::move(r));
  }
  return reports;
}

// ---------------------------------------------------------------- rendering

namespace {

std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& content,
                std::vector<std::filesystem::path>& written) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path.string());
  written.push_back(path);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (const char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

struct Group {
  std::string scenario;
  int n;
  std::vector<const BiasReport*> reports;
};

std::vector<Group> group_reports(std::span<const BiasReport> reports) {
  std::vector<Group> groups;
  for (const auto& r : reports) {
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const Group& g) { return g.scenario == r.meta.scenario && g.n == r.meta.n; });
    if (it == groups.end()) {
      groups.push_back({r.meta.scenario, r.meta.n, {}});
      it = groups.end() - 1;
    }
    it->reports.push_back(&r);
  }
  return groups;
}

struct Quantity {
  const char* name;
  const char* label;
};

constexpr Quantity kQuantities[] = {{"natural_course", "Natural course risk"},
                                    {"always_treat", "Always treat risk"},
                                    {"never_treat", "Never treat risk"},
                                    {"rd", "Risk difference"},
                                    {"rr", "Risk ratio"}};

std::optional<double> value_at(const StrategyRisks& risks, const EffectCurve& effect, std::string_view q,
                               std::size_t i) {
  if (q == "natural_course") return risks.natural_course[i];
  if (q == "always_treat") return risks.always_treat[i];
  if (q == "never_treat") return risks.never_treat[i];
  if (q == "rd") return effect.rd[i];
  return effect.rr[i];
}

std::string render_svg(const std::string& title, const std::vector<std::string>& names,
                       const std::vector<std::vector<std::optional<double>>>& series) {
  constexpr double W = 720, H = 420, L = 70, R = 170, T = 40, B = 50;
  const std::size_t K = series.empty() ? 0 : series.front().size();
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& s : series)
    for (const auto& v : s)
      if (v) {
        lo = std::min(lo, *v);
        hi = std::max(hi, *v);
      }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  auto px = [&](std::size_t i) { return L + (K > 1 ? static_cast<double>(i) / static_cast<double>(K - 1) : 0.0) * (W - L - R); };
  auto py = [&](double v) { return T + (hi - v) / (hi - lo) * (H - T - B); };
  static constexpr const char* kColors[] = {"#000000", "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << L << "\" y=\"24\" font-size=\"14\">" << title << "</text>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    o << "<text x=\"" << L - 6 << "\" y=\"" << fixed2(py(v) + 4) << "\" text-anchor=\"end\">" << fixed3(v) << "</text>\n";
  }
  if (K > 0) {
    o << "<text x=\"" << L << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">1</text>\n";
    o << "<text x=\"" << W - R << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">" << K << "</text>\n";
  }
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">month</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % std::size(kColors)];
    std::string points;
    auto flush = [&] {
      if (!points.empty())
        o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"" << points << "\"/>\n";
      points.clear();
    };
    for (std::size_t i = 0; i < K; ++i) {
      if (!series[s][i]) {
        flush();
        continue;
      }
      if (!points.empty()) points += ' ';
      points += fixed2(px(i)) + "," + fixed2(py(*series[s][i]));
    }
    flush();
    const double ly = T + 10 + 18.0 * static_cast<double>(s);
    o << "<line x1=\"" << W - R + 12 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 36 << "\" y2=\"" << ly
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << W - R + 42 << "\" y=\"" << ly + 4 << "\">" << names[s] << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace

std::vector<std::filesystem::path> render_report(std::span<const BiasReport> reports,
                                                 const std::filesystem::path& dir, const RenderOptions& options) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;

  std::ostringstream summary;
  summary << "scenario,n,method,natural_course,always_treat,never_treat,rr,rd,rr_months,rr_excluded,"
             "data_seed,train_seed,mc_seed\n";
  for (const auto& r : reports) {
    summary << csv_field(r.meta.scenario) << ',' << r.meta.n << ',' << csv_field(r.meta.method) << ','
            << format_double(r.natural_course.mean_abs) << ',' << format_double(r.always_treat.mean_abs) << ','
            << format_double(r.never_treat.mean_abs) << ',' << format_double(r.effect.rr.mean_abs) << ','
            << format_double(r.effect.rd.mean_abs) << ',' << r.effect.rr.months.size() << ','
            << r.effect.rr.excluded << ',' << r.meta.data_seed << ',' << r.meta.train_seed << ','
            << r.meta.mc_seed << '\n';
  }
  write_file(dir / "bias_summary.csv", summary.str(), written);

  for (const auto& g : group_reports(reports)) {
    const std::string stem = g.scenario + "_" + std::to_string(g.n);
    const auto& first = *g.reports.front();

    std::ostringstream md, csv;
    md << "# Mean absolute bias: " << g.scenario << " scenario, n = " << g.n << "\n\n";
    md << "Bias in risk estimates: natural course, always treat, never treat. "
          "Bias in causal effect estimates: risk ratio, risk difference.\n\n";
    md << "| Method | Natural course | Always treat | Never treat | Risk ratio | Risk difference |\n";
    md << "|---|---|---|---|---|---|\n";
    csv << "method,natural_course,always_treat,never_treat,risk_ratio,risk_difference\n";
    for (const auto* r : g.reports) {
      const std::string cells[] = {fixed3(r->natural_course.mean_abs), fixed3(r->always_treat.mean_abs),
                                   fixed3(r->never_treat.mean_abs), fixed3(r->effect.rr.mean_abs),
                                   fixed3(r->effect.rd.mean_abs)};
      md << "| " << r->meta.method;
      csv << csv_field(r->meta.method);
      for (const auto& c : cells) {
        md << " | " << c;
        csv << ',' << c;
      }
      md << " |\n";
      csv << '\n';
    }
    md << "\nRisk-ratio bias averages over " << first.effect.rr.months.size() << " of "
       << first.truth.natural_course.size() << " months; " << first.effect.rr.excluded
       << " excluded where a never-treat risk is zero.\n";
    write_file(dir / ("table_" + stem + ".md"), md.str(), written);
    write_file(dir / ("table_" + stem + ".csv"), csv.str(), written);

    const std::size_t K = first.truth.natural_course.size();
    for (const auto& q : kQuantities) {
      std::ostringstream fig;
      fig << "k,truth";
      for (const auto* r : g.reports) fig << ',' << csv_field(r->meta.method);
      fig << '\n';
      std::vector<std::string> names{"truth"};
      std::vector<std::vector<std::optional<double>>> series(1);
      for (const auto* r : g.reports) {
        names.push_back(r->meta.method);
        series.emplace_back();
      }
      for (std::size_t i = 0; i < K; ++i) {
        const auto t = value_at(first.truth, first.truth_effect, q.name, i);
        fig << i + 1 << ',' << (t ? format_double(*t) : "");
        series[0].push_back(t);
        for (std::size_t m = 0; m < g.reports.size(); ++m) {
          const auto* r = g.reports[m];
          const auto v = value_at(r->estimated, r->estimated_effect, q.name, i);
          fig << ',' << (v ? format_double(*v) : "");
          series[m + 1].push_back(v);
        }
        fig << '\n';
      }
      const std::string fig_stem = "fig_" + stem + "_" + q.name;
      write_file(dir / (fig_stem + ".csv"), fig.str(), written);
      if (options.svg)
        write_file(dir / (fig_stem + ".svg"),
                   render_svg(std::string(q.label) + " (" + g.scenario + ", n = " + std::to_string(g.n) + ")", names,
                              series),
                   written);
    }
  }
  return written;
}

}  // namespace gnice
