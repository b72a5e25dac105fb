#include "gnice/features.hpp"

#include <stdexcept>

namespace gnice {

std::string_view to_string(FeatureSpec spec) {
  switch (spec) {
    case FeatureSpec::DgpMatched: return "dgp_matched";
    case FeatureSpec::Lag1: return "lag1";
    case FeatureSpec::LagPlusCumAvg: return "lag_cumavg";
  }
  return "";
}

FeatureSpec parse_feature_spec(std::string_view text) {
  if (text == "dgp_matched") return FeatureSpec::DgpMatched;
  if (text == "lag1") return FeatureSpec::Lag1;
  if (text == "lag_cumavg") return FeatureSpec::LagPlusCumAvg;
  throw std::invalid_argument("unknown feature spec '" + std::string(text) + "'");
}

std::string_view to_string(Target target) {
  switch (target) {
    case Target::Cd4: return "cd4";
    case Target::Rna: return "rna";
    case Target::HighBmi: return "high_bmi";
    case Target::Insti: return "insti";
    case Target::Event: return "event";
  }
  return "";
}

namespace {

struct Context {
  double sex = 0, age = 0, smoking = 0, k = 0;
  // lagged (month k-1)
  double cd4l = 0, rnal = 0, bmil = 0, instil = 0;
  // current (month k)
  double cd4 = 0, rna = 0, bmi = 0, insti = 0;
  // means over months 0..k-1
  double cd4m = 0, rnam = 0, bmim = 0, instim = 0;
};

Context make_context(const HistoryView& h, int k, Target target) {
  if (k < 0) throw std::invalid_argument("build_features: k must be >= 0");
  const auto needed = static_cast<std::size_t>(target == Target::Insti || target == Target::Event ? k + 1 : k);
  if (h.records.size() < needed) throw std::invalid_argument("build_features: history too short for target");

  Context c;
  c.sex = h.baseline.sex;
  c.age = h.baseline.age;
  c.smoking = h.baseline.smoking;
  c.k = k;
  if (k > 0) {
    const auto& prev = h.records[static_cast<std::size_t>(k - 1)];
    c.cd4l = prev.cd4;
    c.rnal = prev.rna;
    c.bmil = prev.high_bmi;
    c.instil = prev.insti;
    for (int s = 0; s < k; ++s) {
      const auto& r = h.records[static_cast<std::size_t>(s)];
      c.cd4m += r.cd4;
      c.rnam += r.rna;
      c.bmim += r.high_bmi;
      c.instim += r.insti;
    }
    c.cd4m /= k;
    c.rnam /= k;
    c.bmim /= k;
    c.instim /= k;
  } else if (!h.records.empty()) {
    const auto& first = h.records.front();
    c.cd4l = c.cd4m = first.cd4;
    c.rnal = c.rnam = first.rna;
    c.bmil = c.bmim = first.high_bmi;
  }
  if (target == Target::Insti || target == Target::Event) {
    const auto& cur = h.records[static_cast<std::size_t>(k)];
    c.cd4 = cur.cd4;
    c.rna = cur.rna;
    c.bmi = cur.high_bmi;
    if (target == Target::Event) c.insti = cur.insti;
  }
  return c;
}

// Emits (name, value) pairs in a fixed order; the same routine drives both the
// name list and the numeric vector.
template <typename Sink>
void emit(Sink&& put, const Context& c, FeatureSpec spec, Target target) {
  const double early = c.k <= 5 ? 1.0 : 0.0;
  put("intercept", 1.0);
  put("sex", c.sex);
  put("age", c.age);
  put("smoking", c.smoking);
  put("k", c.k);
  put("k_sq", c.k * c.k);
  put("early", early);

  const bool current_terms = target == Target::Insti || target == Target::Event;
  if (spec == FeatureSpec::DgpMatched) {
    put("age_sq", c.age * c.age);
    switch (target) {
      case Target::Cd4:
        put("cd4_lag", c.cd4l);
        put("cd4_lag_sq", c.cd4l * c.cd4l);
        put("rna_lag", c.rnal);
        put("high_bmi_lag", c.bmil);
        put("insti_lag", c.instil);
        put("high_bmi_lag:rna_lag", c.bmil * c.rnal);
        put("high_bmi_lag:sex", c.bmil * c.sex);
        put("cd4_lag:age", c.cd4l * c.age);
        put("early:cd4_lag", early * c.cd4l);
        put("early:cd4_lag_sq", early * c.cd4l * c.cd4l);
        break;
      case Target::Rna:
        put("cd4_lag", c.cd4l);
        put("cd4_lag_sq", c.cd4l * c.cd4l);
        put("rna_lag", c.rnal);
        put("high_bmi_lag", c.bmil);
        put("insti_lag", c.instil);
        put("high_bmi_lag:rna_lag", c.bmil * c.rnal);
        put("high_bmi_lag:sex", c.bmil * c.sex);
        put("cd4_lag:age", c.cd4l * c.age);
        put("early:rna_lag", early * c.rnal);
        break;
      case Target::HighBmi:
        put("cd4_lag", c.cd4l);
        put("rna_lag", c.rnal);
        put("high_bmi_lag", c.bmil);
        put("insti_lag", c.instil);
        put("high_bmi_lag:rna_lag", c.bmil * c.rnal);
        put("high_bmi_lag:sex", c.bmil * c.sex);
        put("cd4_lag:age", c.cd4l * c.age);
        break;
      case Target::Insti:
        put("cd4", c.cd4);
        put("rna", c.rna);
        put("high_bmi", c.bmi);
        put("insti_lag", c.instil);
        put("high_bmi:rna", c.bmi * c.rna);
        put("high_bmi:sex", c.bmi * c.sex);
        put("cd4:age", c.cd4 * c.age);
        break;
      case Target::Event:
        put("cd4", c.cd4);
        put("rna", c.rna);
        put("rna_sq", c.rna * c.rna);
        put("high_bmi", c.bmi);
        put("insti", c.insti);
        break;
    }
    return;
  }

  if (current_terms) {
    put("cd4", c.cd4);
    put("rna", c.rna);
    put("high_bmi", c.bmi);
    if (target == Target::Event) put("insti", c.insti);
  }
  put("cd4_lag", c.cd4l);
  put("rna_lag", c.rnal);
  put("high_bmi_lag", c.bmil);
  put("insti_lag", c.instil);
  if (spec == FeatureSpec::LagPlusCumAvg) {
    put("cd4_cummean", c.cd4m);
    put("rna_cummean", c.rnam);
    put("high_bmi_cummean", c.bmim);
    put("insti_cummean", c.instim);
  }
}

}  // namespace

std::vector<std::string> feature_names(FeatureSpec spec, Target target) {
  std::vector<std::string> names;
  emit([&](std::string_view name, double) { names.emplace_back(name); }, Context{}, spec, target);
  return names;
}

std::size_t feature_count(FeatureSpec spec, Target target) {
  std::size_t n = 0;
  emit([&](std::string_view, double) { ++n; }, Context{}, spec, target);
  return n;
}

void build_features(const HistoryView& history, int k, FeatureSpec spec, Target target, std::span<double> out) {
  const Context c = make_context(history, k, target);
  std::size_t i = 0;
  emit(
      [&](std::string_view, double v) {
        if (i >= out.size()) throw std::invalid_argument("build_features: output span too small");
        out[i++] = v;
      },
      c, spec, target);
  if (i != out.size()) throw std::invalid_argument("build_features: output span has wrong size");
}

std::vector<double> build_features(const HistoryView& history, int k, FeatureSpec spec, Target target) {
  std::vector<double> out(feature_count(spec, target));
  build_features(history, k, spec, target, out);
  return out;
}

}  // namespace gnice
