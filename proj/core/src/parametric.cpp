#include "gnice/parametric.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <optional>
#include <stdexcept>

#include "gnice/distributions.hpp"
#include "gnice/parallel.hpp"

namespace gnice {

namespace {

bool is_covariate(Target t) { return t == Target::Cd4 || t == Target::Rna || t == Target::HighBmi; }

double response(const PersonTrajectory& p, int k, Target t) {
  const auto& r = p.records[static_cast<std::size_t>(k)];
  switch (t) {
    case Target::Cd4: return r.cd4;
    case Target::Rna: return r.rna;
    case Target::HighBmi: return r.high_bmi;
    case Target::Insti: return r.insti;
    case Target::Event: return p.event_time && *p.event_time == k + 1 ? 1.0 : 0.0;
  }
  return 0.0;
}

// Records visible to the model of `t` at month k.
std::span<const MonthRecord> visible(const PersonTrajectory& p, int k, Target t) {
  const auto n = static_cast<std::size_t>(is_covariate(t) ? k : k + 1);
  return std::span<const MonthRecord>(p.records).first(n);
}

double features_dot(const HistoryView& h, int k, FeatureSpec spec, Target t, const Eigen::VectorXd& beta) {
  constexpr std::size_t kMaxFeatures = 32;
  std::array<double, kMaxFeatures> buf{};
  const auto n = static_cast<std::size_t>(beta.size());
  if (n > kMaxFeatures) throw std::logic_error("feature vector exceeds buffer");
  build_features(h, k, spec, t, std::span<double>(buf.data(), n));
  return Eigen::Map<const Eigen::VectorXd>(buf.data(), beta.size()).dot(beta);
}

using ojson = nlohmann::ordered_json;

ojson coefficients_json(const Eigen::VectorXd& beta, FeatureSpec spec, Target t) {
  const auto names = feature_names(spec, t);
  ojson out = ojson::object();
  for (std::size_t i = 0; i < names.size(); ++i) out[names[i]] = beta(static_cast<Eigen::Index>(i));
  return out;
}

Eigen::VectorXd coefficients_from(const nlohmann::json& obj, FeatureSpec spec, Target t) {
  const auto names = feature_names(spec, t);
  if (!obj.is_object() || obj.size() != names.size())
    throw std::runtime_error("model '" + std::string(to_string(t)) + "': coefficient set does not match spec");
  Eigen::VectorXd beta(static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto it = obj.find(names[i]);
    if (it == obj.end())
      throw std::runtime_error("model '" + std::string(to_string(t)) + "': missing coefficient '" + names[i] + "'");
    beta(static_cast<Eigen::Index>(i)) = it->get<double>();
  }
  return beta;
}

ojson linear_json(const LinearModel& m, FeatureSpec spec, Target t) {
  ojson j;
  j["family"] = "gaussian";
  j["coefficients"] = coefficients_json(m.coefficients, spec, t);
  j["residual_sd"] = m.residual_sd;
  j["range"] = {m.range_min, m.range_max};
  j["rank"] = m.rank;
  j["dropped_columns"] = m.dropped_columns;
  return j;
}

ojson logistic_json(const LogisticModel& m, FeatureSpec spec, Target t) {
  ojson j;
  j["family"] = "binomial";
  j["coefficients"] = coefficients_json(m.coefficients, spec, t);
  j["iterations"] = m.iterations;
  j["gradient_norm"] = m.gradient_norm;
  j["log_likelihood"] = m.log_likelihood;
  j["separation"] = m.separation;
  j["dropped_columns"] = m.dropped_columns;
  return j;
}

LinearModel linear_from(const nlohmann::json& j, FeatureSpec spec, Target t) {
  if (j.at("family") != "gaussian") throw std::runtime_error("model '" + std::string(to_string(t)) + "' must be gaussian");
  LinearModel m;
  m.coefficients = coefficients_from(j.at("coefficients"), spec, t);
  m.residual_sd = j.at("residual_sd").get<double>();
  m.range_min = j.at("range").at(0).get<double>();
  m.range_max = j.at("range").at(1).get<double>();
  m.rank = j.value("rank", static_cast<int>(m.coefficients.size()));
  m.dropped_columns = j.value("dropped_columns", std::vector<int>{});
  return m;
}

LogisticModel logistic_from(const nlohmann::json& j, FeatureSpec spec, Target t) {
  if (j.at("family") != "binomial") throw std::runtime_error("model '" + std::string(to_string(t)) + "' must be binomial");
  LogisticModel m;
  m.coefficients = coefficients_from(j.at("coefficients"), spec, t);
  m.iterations = j.value("iterations", 0);
  m.gradient_norm = j.value("gradient_norm", 0.0);
  m.log_likelihood = j.value("log_likelihood", 0.0);
  m.separation = j.value("separation", false);
  m.dropped_columns = j.value("dropped_columns", std::vector<int>{});
  return m;
}

}  // namespace

Design build_design(const Cohort& cohort, FeatureSpec spec, Target target) {
  const int first = is_covariate(target) ? 1 : 0;
  std::size_t rows = 0;
  for (const auto& p : cohort.persons()) rows += static_cast<std::size_t>(std::max(0, p.last_month() + 1 - first));

  const auto cols = static_cast<Eigen::Index>(feature_count(spec, target));
  Design d;
  // Row-major fill, then a single transpose into the column-major design.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> X(static_cast<Eigen::Index>(rows), cols);
  d.y.resize(static_cast<Eigen::Index>(rows));
  d.person_ids.reserve(rows);
  d.months.reserve(rows);

  Eigen::Index row = 0;
  for (const auto& p : cohort.persons()) {
    for (int k = first; k <= p.last_month(); ++k, ++row) {
      const HistoryView h{p.baseline, visible(p, k, target)};
      build_features(h, k, spec, target, std::span<double>(X.row(row).data(), static_cast<std::size_t>(cols)));
      d.y(row) = response(p, k, target);
      d.person_ids.push_back(p.id);
      d.months.push_back(k);
    }
  }
  d.X = X;
  return d;
}

ParametricModelSet::ParametricModelSet(FeatureSpec spec, LinearModel cd4, LinearModel rna, LogisticModel high_bmi,
                                       LogisticModel insti, LogisticModel event)
    : spec_(spec),
      cd4_(std::move(cd4)),
      rna_(std::move(rna)),
      high_bmi_(std::move(high_bmi)),
      insti_(std::move(insti)),
      event_(std::move(event)) {
  auto check = [&](const Eigen::VectorXd& beta, Target t) {
    if (static_cast<std::size_t>(beta.size()) != feature_count(spec_, t))
      throw std::invalid_argument("ParametricModelSet: coefficient length mismatch for " + std::string(to_string(t)));
  };
  check(cd4_.coefficients, Target::Cd4);
  check(rna_.coefficients, Target::Rna);
  check(high_bmi_.coefficients, Target::HighBmi);
  check(insti_.coefficients, Target::Insti);
  check(event_.coefficients, Target::Event);
}

CovariateDistribution ParametricModelSet::covariate_step(const HistoryView& h, int k, ModelState*) const {
  CovariateDistribution out;
  out.cd4 = {features_dot(h, k, spec_, Target::Cd4, cd4_.coefficients), cd4_.residual_sd, cd4_.range_min,
             cd4_.range_max};
  out.rna = {features_dot(h, k, spec_, Target::Rna, rna_.coefficients), rna_.residual_sd, rna_.range_min,
             rna_.range_max};
  out.high_bmi_prob = expit(features_dot(h, k, spec_, Target::HighBmi, high_bmi_.coefficients));
  return out;
}

double ParametricModelSet::treatment_prob(const HistoryView& h, int k, ModelState*) const {
  return expit(features_dot(h, k, spec_, Target::Insti, insti_.coefficients));
}

double ParametricModelSet::hazard(const HistoryView& h, int k, ModelState*) const {
  return expit(features_dot(h, k, spec_, Target::Event, event_.coefficients));
}

std::string ParametricModelSet::describe() const { return "parametric:" + std::string(to_string(spec_)); }

nlohmann::ordered_json ParametricModelSet::to_json() const {
  ojson doc;
  doc["format"] = "gnice-parametric-modelset";
  doc["version"] = kParametricFormatVersion;
  doc["spec"] = std::string(to_string(spec_));
  doc["models"]["cd4"] = linear_json(cd4_, spec_, Target::Cd4);
  doc["models"]["rna"] = linear_json(rna_, spec_, Target::Rna);
  doc["models"]["high_bmi"] = logistic_json(high_bmi_, spec_, Target::HighBmi);
  doc["models"]["insti"] = logistic_json(insti_, spec_, Target::Insti);
  doc["models"]["event"] = logistic_json(event_, spec_, Target::Event);
  return doc;
}

ParametricModelSet ParametricModelSet::from_json(const nlohmann::json& doc) {
  if (doc.value("format", "") != "gnice-parametric-modelset")
    throw std::runtime_error("not a parametric model-set document");
  const int version = doc.at("version").get<int>();
  if (version != kParametricFormatVersion)
    throw std::runtime_error("unsupported parametric model-set version " + std::to_string(version));
  const FeatureSpec spec = parse_feature_spec(doc.at("spec").get<std::string>());
  const auto& m = doc.at("models");
  return ParametricModelSet(spec, linear_from(m.at("cd4"), spec, Target::Cd4),
                            linear_from(m.at("rna"), spec, Target::Rna),
                            logistic_from(m.at("high_bmi"), spec, Target::HighBmi),
                            logistic_from(m.at("insti"), spec, Target::Insti),
                            logistic_from(m.at("event"), spec, Target::Event));
}

void ParametricModelSet::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

ParametricModelSet ParametricModelSet::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return from_json(nlohmann::json::parse(in));
}

ParametricModelSet fit_parametric_modelset(const Cohort& cohort, FeatureSpec spec, ParametricFitOptions options) {
  std::optional<LinearModel> cd4, rna;
  std::optional<LogisticModel> bmi, insti, event;
  parallel_for(5, options.threads, [&](std::size_t begin, std::size_t end, int) {
    for (std::size_t i = begin; i < end; ++i) {
      const Target t = kAllTargets[i];
      const Design d = build_design(cohort, spec, t);
      switch (t) {
        case Target::Cd4: cd4 = fit_linear(d.X, d.y); break;
        case Target::Rna: rna = fit_linear(d.X, d.y); break;
        case Target::HighBmi: bmi = fit_logistic(d.X, d.y, options.logistic); break;
        case Target::Insti: insti = fit_logistic(d.X, d.y, options.logistic); break;
        case Target::Event: event = fit_logistic(d.X, d.y, options.logistic); break;
      }
    }
  });
  return ParametricModelSet(spec, std::move(*cd4), std::move(*rna), std::move(*bmi), std::move(*insti),
                            std::move(*event));
}

namespace {

// Inverse of a symmetric PSD information matrix restricted to the retained columns.
Eigen::VectorXd diag_inverse(const Eigen::MatrixXd& info, const std::vector<int>& dropped) {
  const Eigen::Index p = info.rows();
  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < p; ++j)
    if (std::find(dropped.begin(), dropped.end(), static_cast<int>(j)) == dropped.end()) keep.push_back(j);
  const auto q = static_cast<Eigen::Index>(keep.size());
  Eigen::MatrixXd sub(q, q);
  for (Eigen::Index a = 0; a < q; ++a)
    for (Eigen::Index b = 0; b < q; ++b) sub(a, b) = info(keep[a], keep[b]);
  // Scale to unit diagonal before inverting; raw columns span many orders of magnitude.
  const Eigen::VectorXd s = sub.diagonal().cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd scaled = s.asDiagonal() * sub * s.asDiagonal();
  const Eigen::MatrixXd inv = scaled.ldlt().solve(Eigen::MatrixXd::Identity(q, q));
  Eigen::VectorXd out = Eigen::VectorXd::Zero(p);
  for (Eigen::Index a = 0; a < q; ++a) out(keep[a]) = std::sqrt(std::max(0.0, inv(a, a))) * s(a);
  return out;
}

}  // namespace

Eigen::VectorXd standard_errors(const Eigen::MatrixXd& X, const LinearModel& model) {
  const Eigen::MatrixXd info = X.transpose() * X;
  return model.residual_sd * diag_inverse(info, model.dropped_columns);
}

Eigen::VectorXd standard_errors(const Eigen::MatrixXd& X, const LogisticModel& model) {
  const Eigen::VectorXd eta = X * model.coefficients;
  Eigen::VectorXd w(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double p = expit(eta(i));
    w(i) = p * (1.0 - p);
  }
  const Eigen::MatrixXd info = X.transpose() * w.asDiagonal() * X;
  return diag_inverse(info, model.dropped_columns);
}

}  // namespace gnice
