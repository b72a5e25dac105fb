#include "gnice/deepnet.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>

#include "gnice/distributions.hpp"
#include "gnice/log.hpp"

namespace gnice {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string_view to_string(NetworkRole role) { return role == NetworkRole::Covariate ? "covariate" : "outcome"; }

NetworkRole parse_network_role(std::string_view text) {
  if (text == "covariate") return NetworkRole::Covariate;
  if (text == "outcome") return NetworkRole::Outcome;
  throw std::invalid_argument("unknown network role '" + std::string(text) + "'");
}

// ---------------------------------------------------------------- config

nlohmann::ordered_json to_json(const NetworkConfig& c) {
  return {{"feature_dim", c.feature_dim},   {"hidden_size", c.hidden_size},     {"num_layers", c.num_layers},
          {"dropout_rate", c.dropout_rate}, {"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
          {"weight_decay", c.weight_decay}, {"max_epochs", c.max_epochs},       {"patience", c.patience}};
}

void validate(const NetworkConfig& c) {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("network config: " + field + " " + why);
  };
  if (c.feature_dim < 1) fail("feature_dim", "must be >= 1");
  if (c.hidden_size < 1) fail("hidden_size", "must be >= 1");
  if (c.num_layers < 1) fail("num_layers", "must be >= 1");
  if (!(c.dropout_rate >= 0.0 && c.dropout_rate < 1.0)) fail("dropout_rate", "must be in [0,1)");
  if (!(c.learning_rate >= 0.0) || !std::isfinite(c.learning_rate)) fail("learning_rate", "must be >= 0");
  if (c.batch_size < 1) fail("batch_size", "must be >= 1");
  if (!(c.weight_decay >= 0.0) || !std::isfinite(c.weight_decay)) fail("weight_decay", "must be >= 0");
  if (c.max_epochs < 1) fail("max_epochs", "must be >= 1");
  if (c.patience < 1) fail("patience", "must be >= 1");
}

NetworkConfig network_config_from_json(const nlohmann::json& j, NetworkConfig c) {
  if (!j.is_object()) throw std::invalid_argument("network config: expected an object");
  for (const auto& [key, v] : j.items()) {
    if (key == "feature_dim") c.feature_dim = v.get<int>();
    else if (key == "hidden_size") c.hidden_size = v.get<int>();
    else if (key == "num_layers") c.num_layers = v.get<int>();
    else if (key == "dropout_rate") c.dropout_rate = v.get<double>();
    else if (key == "learning_rate") c.learning_rate = v.get<double>();
    else if (key == "batch_size") c.batch_size = v.get<int>();
    else if (key == "weight_decay") c.weight_decay = v.get<double>();
    else if (key == "max_epochs") c.max_epochs = v.get<int>();
    else if (key == "patience") c.patience = v.get<int>();
    else throw std::invalid_argument("network config: unknown field '" + key + "'");
  }
  validate(c);
  return c;
}

NetworkConfig paper_config(ScenarioKind scenario, int n, NetworkRole role) {
  // {feature, hidden, layers, dropout, lr, batch, wd, max_epochs, patience}
  const bool cov = role == NetworkRole::Covariate;
  const int max_epochs = cov ? 5000 : 1000;
  if (scenario == ScenarioKind::Simple && n == 10000)
    return cov ? NetworkConfig{128, 64, 3, 0.19, 4.1e-4, 1024, 3.3e-6, max_epochs, 50}
               : NetworkConfig{128, 64, 4, 0.15, 4.7e-5, 512, 7.4e-4, max_epochs, 50};
  if (scenario == ScenarioKind::Simple && n == 1000)
    return cov ? NetworkConfig{512, 64, 2, 0.45, 3.8e-4, 512, 4.1e-5, max_epochs, 50}
               : NetworkConfig{128, 128, 2, 0.23, 6.7e-4, 512, 3.6e-5, max_epochs, 50};
  if (scenario == ScenarioKind::Complex && n == 10000)
    return cov ? NetworkConfig{128, 64, 2, 0.36, 4.4e-4, 512, 4.7e-5, max_epochs, 50}
               : NetworkConfig{512, 256, 2, 0.30, 2.4e-5, 1024, 4.4e-4, max_epochs, 50};
  if (scenario == ScenarioKind::Complex && n == 1000)
    return cov ? NetworkConfig{512, 64, 2, 0.36, 1.8e-4, 1024, 3.1e-4, max_epochs, 50}
               : NetworkConfig{512, 128, 2, 0.19, 5.5e-4, 1024, 1.4e-6, max_epochs, 50};
  throw std::invalid_argument("no reference configuration for n = " + std::to_string(n));
}

NetworkConfig desk_config(NetworkRole role) {
  NetworkConfig c;
  if (role == NetworkRole::Outcome) {
    c.hidden_size = 16;
    c.feature_dim = 16;
  }
  return c;
}

// ---------------------------------------------------------------- encoding

NormalizationStats compute_stats(const Cohort& cohort, std::span<const std::size_t> persons) {
  NormalizationStats s;
  s.horizon = cohort.horizon();
  double n = 0, age = 0, age2 = 0, sm = 0, sm2 = 0;
  double m = 0, cd4 = 0, cd42 = 0, rna = 0, rna2 = 0;
  for (const auto i : persons) {
    const auto& p = cohort[i];
    n += 1;
    age += p.baseline.age;
    age2 += p.baseline.age * p.baseline.age;
    sm += p.baseline.smoking;
    sm2 += p.baseline.smoking * p.baseline.smoking;
    for (const auto& r : p.records) {
      m += 1;
      cd4 += r.cd4;
      cd42 += r.cd4 * r.cd4;
      rna += r.rna;
      rna2 += r.rna * r.rna;
    }
  }
  if (n == 0) throw std::invalid_argument("compute_stats: no persons");
  auto sd = [](double s1, double s2, double k) {
    const double var = std::max(0.0, s2 / k - (s1 / k) * (s1 / k));
    return var > 1e-12 ? std::sqrt(var) : 1.0;
  };
  s.age_mean = age / n;
  s.age_sd = sd(age, age2, n);
  s.smoking_mean = sm / n;
  s.smoking_sd = sd(sm, sm2, n);
  s.cd4_mean = cd4 / m;
  s.cd4_sd = sd(cd4, cd42, m);
  s.rna_mean = rna / m;
  s.rna_sd = sd(rna, rna2, m);
  return s;
}

nn::Architecture network_architecture(NetworkRole role, const NetworkConfig& c) {
  nn::Architecture a;
  a.input_dim = kNetworkInputDim;
  a.feature_dim = c.feature_dim;
  a.hidden_size = c.hidden_size;
  a.num_layers = c.num_layers;
  if (role == NetworkRole::Covariate) {
    a.heads = {{"cd4", nn::HeadKind::Gaussian, 0},
               {"rna", nn::HeadKind::Gaussian, 0},
               {"high_bmi", nn::HeadKind::Bernoulli, 0},
               {"insti", nn::HeadKind::Bernoulli, kTreatmentSideDim}};
  } else {
    a.heads = {{"event", nn::HeadKind::Bernoulli, 0}};
  }
  return a;
}

namespace {

// One step's input vector. `r` is the record the step conditions on (nullptr: zeros).
template <typename Out>
void encode_step(Out&& out, const Baseline& b, const MonthRecord* r, int k, const NormalizationStats& s) {
  out(0) = b.sex;
  out(1) = (b.age - s.age_mean) / s.age_sd;
  out(2) = (b.smoking - s.smoking_mean) / s.smoking_sd;
  out(3) = r ? (r->cd4 - s.cd4_mean) / s.cd4_sd : 0.0;
  out(4) = r ? (r->rna - s.rna_mean) / s.rna_sd : 0.0;
  out(5) = r ? r->high_bmi : 0.0;
  out(6) = r ? r->insti : 0.0;
  out(7) = static_cast<double>(k) / s.horizon;
  out(8) = in_early_regime(k) ? 1.0 : 0.0;
}

template <typename Out>
void encode_side(Out&& out, const MonthRecord& r, const NormalizationStats& s) {
  out(0) = (r.cd4 - s.cd4_mean) / s.cd4_sd;
  out(1) = (r.rna - s.rna_mean) / s.rna_sd;
  out(2) = r.high_bmi;
}

}  // namespace

nn::SequenceBatch encode_batch(const Cohort& cohort, std::span<const std::size_t> persons, NetworkRole role,
                               const NormalizationStats& stats) {
  nn::SequenceBatch batch;
  batch.B = static_cast<int>(persons.size());
  int T = 0;
  for (const auto i : persons) T = std::max(T, static_cast<int>(cohort[i].records.size()));
  batch.T = T;
  const auto Tu = static_cast<std::size_t>(T);
  const std::size_t heads = role == NetworkRole::Covariate ? 4 : 1;
  batch.inputs.assign(Tu, MatrixXd::Zero(kNetworkInputDim, batch.B));
  batch.targets.assign(heads, MatrixXd::Zero(T, batch.B));
  batch.masks.assign(heads, MatrixXd::Zero(T, batch.B));
  batch.side.assign(heads, {});
  if (role == NetworkRole::Covariate) batch.side[3].assign(Tu, MatrixXd::Zero(kTreatmentSideDim, batch.B));

  for (int col = 0; col < batch.B; ++col) {
    const auto& p = cohort[persons[static_cast<std::size_t>(col)]];
    const int len = static_cast<int>(p.records.size());
    for (int k = 0; k < len; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      const auto& cur = p.records[ku];
      auto x = batch.inputs[ku].col(col);
      if (role == NetworkRole::Covariate) {
        encode_step(x, p.baseline, k > 0 ? &p.records[ku - 1] : nullptr, k, stats);
        encode_side(batch.side[3][ku].col(col), cur, stats);
        if (k > 0) {
          batch.targets[0](k, col) = (cur.cd4 - stats.cd4_mean) / stats.cd4_sd;
          batch.targets[1](k, col) = (cur.rna - stats.rna_mean) / stats.rna_sd;
          batch.targets[2](k, col) = cur.high_bmi;
          for (int h = 0; h < 3; ++h) batch.masks[static_cast<std::size_t>(h)](k, col) = 1.0;
        }
        batch.targets[3](k, col) = cur.insti;
        batch.masks[3](k, col) = 1.0;
      } else {
        encode_step(x, p.baseline, &cur, k, stats);
        batch.targets[0](k, col) = p.event_time && *p.event_time == k + 1 ? 1.0 : 0.0;
        batch.masks[0](k, col) = 1.0;
      }
    }
  }
  return batch;
}

// ---------------------------------------------------------------- training

nlohmann::ordered_json to_json(const TrainingHistory& h) {
  nlohmann::ordered_json j;
  j["initial_train_loss"] = h.initial_train_loss;
  j["best_epoch"] = h.best_epoch;
  j["best_validation_loss"] = h.best_validation_loss;
  auto& e = j["epochs"] = nlohmann::ordered_json::array();
  for (const auto& r : h.epochs)
    e.push_back({{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"validation_loss", r.validation_loss},
                 {"seconds", r.seconds}});
  return j;
}

PersonSplit split_persons(std::size_t n, std::uint64_t seed, double validation_fraction) {
  PersonSplit s;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (n < 5) {
    s.train = idx;
    s.validation = idx;
    return s;
  }
  RngStream rng(derive_seed(seed, 0x5a11), 0);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(idx[i], idx[static_cast<std::size_t>(rng.below(i + 1))]);
  const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(validation_fraction * n)));
  s.validation.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.validation.begin(), s.validation.end());
  return s;
}

namespace {

constexpr std::size_t kEvalBatch = 512;

template <typename Fn>
void for_batches(std::span<const std::size_t> ids, std::size_t size, Fn&& fn) {
  for (std::size_t start = 0; start < ids.size(); start += size)
    fn(ids.subspan(start, std::min(size, ids.size() - start)));
}

double evaluate_loss(const nn::SequenceNetwork& net, const VectorXd& params, const Cohort& cohort,
                     std::span<const std::size_t> ids, NetworkRole role, const NormalizationStats& stats) {
  nn::LossTally tally;
  nn::ForwardCache cache;
  for_batches(ids, kEvalBatch, [&](std::span<const std::size_t> chunk) {
    const auto batch = encode_batch(cohort, chunk, role, stats);
    net.forward(params, batch, cache, nullptr);
    tally.add(net, cache, batch);
  });
  return tally.total();
}

void fill_covariate_calibration(TrainedNetwork& t, const nn::SequenceNetwork& net, const Cohort& cohort,
                                const PersonSplit& split) {
  double cd4_min = INFINITY, cd4_max = -INFINITY, rna_min = INFINITY, rna_max = -INFINITY;
  for (const auto i : split.train)
    for (const auto& r : cohort[i].records) {
      cd4_min = std::min(cd4_min, r.cd4);
      cd4_max = std::max(cd4_max, r.cd4);
      rna_min = std::min(rna_min, r.rna);
      rna_max = std::max(rna_max, r.rna);
    }
  t.cd4_min = cd4_min;
  t.cd4_max = cd4_max;
  t.rna_min = rna_min;
  t.rna_max = rna_max;

  double ss_cd4 = 0, ss_rna = 0, w = 0;
  nn::ForwardCache cache;
  for_batches(split.validation, kEvalBatch, [&](std::span<const std::size_t> chunk) {
    const auto batch = encode_batch(cohort, chunk, NetworkRole::Covariate, t.stats);
    net.forward(t.params, batch, cache, nullptr);
    const auto& m = batch.masks[0].array();
    ss_cd4 += (m * (cache.outputs[0] - batch.targets[0]).array().square()).sum();
    ss_rna += (m * (cache.outputs[1] - batch.targets[1]).array().square()).sum();
    w += m.sum();
  });
  t.cd4_residual_sd = w > 0 ? std::sqrt(ss_cd4 / w) * t.stats.cd4_sd : 0.0;
  t.rna_residual_sd = w > 0 ? std::sqrt(ss_rna / w) * t.stats.rna_sd : 0.0;
}

}  // namespace

TrainedNetwork train_network(const Cohort& cohort, NetworkRole role, const NetworkConfig& config,
                             std::uint64_t seed) {
  validate(config);
  const auto t_start = std::chrono::steady_clock::now();
  const PersonSplit split = split_persons(cohort.size(), seed);
  TrainedNetwork out;
  out.role = role;
  out.config = config;
  out.seed = seed;
  out.stats = compute_stats(cohort, split.train);
  out.train_persons = split.train.size();
  out.validation_persons = split.validation.size();

  const nn::SequenceNetwork net(network_architecture(role, config));
  VectorXd params = net.initialize(derive_seed(seed, 0x1417));
  nn::AdamW adam(params.size(), {config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay});

  TrainingHistory& hist = out.history;
  hist.initial_train_loss = evaluate_loss(net, params, cohort, split.train, role, out.stats);
  VectorXd best = params;
  hist.best_validation_loss = INFINITY;

  std::vector<std::size_t> order = split.train;
  nn::ForwardCache cache;
  std::vector<MatrixXd> d_out;
  VectorXd grad;
  const std::uint64_t shuffle_seed = derive_seed(seed, 0x5f1e);
  const std::uint64_t dropout_seed = derive_seed(seed, 0xd20);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    RngStream rng(shuffle_seed, static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);

    double loss_sum = 0.0;
    int batches = 0;
    for_batches(order, static_cast<std::size_t>(config.batch_size), [&](std::span<const std::size_t> chunk) {
      const auto batch = encode_batch(cohort, chunk, role, out.stats);
      const nn::DropoutPlan plan{config.dropout_rate,
                                 derive_seed(dropout_seed, static_cast<std::uint64_t>(epoch) * 1000003u +
                                                               static_cast<std::uint64_t>(batches))};
      net.forward(params, batch, cache, &plan);
      const double loss = nn::sequence_loss(net, cache, batch, &d_out);
      if (!std::isfinite(loss)) {
        throw TrainingDivergedError("training diverged: non-finite loss in epoch " + std::to_string(epoch) +
                                        ", batch " + std::to_string(batches),
                                    hist);
      }
      net.backward(params, batch, cache, d_out, grad);
      nn::clip_gradient_norm(grad, 1.0);
      adam.step(params, grad);
      loss_sum += loss;
      ++batches;
    });

    const double val = evaluate_loss(net, params, cohort, split.validation, role, out.stats);
    if (!std::isfinite(val) || !params.allFinite())
      throw TrainingDivergedError("training diverged: non-finite validation loss in epoch " + std::to_string(epoch),
                                  hist);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    hist.epochs.push_back({epoch, batches ? loss_sum / batches : 0.0, val, secs});
    log_debug(std::string(to_string(role)) + " epoch " + std::to_string(epoch) + " train " +
              std::to_string(hist.epochs.back().train_loss) + " val " + std::to_string(val));
    if (val < hist.best_validation_loss) {
      hist.best_validation_loss = val;
      hist.best_epoch = epoch;
      best = params;
    } else if (epoch - hist.best_epoch >= config.patience) {
      break;
    }
  }

  out.params = std::move(best);
  if (role == NetworkRole::Covariate) fill_covariate_calibration(out, net, cohort, split);
  const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  log_info(std::string(to_string(role)) + " network: best epoch " + std::to_string(hist.best_epoch) + " of " +
           std::to_string(hist.epochs.size()) + ", validation loss " + std::to_string(hist.best_validation_loss) +
           ", " + std::to_string(total) + " s");
  return out;
}

// ---------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[8] = {'G', 'N', 'I', 'C', 'E', 'N', 'E', 'T'};

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

std::uint64_t get_uint(std::istream& in, int bytes) {
  unsigned char b[8] = {};
  in.read(reinterpret_cast<char*>(b), bytes);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

nlohmann::ordered_json stats_json(const NormalizationStats& s) {
  return {{"age_mean", s.age_mean}, {"age_sd", s.age_sd}, {"smoking_mean", s.smoking_mean},
          {"smoking_sd", s.smoking_sd}, {"cd4_mean", s.cd4_mean}, {"cd4_sd", s.cd4_sd},
          {"rna_mean", s.rna_mean}, {"rna_sd", s.rna_sd}, {"horizon", s.horizon}};
}

NormalizationStats stats_from(const nlohmann::json& j) {
  NormalizationStats s;
  s.age_mean = j.at("age_mean");
  s.age_sd = j.at("age_sd");
  s.smoking_mean = j.at("smoking_mean");
  s.smoking_sd = j.at("smoking_sd");
  s.cd4_mean = j.at("cd4_mean");
  s.cd4_sd = j.at("cd4_sd");
  s.rna_mean = j.at("rna_mean");
  s.rna_sd = j.at("rna_sd");
  s.horizon = j.at("horizon");
  return s;
}

TrainingHistory history_from(const nlohmann::json& j) {
  TrainingHistory h;
  h.initial_train_loss = j.value("initial_train_loss", 0.0);
  h.best_epoch = j.value("best_epoch", 0);
  h.best_validation_loss = j.value("best_validation_loss", 0.0);
  for (const auto& e : j.value("epochs", nlohmann::json::array()))
    h.epochs.push_back({e.at("epoch"), e.at("train_loss"), e.at("validation_loss"), e.value("seconds", 0.0)});
  return h;
}

}  // namespace

void save_checkpoint(const TrainedNetwork& t, const std::filesystem::path& path) {
  const auto net = t.network();
  nlohmann::ordered_json h;
  h["role"] = std::string(to_string(t.role));
  h["config"] = to_json(t.config);
  h["seed"] = t.seed;
  h["stats"] = stats_json(t.stats);
  h["residual_sd"] = {{"cd4", t.cd4_residual_sd}, {"rna", t.rna_residual_sd}};
  h["range"] = {{"cd4", {t.cd4_min, t.cd4_max}}, {"rna", {t.rna_min, t.rna_max}}};
  h["persons"] = {{"train", t.train_persons}, {"validation", t.validation_persons}};
  auto& layout = h["layout"] = nlohmann::ordered_json::array();
  for (const auto& b : net.layout().blocks()) layout.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}});
  h["history"] = to_json(t.history);
  // Wall-clock time would make identical trainings write different bytes.
  for (auto& e : h["history"]["epochs"]) e.erase("seconds");
  const std::string header = h.dump();

  if (t.params.size() != net.parameter_count()) throw std::invalid_argument("save_checkpoint: parameter count mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kMagic, 8);
  put_u32(out, kCheckpointVersion);
  put_u64(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (Eigen::Index i = 0; i < t.params.size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(t.params(i)));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

TrainedNetwork load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw std::runtime_error("checkpoint: bad magic in " + path.string());
  const auto version = static_cast<std::uint32_t>(get_uint(in, 4));
  if (version != kCheckpointVersion) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const auto len = get_uint(in, 8);
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("checkpoint: truncated header");
  const auto h = nlohmann::json::parse(header);

  TrainedNetwork t;
  t.role = parse_network_role(h.at("role").get<std::string>());
  t.config = network_config_from_json(h.at("config"));
  t.seed = h.value("seed", std::uint64_t{0});
  t.stats = stats_from(h.at("stats"));
  t.cd4_residual_sd = h.at("residual_sd").at("cd4");
  t.rna_residual_sd = h.at("residual_sd").at("rna");
  t.cd4_min = h.at("range").at("cd4").at(0);
  t.cd4_max = h.at("range").at("cd4").at(1);
  t.rna_min = h.at("range").at("rna").at(0);
  t.rna_max = h.at("range").at("rna").at(1);
  t.train_persons = h.at("persons").at("train");
  t.validation_persons = h.at("persons").at("validation");
  t.history = history_from(h.at("history"));

  const auto net = t.network();
  const auto& blocks = net.layout().blocks();
  const auto& declared = h.at("layout");
  if (declared.size() != blocks.size()) throw std::runtime_error("checkpoint: layout does not match config");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (declared[i].at("name") != blocks[i].name || declared[i].at("rows") != blocks[i].rows ||
        declared[i].at("cols") != blocks[i].cols)
      throw std::runtime_error("checkpoint: layout block " + blocks[i].name + " does not match config");
  }
  t.params.resize(net.parameter_count());
  for (Eigen::Index i = 0; i < t.params.size(); ++i) t.params(i) = std::bit_cast<double>(get_uint(in, 8));
  if (in.peek() != std::char_traits<char>::eof()) throw std::runtime_error("checkpoint: trailing bytes");
  return t;
}

// ---------------------------------------------------------------- model set

namespace {

struct DeepState final : ModelState {
  nn::SequenceNetwork::StepState cov, out;
  int cov_pos = 0, out_pos = 0;
};

}  // namespace

DeepModelSet::DeepModelSet(TrainedNetwork covariate, TrainedNetwork outcome)
    : cov_(std::move(covariate)),
      out_(std::move(outcome)),
      cov_net_(cov_.network()),
      out_net_(out_.network()) {
  if (cov_.role != NetworkRole::Covariate || out_.role != NetworkRole::Outcome)
    throw std::invalid_argument("DeepModelSet: expected a covariate and an outcome network");
  if (cov_.stats.horizon != out_.stats.horizon) throw std::invalid_argument("DeepModelSet: horizon mismatch");
  if (cov_.params.size() != cov_net_.parameter_count() || out_.params.size() != out_net_.parameter_count())
    throw std::invalid_argument("DeepModelSet: parameter count mismatch");
  cd4_head_ = cov_net_.head_index("cd4");
  rna_head_ = cov_net_.head_index("rna");
  bmi_head_ = cov_net_.head_index("high_bmi");
  insti_head_ = cov_net_.head_index("insti");
  event_head_ = out_net_.head_index("event");
}

std::unique_ptr<ModelState> DeepModelSet::make_state() const {
  auto s = std::make_unique<DeepState>();
  s->cov = cov_net_.initial_state();
  s->out = out_net_.initial_state();
  return s;
}

namespace {

DeepState& usable_state(ModelState* state, std::unique_ptr<ModelState>& scratch, const DeepModelSet& m) {
  if (state) {
    auto* s = dynamic_cast<DeepState*>(state);
    if (!s) throw std::invalid_argument("DeepModelSet: foreign state object");
    return *s;
  }
  scratch = m.make_state();
  return static_cast<DeepState&>(*scratch);
}

// Advances the covariate trunk so that position k has been consumed.
void advance_covariate(const nn::SequenceNetwork& net, const TrainedNetwork& t, DeepState& s, const HistoryView& h,
                       int k) {
  if (s.cov_pos > k + 1) throw std::logic_error("DeepModelSet: covariate calls went back in time");
  std::array<double, kNetworkInputDim> x{};
  for (; s.cov_pos <= k; ++s.cov_pos) {
    const int pos = s.cov_pos;
    encode_step([&](int i) -> double& { return x[static_cast<std::size_t>(i)]; }, h.baseline,
                pos > 0 ? &h.records[static_cast<std::size_t>(pos - 1)] : nullptr, pos, t.stats);
    net.step(t.params, x, s.cov);
  }
}

void advance_outcome(const nn::SequenceNetwork& net, const TrainedNetwork& t, DeepState& s, const HistoryView& h,
                     int k) {
  if (s.out_pos > k + 1) throw std::logic_error("DeepModelSet: hazard calls went back in time");
  std::array<double, kNetworkInputDim> x{};
  for (; s.out_pos <= k; ++s.out_pos) {
    const int pos = s.out_pos;
    encode_step([&](int i) -> double& { return x[static_cast<std::size_t>(i)]; }, h.baseline,
                &h.records[static_cast<std::size_t>(pos)], pos, t.stats);
    net.step(t.params, x, s.out);
  }
}

}  // namespace

CovariateDistribution DeepModelSet::covariate_step(const HistoryView& h, int k, ModelState* state) const {
  if (static_cast<int>(h.records.size()) < k) throw std::invalid_argument("covariate_step: history too short");
  std::unique_ptr<ModelState> scratch;
  DeepState& s = usable_state(state, scratch, *this);
  advance_covariate(cov_net_, cov_, s, h, k);
  const VectorXd& top = s.cov.h.back();
  CovariateDistribution d;
  d.cd4 = {cov_net_.head_output(cov_.params, cd4_head_, top) * cov_.stats.cd4_sd + cov_.stats.cd4_mean,
           cov_.cd4_residual_sd, cov_.cd4_min, cov_.cd4_max};
  d.rna = {cov_net_.head_output(cov_.params, rna_head_, top) * cov_.stats.rna_sd + cov_.stats.rna_mean,
           cov_.rna_residual_sd, cov_.rna_min, cov_.rna_max};
  d.high_bmi_prob = expit(cov_net_.head_output(cov_.params, bmi_head_, top));
  return d;
}

double DeepModelSet::treatment_prob(const HistoryView& h, int k, ModelState* state) const {
  if (static_cast<int>(h.records.size()) < k + 1) throw std::invalid_argument("treatment_prob: history too short");
  std::unique_ptr<ModelState> scratch;
  DeepState& s = usable_state(state, scratch, *this);
  advance_covariate(cov_net_, cov_, s, h, k);
  std::array<double, kTreatmentSideDim> side{};
  encode_side([&](int i) -> double& { return side[static_cast<std::size_t>(i)]; },
              h.records[static_cast<std::size_t>(k)], cov_.stats);
  return expit(cov_net_.head_output(cov_.params, insti_head_, s.cov.h.back(), side));
}

double DeepModelSet::hazard(const HistoryView& h, int k, ModelState* state) const {
  if (static_cast<int>(h.records.size()) < k + 1) throw std::invalid_argument("hazard: history too short");
  std::unique_ptr<ModelState> scratch;
  DeepState& s = usable_state(state, scratch, *this);
  advance_outcome(out_net_, out_, s, h, k);
  return expit(out_net_.head_output(out_.params, event_head_, s.out.h.back()));
}

void DeepModelSet::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  save_checkpoint(cov_, dir / "covariate.gnet");
  save_checkpoint(out_, dir / "outcome.gnet");
}

DeepModelSet DeepModelSet::load(const std::filesystem::path& dir) {
  return DeepModelSet(load_checkpoint(dir / "covariate.gnet"), load_checkpoint(dir / "outcome.gnet"));
}

// ---------------------------------------------------------------- search

SearchSpace SearchSpace::reference(NetworkRole role) {
  SearchSpace s;
  s.feature_dims = {128, 512};
  s.hidden_sizes = {64, 128, 256};
  s.num_layers = {2, 3, 4};
  s.batch_sizes = {512, 1024};
  s.max_epochs = role == NetworkRole::Covariate ? 5000 : 1000;
  s.patience = 50;
  return s;
}

NetworkConfig SearchSpace::sample(RngStream& rng) const {
  auto pick = [&](const std::vector<int>& v, const char* name) {
    if (v.empty()) throw std::invalid_argument(std::string("search space: empty choice list ") + name);
    return v[static_cast<std::size_t>(rng.below(v.size()))];
  };
  auto log_uniform = [&](double lo, double hi) {
    return std::exp(std::log(lo) + rng.uniform() * (std::log(hi) - std::log(lo)));
  };
  NetworkConfig c;
  c.feature_dim = pick(feature_dims, "feature_dims");
  c.hidden_size = pick(hidden_sizes, "hidden_sizes");
  c.num_layers = pick(num_layers, "num_layers");
  c.dropout_rate = dropout_lo + rng.uniform() * (dropout_hi - dropout_lo);
  // Degenerate ranges reproduce the endpoint exactly, so collapsed spaces yield one config.
  c.learning_rate = lr_lo == lr_hi ? lr_lo : log_uniform(lr_lo, lr_hi);
  c.batch_size = pick(batch_sizes, "batch_sizes");
  c.weight_decay = wd_lo == wd_hi ? wd_lo : log_uniform(wd_lo, wd_hi);
  if (dropout_lo == dropout_hi) c.dropout_rate = dropout_lo;
  c.max_epochs = max_epochs;
  c.patience = patience;
  return c;
}

nlohmann::ordered_json to_json(const SearchSpace& s) {
  return {{"feature_dims", s.feature_dims}, {"hidden_sizes", s.hidden_sizes}, {"num_layers", s.num_layers},
          {"dropout", {s.dropout_lo, s.dropout_hi}}, {"learning_rate", {s.lr_lo, s.lr_hi}},
          {"batch_sizes", s.batch_sizes}, {"weight_decay", {s.wd_lo, s.wd_hi}}, {"max_epochs", s.max_epochs},
          {"patience", s.patience}};
}

SearchSpace search_space_from_json(const nlohmann::json& j, SearchSpace s) {
  if (!j.is_object()) throw std::invalid_argument("search space: expected an object");
  for (const auto& [key, v] : j.items()) {
    if (key == "feature_dims") s.feature_dims = v.get<std::vector<int>>();
    else if (key == "hidden_sizes") s.hidden_sizes = v.get<std::vector<int>>();
    else if (key == "num_layers") s.num_layers = v.get<std::vector<int>>();
    else if (key == "dropout") { s.dropout_lo = v.at(0); s.dropout_hi = v.at(1); }
    else if (key == "learning_rate") { s.lr_lo = v.at(0); s.lr_hi = v.at(1); }
    else if (key == "batch_sizes") s.batch_sizes = v.get<std::vector<int>>();
    else if (key == "weight_decay") { s.wd_lo = v.at(0); s.wd_hi = v.at(1); }
    else if (key == "max_epochs") s.max_epochs = v;
    else if (key == "patience") s.patience = v;
    else throw std::invalid_argument("search space: unknown field '" + key + "'");
  }
  if (!(s.lr_lo > 0 && s.lr_lo <= s.lr_hi)) throw std::invalid_argument("search space: learning_rate range invalid");
  if (!(s.wd_lo > 0 && s.wd_lo <= s.wd_hi)) throw std::invalid_argument("search space: weight_decay range invalid");
  if (!(s.dropout_lo >= 0 && s.dropout_lo <= s.dropout_hi && s.dropout_hi < 1))
    throw std::invalid_argument("search space: dropout range invalid");
  return s;
}

nlohmann::ordered_json to_json(const TrialRecord& t) {
  return {{"trial", t.trial},         {"config", to_json(t.config)}, {"validation_loss", t.validation_loss},
          {"best_epoch", t.best_epoch}, {"duplicate", t.duplicate},  {"seconds", t.seconds}};
}

SearchResult random_search(const Cohort& cohort, NetworkRole role, const SearchSpace& space, int trials,
                           std::uint64_t seed, const std::function<void(const TrialRecord&)>& on_trial) {
  if (trials < 1) throw std::invalid_argument("random_search: trials must be >= 1");
  SearchResult result;
  result.best_validation_loss = INFINITY;
  const std::uint64_t train_seed = derive_seed(seed, 0x7a1);
  std::map<std::string, std::size_t> seen;  // config text -> first trial index
  for (int i = 0; i < trials; ++i) {
    RngStream rng(derive_seed(seed, 0x5ea2c4), static_cast<std::uint64_t>(i));
    TrialRecord rec;
    rec.trial = i;
    rec.config = space.sample(rng);
    const std::string key = to_json(rec.config).dump();
    const auto t0 = std::chrono::steady_clock::now();
    if (const auto it = seen.find(key); it != seen.end()) {
      const auto& first = result.trials[it->second];
      rec.validation_loss = first.validation_loss;
      rec.best_epoch = first.best_epoch;
      rec.duplicate = true;
    } else {
      const auto trained = train_network(cohort, role, rec.config, train_seed);
      rec.validation_loss = trained.history.best_validation_loss;
      rec.best_epoch = trained.history.best_epoch;
      seen.emplace(key, result.trials.size());
      ++result.evaluations;
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (rec.validation_loss < result.best_validation_loss) {
      result.best_validation_loss = rec.validation_loss;
      result.best = rec.config;
    }
    result.trials.push_back(rec);
    if (on_trial) on_trial(rec);
  }
  return result;
}

}  // namespace gnice
