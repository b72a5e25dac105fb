#include "gnice/nn/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "gnice/distributions.hpp"
#include "gnice/rng.hpp"

namespace gnice::nn {

namespace {

using Eigen::ArrayXXd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd sigmoid(const MatrixXd& x) { return (1.0 + (-x.array()).exp()).inverse().matrix(); }

void fill_uniform(Eigen::Map<MatrixXd> m, double bound, RngStream& rng) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = (2.0 * rng.uniform() - 1.0) * bound;
}

MatrixXd dropout_mask(const DropoutPlan& plan, int layer, int t, Eigen::Index rows, Eigen::Index cols) {
  RngStream rng(derive_seed(plan.seed, static_cast<std::uint64_t>(layer) + 1), static_cast<std::uint64_t>(t));
  const double keep_scale = 1.0 / (1.0 - plan.rate);
  MatrixXd mask(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) mask(i, j) = rng.uniform() >= plan.rate ? keep_scale : 0.0;
  return mask;
}

void check_batch(const Architecture& a, const SequenceBatch& batch) {
  const auto T = static_cast<std::size_t>(batch.T);
  const auto nh = a.heads.size();
  if (batch.T < 0 || batch.B < 0) throw std::invalid_argument("SequenceBatch: negative shape");
  if (batch.inputs.size() != T) throw std::invalid_argument("SequenceBatch: inputs length != T");
  for (const auto& x : batch.inputs)
    if (x.rows() != a.input_dim || x.cols() != batch.B) throw std::invalid_argument("SequenceBatch: input shape mismatch");
  if (batch.targets.size() != nh || batch.masks.size() != nh)
    throw std::invalid_argument("SequenceBatch: need one target and mask matrix per head");
  for (std::size_t h = 0; h < nh; ++h) {
    if (batch.targets[h].rows() != batch.T || batch.targets[h].cols() != batch.B ||
        batch.masks[h].rows() != batch.T || batch.masks[h].cols() != batch.B)
      throw std::invalid_argument("SequenceBatch: target/mask shape mismatch for head " + a.heads[h].name);
    if (a.heads[h].side_dim > 0) {
      if (batch.side.size() != nh || batch.side[h].size() != T)
        throw std::invalid_argument("SequenceBatch: missing side inputs for head " + a.heads[h].name);
      for (const auto& s : batch.side[h])
        if (s.rows() != a.heads[h].side_dim || s.cols() != batch.B)
          throw std::invalid_argument("SequenceBatch: side input shape mismatch for head " + a.heads[h].name);
    }
  }
}

}  // namespace

SequenceNetwork::SequenceNetwork(Architecture arch) : arch_(std::move(arch)) {
  const auto& a = arch_;
  if (a.input_dim < 1 || a.feature_dim < 1 || a.hidden_size < 1 || a.num_layers < 1)
    throw std::invalid_argument("Architecture: dimensions must be positive");
  if (a.heads.empty()) throw std::invalid_argument("Architecture: at least one head required");
  proj_w_ = layout_.add("proj.W", a.feature_dim, a.input_dim);
  proj_b_ = layout_.add("proj.b", a.feature_dim, 1);
  const Eigen::Index H = a.hidden_size;
  for (int l = 0; l < a.num_layers; ++l) {
    const Eigen::Index in = l == 0 ? a.feature_dim : H;
    const std::string p = "lstm" + std::to_string(l) + ".";
    layers_.push_back({layout_.add(p + "Wx", 4 * H, in), layout_.add(p + "Wh", 4 * H, H), layout_.add(p + "b", 4 * H, 1)});
  }
  for (const auto& h : a.heads) {
    if (h.side_dim < 0) throw std::invalid_argument("HeadSpec: negative side_dim");
    const std::string p = "head." + h.name + ".";
    HeadBlocks hb{layout_.add(p + "W", 1, H), 0, 0};
    if (h.side_dim > 0) hb.v = layout_.add(p + "V", 1, h.side_dim);
    hb.b = layout_.add(p + "b", 1, 1);
    heads_.push_back(hb);
  }
}

std::size_t SequenceNetwork::head_index(const std::string& name) const {
  for (std::size_t i = 0; i < arch_.heads.size(); ++i)
    if (arch_.heads[i].name == name) return i;
  throw std::out_of_range("no head named " + name);
}

VectorXd SequenceNetwork::initialize(std::uint64_t seed) const {
  VectorXd p = VectorXd::Zero(layout_.size());
  RngStream rng(seed, 0);
  const double H = arch_.hidden_size;
  fill_uniform(layout_.view(p, proj_w_), std::sqrt(6.0 / (arch_.input_dim + arch_.feature_dim)), rng);
  for (const auto& l : layers_) {
    fill_uniform(layout_.view(p, l.wx), 1.0 / std::sqrt(H), rng);
    fill_uniform(layout_.view(p, l.wh), 1.0 / std::sqrt(H), rng);
    layout_.view(p, l.b).middleRows(arch_.hidden_size, arch_.hidden_size).setOnes();
  }
  for (std::size_t i = 0; i < heads_.size(); ++i) {
    const int fan_in = arch_.hidden_size + arch_.heads[i].side_dim;
    const double bound = std::sqrt(6.0 / (fan_in + 1));
    fill_uniform(layout_.view(p, heads_[i].w), bound, rng);
    if (arch_.heads[i].side_dim > 0) fill_uniform(layout_.view(p, heads_[i].v), bound, rng);
  }
  return p;
}

void SequenceNetwork::forward(const VectorXd& params, const SequenceBatch& batch, ForwardCache& cache,
                              const DropoutPlan* dropout) const {
  check_batch(arch_, batch);
  if (params.size() != layout_.size()) throw std::invalid_argument("forward: parameter vector has wrong size");
  const int T = batch.T, B = batch.B, L = arch_.num_layers;
  const Eigen::Index H = arch_.hidden_size;
  const bool train = dropout && dropout->rate > 0.0;
  if (train && !(dropout->rate < 1.0)) throw std::invalid_argument("dropout rate must be < 1");

  cache.T = T;
  cache.B = B;
  cache.proj.assign(static_cast<std::size_t>(T), MatrixXd());
  cache.layer_in.assign(static_cast<std::size_t>(L), std::vector<MatrixXd>(static_cast<std::size_t>(T)));
  cache.gates = cache.c = cache.h = cache.drop = cache.layer_in;

  const auto W = layout_.view(params, proj_w_);
  const auto b = layout_.view(params, proj_b_);
  for (int t = 0; t < T; ++t)
    cache.proj[static_cast<std::size_t>(t)] =
        ((W * batch.inputs[static_cast<std::size_t>(t)]).colwise() + b.col(0)).array().tanh().matrix();

  const MatrixXd zero = MatrixXd::Zero(H, B);
  for (int l = 0; l < L; ++l) {
    const auto lu = static_cast<std::size_t>(l);
    const auto Wx = layout_.view(params, layers_[lu].wx);
    const auto Wh = layout_.view(params, layers_[lu].wh);
    const auto bb = layout_.view(params, layers_[lu].b);
    for (int t = 0; t < T; ++t) {
      const auto tu = static_cast<std::size_t>(t);
      MatrixXd& x = cache.layer_in[lu][tu];
      if (l == 0) {
        x = cache.proj[tu];
      } else if (train) {
        cache.drop[lu - 1][tu] = dropout_mask(*dropout, l - 1, t, H, B);
        x = cache.h[lu - 1][tu].cwiseProduct(cache.drop[lu - 1][tu]);
      } else {
        x = cache.h[lu - 1][tu];
      }
      const MatrixXd& h_prev = t > 0 ? cache.h[lu][tu - 1] : zero;
      const MatrixXd& c_prev = t > 0 ? cache.c[lu][tu - 1] : zero;
      MatrixXd a = Wx * x + Wh * h_prev;
      a.colwise() += bb.col(0);
      MatrixXd& g = cache.gates[lu][tu];
      g.resize(4 * H, B);
      g.topRows(2 * H) = sigmoid(a.topRows(2 * H));
      g.middleRows(2 * H, H) = a.middleRows(2 * H, H).array().tanh().matrix();
      g.bottomRows(H) = sigmoid(a.bottomRows(H));
      cache.c[lu][tu] = g.middleRows(H, H).cwiseProduct(c_prev) + g.topRows(H).cwiseProduct(g.middleRows(2 * H, H));
      cache.h[lu][tu] = g.bottomRows(H).cwiseProduct(cache.c[lu][tu].array().tanh().matrix());
    }
  }

  const auto& top = cache.h[static_cast<std::size_t>(L - 1)];
  cache.outputs.assign(heads_.size(), MatrixXd(T, B));
  for (std::size_t k = 0; k < heads_.size(); ++k) {
    const auto w = layout_.view(params, heads_[k].w);
    const double hb = layout_.view(params, heads_[k].b)(0, 0);
    for (int t = 0; t < T; ++t) {
      const auto tu = static_cast<std::size_t>(t);
      Eigen::RowVectorXd out = w * top[tu];
      if (arch_.heads[k].side_dim > 0) out += layout_.view(params, heads_[k].v) * batch.side[k][tu];
      cache.outputs[k].row(t) = out.array() + hb;
    }
  }
}

void SequenceNetwork::backward(const VectorXd& params, const SequenceBatch& batch, const ForwardCache& cache,
                               const std::vector<MatrixXd>& d_outputs, VectorXd& grad) const {
  const int T = cache.T, B = cache.B, L = arch_.num_layers;
  const Eigen::Index H = arch_.hidden_size;
  if (d_outputs.size() != heads_.size()) throw std::invalid_argument("backward: one output gradient per head");
  grad = VectorXd::Zero(layout_.size());

  // Gradient reaching the top hidden states from the heads.
  std::vector<MatrixXd> dh_ext(static_cast<std::size_t>(T), MatrixXd::Zero(H, B));
  const auto& top = cache.h[static_cast<std::size_t>(L - 1)];
  for (std::size_t k = 0; k < heads_.size(); ++k) {
    const auto w = layout_.view(params, heads_[k].w);
    auto gw = layout_.view(grad, heads_[k].w);
    auto gb = layout_.view(grad, heads_[k].b);
    for (int t = 0; t < T; ++t) {
      const auto tu = static_cast<std::size_t>(t);
      const Eigen::RowVectorXd d = d_outputs[k].row(t);
      gw.noalias() += d * top[tu].transpose();
      gb(0, 0) += d.sum();
      if (arch_.heads[k].side_dim > 0) layout_.view(grad, heads_[k].v).noalias() += d * batch.side[k][tu].transpose();
      dh_ext[tu].noalias() += w.transpose() * d;
    }
  }

  const MatrixXd zero = MatrixXd::Zero(H, B);
  for (int l = L - 1; l >= 0; --l) {
    const auto lu = static_cast<std::size_t>(l);
    const auto Wx = layout_.view(params, layers_[lu].wx);
    const auto Wh = layout_.view(params, layers_[lu].wh);
    auto gWx = layout_.view(grad, layers_[lu].wx);
    auto gWh = layout_.view(grad, layers_[lu].wh);
    auto gb = layout_.view(grad, layers_[lu].b);
    MatrixXd dh_next = zero, dc_next = zero;
    std::vector<MatrixXd> dx(static_cast<std::size_t>(T));
    MatrixXd da(4 * H, B);
    for (int t = T - 1; t >= 0; --t) {
      const auto tu = static_cast<std::size_t>(t);
      const MatrixXd& g = cache.gates[lu][tu];
      const auto i = g.topRows(H).array();
      const auto f = g.middleRows(H, H).array();
      const auto gg = g.middleRows(2 * H, H).array();
      const auto o = g.bottomRows(H).array();
      const MatrixXd& c_prev = t > 0 ? cache.c[lu][tu - 1] : zero;
      const MatrixXd& h_prev = t > 0 ? cache.h[lu][tu - 1] : zero;
      const ArrayXXd tc = cache.c[lu][tu].array().tanh();

      const ArrayXXd dh = (dh_ext[tu] + dh_next).array();
      const ArrayXXd dc = dc_next.array() + dh * o * (1.0 - tc.square());
      da.topRows(H) = (dc * gg * i * (1.0 - i)).matrix();
      da.middleRows(H, H) = (dc * c_prev.array() * f * (1.0 - f)).matrix();
      da.middleRows(2 * H, H) = (dc * i * (1.0 - gg.square())).matrix();
      da.bottomRows(H) = (dh * tc * o * (1.0 - o)).matrix();
      dc_next = (dc * f).matrix();

      gWx.noalias() += da * cache.layer_in[lu][tu].transpose();
      gWh.noalias() += da * h_prev.transpose();
      gb.col(0) += da.rowwise().sum();
      dx[tu].noalias() = Wx.transpose() * da;
      dh_next.noalias() = Wh.transpose() * da;
    }
    if (l > 0) {
      const bool dropped = !cache.drop[lu - 1].empty() && cache.drop[lu - 1][0].size() > 0;
      for (int t = 0; t < T; ++t) {
        const auto tu = static_cast<std::size_t>(t);
        dh_ext[tu] = dropped ? dx[tu].cwiseProduct(cache.drop[lu - 1][tu]) : dx[tu];
      }
    } else {
      auto gW = layout_.view(grad, proj_w_);
      auto gpb = layout_.view(grad, proj_b_);
      for (int t = 0; t < T; ++t) {
        const auto tu = static_cast<std::size_t>(t);
        const MatrixXd de = (dx[tu].array() * (1.0 - cache.proj[tu].array().square())).matrix();
        gW.noalias() += de * batch.inputs[tu].transpose();
        gpb.col(0) += de.rowwise().sum();
      }
    }
  }
}

SequenceNetwork::StepState SequenceNetwork::initial_state() const {
  StepState s;
  s.h.assign(static_cast<std::size_t>(arch_.num_layers), VectorXd::Zero(arch_.hidden_size));
  s.c = s.h;
  return s;
}

void SequenceNetwork::step(const VectorXd& params, std::span<const double> input, StepState& s) const {
  if (static_cast<int>(input.size()) != arch_.input_dim) throw std::invalid_argument("step: input size mismatch");
  const Eigen::Index H = arch_.hidden_size;
  const Eigen::Map<const VectorXd> xin(input.data(), arch_.input_dim);
  VectorXd x = (layout_.view(params, proj_w_) * xin + layout_.view(params, proj_b_).col(0)).array().tanh().matrix();
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    VectorXd a = layout_.view(params, layers_[l].wx) * x + layout_.view(params, layers_[l].wh) * s.h[l] +
                 layout_.view(params, layers_[l].b).col(0);
    const VectorXd i = sigmoid(a.head(H));
    const VectorXd f = sigmoid(a.segment(H, H));
    const VectorXd g = a.segment(2 * H, H).array().tanh().matrix();
    const VectorXd o = sigmoid(a.tail(H));
    s.c[l] = f.cwiseProduct(s.c[l]) + i.cwiseProduct(g);
    s.h[l] = o.cwiseProduct(s.c[l].array().tanh().matrix());
    x = s.h[l];
  }
}

double SequenceNetwork::head_output(const VectorXd& params, std::size_t head, const VectorXd& top_hidden,
                                    std::span<const double> side) const {
  const auto& spec = arch_.heads.at(head);
  if (static_cast<int>(side.size()) != spec.side_dim) throw std::invalid_argument("head_output: side input size mismatch");
  double out = (layout_.view(params, heads_[head].w) * top_hidden)(0, 0) + layout_.view(params, heads_[head].b)(0, 0);
  if (spec.side_dim > 0)
    out += (layout_.view(params, heads_[head].v) * Eigen::Map<const VectorXd>(side.data(), spec.side_dim))(0, 0);
  return out;
}

double sequence_loss(const SequenceNetwork& net, const ForwardCache& cache, const SequenceBatch& batch,
                     std::vector<MatrixXd>* d_outputs) {
  const auto& heads = net.arch().heads;
  if (d_outputs) d_outputs->assign(heads.size(), MatrixXd::Zero(cache.T, cache.B));
  double total = 0.0;
  for (std::size_t k = 0; k < heads.size(); ++k) {
    const auto& z = cache.outputs[k].array();
    const auto& y = batch.targets[k].array();
    const auto& m = batch.masks[k].array();
    const double w = m.sum();
    if (w <= 0.0) continue;
    if (heads[k].kind == HeadKind::Gaussian) {
      const ArrayXXd r = z - y;
      total += (m * r.square()).sum() / w;
      if (d_outputs) (*d_outputs)[k] = (2.0 * m * r / w).matrix();
    } else {
      const ArrayXXd sp = z.unaryExpr([](double v) { return softplus(v); });
      total += (m * (sp - y * z)).sum() / w;
      if (d_outputs) (*d_outputs)[k] = (m * (z.unaryExpr([](double v) { return expit(v); }) - y) / w).matrix();
    }
  }
  return total;
}

void LossTally::add(const SequenceNetwork& net, const ForwardCache& cache, const SequenceBatch& batch) {
  const auto& heads = net.arch().heads;
  sum.resize(heads.size(), 0.0);
  weight.resize(heads.size(), 0.0);
  for (std::size_t k = 0; k < heads.size(); ++k) {
    const auto& z = cache.outputs[k].array();
    const auto& y = batch.targets[k].array();
    const auto& m = batch.masks[k].array();
    weight[k] += m.sum();
    if (heads[k].kind == HeadKind::Gaussian)
      sum[k] += (m * (z - y).square()).sum();
    else
      sum[k] += (m * (z.unaryExpr([](double v) { return softplus(v); }) - y * z)).sum();
  }
}

double LossTally::total() const {
  double t = 0.0;
  for (std::size_t k = 0; k < sum.size(); ++k)
    if (weight[k] > 0.0) t += sum[k] / weight[k];
  return t;
}

AdamW::AdamW(Eigen::Index size, Options options)
    : opt_(options), m_(VectorXd::Zero(size)), v_(VectorXd::Zero(size)) {}

void AdamW::step(VectorXd& params, const VectorXd& grad) {
  if (grad.size() != m_.size() || params.size() != m_.size()) throw std::invalid_argument("AdamW: size mismatch");
  ++t_;
  m_ = opt_.beta1 * m_ + (1.0 - opt_.beta1) * grad;
  v_ = opt_.beta2 * v_ + (1.0 - opt_.beta2) * grad.cwiseAbs2();
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  params *= 1.0 - opt_.learning_rate * opt_.weight_decay;
  params.array() -= opt_.learning_rate * (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + opt_.eps);
}

double clip_gradient_norm(VectorXd& grad, double max_norm) {
  const double norm = grad.norm();
  if (norm > max_norm) grad *= max_norm / (norm + 1e-6);
  return norm;
}

GradientCheckResult gradient_check(const SequenceNetwork& net, const VectorXd& params, const SequenceBatch& batch,
                                   std::span<const Eigen::Index> coordinates, double eps, const DropoutPlan* dropout,
                                   double floor) {
  ForwardCache cache;
  net.forward(params, batch, cache, dropout);
  std::vector<MatrixXd> d_out;
  sequence_loss(net, cache, batch, &d_out);
  VectorXd analytic;
  net.backward(params, batch, cache, d_out, analytic);

  std::vector<Eigen::Index> all;
  if (coordinates.empty()) {
    all.resize(static_cast<std::size_t>(params.size()));
    std::iota(all.begin(), all.end(), Eigen::Index{0});
    coordinates = all;
  }
  GradientCheckResult res;
  VectorXd p = params;
  for (const Eigen::Index j : coordinates) {
    const double orig = p(j);
    p(j) = orig + eps;
    net.forward(p, batch, cache, dropout);
    const double up = sequence_loss(net, cache, batch, nullptr);
    p(j) = orig - eps;
    net.forward(p, batch, cache, dropout);
    const double down = sequence_loss(net, cache, batch, nullptr);
    p(j) = orig;
    const double numeric = (up - down) / (2.0 * eps);
    const double rel = std::abs(analytic(j) - numeric) / std::max({std::abs(analytic(j)), std::abs(numeric), floor});
    if (rel > res.max_relative_error || res.worst < 0) {
      res.max_relative_error = rel;
      res.worst = j;
    }
    ++res.coordinates;
  }
  return res;
}

std::vector<Eigen::Index> sample_coordinates(Eigen::Index size, std::size_t count, std::uint64_t seed) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(size));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  if (count >= idx.size()) return idx;
  RngStream rng(seed, 0);
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace gnice::nn
