#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gnice/nn/params.hpp"

namespace gnice::nn {

enum class HeadKind { Gaussian, Bernoulli };

/// A scalar output per step: w·h_top + v·side + b. Gaussian heads emit a mean on
/// the standardized scale; Bernoulli heads emit a logit.
struct HeadSpec {
  std::string name;
  HeadKind kind = HeadKind::Gaussian;
  /// Extra per-step inputs fed straight to this head, bypassing the trunk.
  int side_dim = 0;
};

/// input -> tanh projection (feature_dim) -> num_layers stacked LSTMs (hidden_size) -> heads.
struct Architecture {
  int input_dim = 0;
  int feature_dim = 0;
  int hidden_size = 0;
  int num_layers = 1;
  std::vector<HeadSpec> heads;
};

/// Time-major batch. inputs[t] is input_dim x B. side[h][t] is side_dim x B for
/// heads with side inputs (empty otherwise). targets[h] and masks[h] are T x B;
/// masked positions (0) contribute nothing to the loss.
struct SequenceBatch {
  int T = 0;
  int B = 0;
  std::vector<Eigen::MatrixXd> inputs;
  std::vector<std::vector<Eigen::MatrixXd>> side;
  std::vector<Eigen::MatrixXd> targets;
  std::vector<Eigen::MatrixXd> masks;
};

/// Inverted dropout between stacked LSTM layers. Masks depend only on
/// (seed, layer, t, column), so replays and padded batches see the same masks.
struct DropoutPlan {
  double rate = 0.0;
  std::uint64_t seed = 0;
};

struct ForwardCache {
  int T = 0;
  int B = 0;
  std::vector<Eigen::MatrixXd> proj;                  // [t] feature_dim x B, post-tanh
  std::vector<std::vector<Eigen::MatrixXd>> layer_in; // [l][t] input seen by layer l
  std::vector<std::vector<Eigen::MatrixXd>> gates;    // [l][t] 4H x B activated (i, f, g, o)
  std::vector<std::vector<Eigen::MatrixXd>> c;        // [l][t]
  std::vector<std::vector<Eigen::MatrixXd>> h;        // [l][t]
  std::vector<std::vector<Eigen::MatrixXd>> drop;     // [l][t] scaled mask applied to h[l] feeding l+1
  std::vector<Eigen::MatrixXd> outputs;               // [head] T x B
};

class SequenceNetwork {
 public:
  explicit SequenceNetwork(Architecture arch);

  const Architecture& arch() const { return arch_; }
  const ParameterLayout& layout() const { return layout_; }
  Eigen::Index parameter_count() const { return layout_.size(); }

  /// Xavier-uniform projection and heads, U(-1/sqrt(H), 1/sqrt(H)) LSTM weights,
  /// forget-gate bias 1, other biases 0.
  Eigen::VectorXd initialize(std::uint64_t seed) const;

  /// dropout == nullptr (or rate 0) is evaluation mode.
  void forward(const Eigen::VectorXd& params, const SequenceBatch& batch, ForwardCache& cache,
               const DropoutPlan* dropout = nullptr) const;

  /// Accumulates into `grad` (resized and zeroed here) the gradient of a loss
  /// whose derivative w.r.t. each head output is d_outputs[head] (T x B).
  void backward(const Eigen::VectorXd& params, const SequenceBatch& batch, const ForwardCache& cache,
                const std::vector<Eigen::MatrixXd>& d_outputs, Eigen::VectorXd& grad) const;

  /// Recurrent state for step-by-step inference on one sequence.
  struct StepState {
    std::vector<Eigen::VectorXd> h, c;
    Eigen::VectorXd top() const { return h.back(); }
  };
  StepState initial_state() const;
  void step(const Eigen::VectorXd& params, std::span<const double> input, StepState& state) const;
  double head_output(const Eigen::VectorXd& params, std::size_t head, const Eigen::VectorXd& top_hidden,
                     std::span<const double> side = {}) const;

  std::size_t head_index(const std::string& name) const;

 private:
  struct LayerBlocks {
    std::size_t wx, wh, b;
  };
  struct HeadBlocks {
    std::size_t w, v, b;  // v unused when side_dim == 0
  };

  Architecture arch_;
  ParameterLayout layout_;
  std::size_t proj_w_ = 0, proj_b_ = 0;
  std::vector<LayerBlocks> layers_;
  std::vector<HeadBlocks> heads_;
};

/// Sum over heads of masked-mean losses: squared error for Gaussian heads,
/// binary cross-entropy on logits for Bernoulli heads. A head whose mask is all
/// zero contributes 0. If d_outputs is non-null it receives dLoss/doutput.
double sequence_loss(const SequenceNetwork& net, const ForwardCache& cache, const SequenceBatch& batch,
                     std::vector<Eigen::MatrixXd>* d_outputs);

/// Per-head masked loss sums and weights, for aggregating over many batches.
struct LossTally {
  std::vector<double> sum;
  std::vector<double> weight;
  void add(const SequenceNetwork& net, const ForwardCache& cache, const SequenceBatch& batch);
  /// Sum over heads of sum/weight (heads with zero weight contribute 0).
  double total() const;
};

/// AdamW with bias correction and decoupled weight decay:
/// theta <- theta * (1 - lr*wd) - lr * mhat / (sqrt(vhat) + eps).
class AdamW {
 public:
  struct Options {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
  };
  AdamW(Eigen::Index size, Options options);
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
  std::int64_t steps() const { return t_; }

 private:
  Options opt_;
  Eigen::VectorXd m_, v_;
  std::int64_t t_ = 0;
};

/// Scales grad so its L2 norm is at most max_norm; returns the norm before clipping.
double clip_gradient_norm(Eigen::VectorXd& grad, double max_norm);

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  /// Coordinate (flat index) attaining the maximum.
  Eigen::Index worst = -1;
};

/// Central differences of sequence_loss on `coordinates` (all when empty) versus
/// backward(). Relative error is |a - n| / max(|a|, |n|, floor).
GradientCheckResult gradient_check(const SequenceNetwork& net, const Eigen::VectorXd& params,
                                   const SequenceBatch& batch, std::span<const Eigen::Index> coordinates,
                                   double eps = 1e-5, const DropoutPlan* dropout = nullptr, double floor = 1e-6);

/// `count` distinct coordinates drawn uniformly without replacement (all if count >= size).
std::vector<Eigen::Index> sample_coordinates(Eigen::Index size, std::size_t count, std::uint64_t seed);

}  // namespace gnice::nn
