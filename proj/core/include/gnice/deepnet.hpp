#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gnice/errors.hpp"
#include "gnice/model_set.hpp"
#include "gnice/nn/network.hpp"
#include "gnice/simulator.hpp"

namespace gnice {

/// Covariate network: heads cd4, rna (Gaussian), high_bmi, insti (Bernoulli).
/// Outcome network: one Bernoulli head for the event at each step.
enum class NetworkRole { Covariate, Outcome };

std::string_view to_string(NetworkRole role);
NetworkRole parse_network_role(std::string_view text);

struct NetworkConfig {
  int feature_dim = 32;
  int hidden_size = 32;
  int num_layers = 1;
  double dropout_rate = 0.0;
  double learning_rate = 3e-3;
  int batch_size = 128;
  double weight_decay = 1e-5;
  int max_epochs = 60;
  int patience = 8;

  bool operator==(const NetworkConfig&) const = default;
};

nlohmann::ordered_json to_json(const NetworkConfig& c);
/// Missing keys keep the values of `base`. Throws std::invalid_argument on
/// unknown keys or out-of-domain values.
NetworkConfig network_config_from_json(const nlohmann::json& j, NetworkConfig base = {});
void validate(const NetworkConfig& c);

/// Fixed settings selected by the original hyperparameter searches
/// (simple and complex scenario, n = 1,000 and 10,000), with their epoch caps.
/// Throws std::invalid_argument for other sample sizes.
NetworkConfig paper_config(ScenarioKind scenario, int n, NetworkRole role);
/// Small single-core configuration used by the acceptance suite and the CLI default.
NetworkConfig desk_config(NetworkRole role);

/// Training-set statistics used to z-score continuous inputs.
struct NormalizationStats {
  double age_mean = 0, age_sd = 1;
  double smoking_mean = 0, smoking_sd = 1;
  double cd4_mean = 0, cd4_sd = 1;
  double rna_mean = 0, rna_sd = 1;
  int horizon = kDefaultHorizon;
};

NormalizationStats compute_stats(const Cohort& cohort, std::span<const std::size_t> persons);

/// Per-step input width for both networks: sex, age_z, smoking_z, cd4_z, rna_z,
/// high_bmi, insti, k/K, {k <= 5}. The covariate network sees month k-1 values
/// (zeros at k = 0); the outcome network sees month k values.
inline constexpr int kNetworkInputDim = 9;
/// The insti head also receives the month-k covariates (cd4_z, rna_z, high_bmi).
inline constexpr int kTreatmentSideDim = 3;

nn::Architecture network_architecture(NetworkRole role, const NetworkConfig& config);

/// Encodes the listed persons into one time-major batch padded to the longest
/// sequence. Covariate heads are masked at k = 0 (month-0 values are resampled,
/// not modelled); padding is masked for every head.
nn::SequenceBatch encode_batch(const Cohort& cohort, std::span<const std::size_t> persons, NetworkRole role,
                               const NormalizationStats& stats);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
  double seconds = 0.0;
};

struct TrainingHistory {
  /// Training loss of the initial parameters (evaluation mode) before any update.
  double initial_train_loss = 0.0;
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_validation_loss = 0.0;
};

nlohmann::ordered_json to_json(const TrainingHistory& h);

class TrainingDivergedError : public NumericError {
 public:
  TrainingDivergedError(const std::string& what, TrainingHistory history)
      : NumericError(what), history_(std::move(history)) {}
  const TrainingHistory& history() const { return history_; }

 private:
  TrainingHistory history_;
};

struct TrainedNetwork {
  NetworkRole role = NetworkRole::Covariate;
  NetworkConfig config;
  Eigen::VectorXd params;
  NormalizationStats stats;
  /// Covariate role only: sampling sd (raw units) from validation residuals and
  /// the observed training range used for clamping.
  double cd4_residual_sd = 0.0, rna_residual_sd = 0.0;
  double cd4_min = 0.0, cd4_max = 0.0, rna_min = 0.0, rna_max = 0.0;
  TrainingHistory history;
  std::uint64_t seed = 0;
  std::size_t train_persons = 0, validation_persons = 0;

  nn::SequenceNetwork network() const { return nn::SequenceNetwork(network_architecture(role, config)); }
};

/// Seeded 80/20 split by person. Fewer than 5 persons: everyone trains and validates.
struct PersonSplit {
  std::vector<std::size_t> train, validation;
};
PersonSplit split_persons(std::size_t n, std::uint64_t seed, double validation_fraction = 0.2);

/// Minibatch AdamW on the training persons, global-norm clipping at 1.0,
/// validation every epoch, early stopping after `patience` epochs without
/// improvement; the best-validation parameters are returned. A non-finite loss
/// throws TrainingDivergedError carrying the history so far.
TrainedNetwork train_network(const Cohort& cohort, NetworkRole role, const NetworkConfig& config,
                             std::uint64_t seed);
inline TrainedNetwork train_covariate_network(const Cohort& c, const NetworkConfig& cfg, std::uint64_t seed) {
  return train_network(c, NetworkRole::Covariate, cfg, seed);
}
inline TrainedNetwork train_outcome_network(const Cohort& c, const NetworkConfig& cfg, std::uint64_t seed) {
  return train_network(c, NetworkRole::Outcome, cfg, seed);
}

/// Binary checkpoint: 8-byte magic "GNICENET", u32 format version, u64 header
/// length, a JSON header (role, config, layout, normalization stats, residual sds,
/// ranges, history), then every parameter as a little-endian IEEE-754 double in
/// layout order. All integers are little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const TrainedNetwork& net, const std::filesystem::path& path);
TrainedNetwork load_checkpoint(const std::filesystem::path& path);

class DeepModelSet final : public ModelSet {
 public:
  /// Throws std::invalid_argument if roles are wrong or the horizons differ.
  DeepModelSet(TrainedNetwork covariate, TrainedNetwork outcome);

  const TrainedNetwork& covariate() const { return cov_; }
  const TrainedNetwork& outcome() const { return out_; }

  std::unique_ptr<ModelState> make_state() const override;
  CovariateDistribution covariate_step(const HistoryView& history, int k, ModelState* state) const override;
  double treatment_prob(const HistoryView& history, int k, ModelState* state) const override;
  double hazard(const HistoryView& history, int k, ModelState* state) const override;
  std::string describe() const override { return "dl"; }

  /// Writes covariate.gnet and outcome.gnet into `dir`.
  void save(const std::filesystem::path& dir) const;
  static DeepModelSet load(const std::filesystem::path& dir);

 private:
  TrainedNetwork cov_, out_;
  nn::SequenceNetwork cov_net_, out_net_;
  std::size_t cd4_head_, rna_head_, bmi_head_, insti_head_, event_head_;
};

/// Random-search space. Discrete choices are sampled uniformly, dropout
/// uniformly on [lo, hi], learning rate and weight decay log-uniformly.
struct SearchSpace {
  std::vector<int> feature_dims;
  std::vector<int> hidden_sizes;
  std::vector<int> num_layers;
  double dropout_lo = 0.0, dropout_hi = 0.5;
  double lr_lo = 1e-5, lr_hi = 1e-3;
  std::vector<int> batch_sizes;
  double wd_lo = 1e-6, wd_hi = 1e-3;
  int max_epochs = 1000;
  int patience = 50;

  /// The original search space for the given network.
  static SearchSpace reference(NetworkRole role);
  NetworkConfig sample(RngStream& rng) const;
};

nlohmann::ordered_json to_json(const SearchSpace& s);
SearchSpace search_space_from_json(const nlohmann::json& j, SearchSpace base);

struct TrialRecord {
  int trial = 0;
  NetworkConfig config;
  double validation_loss = 0.0;
  int best_epoch = 0;
  /// Set when the config repeats an earlier trial; its result is reused, not retrained.
  bool duplicate = false;
  double seconds = 0.0;
};

nlohmann::ordered_json to_json(const TrialRecord& t);

struct SearchResult {
  NetworkConfig best;
  double best_validation_loss = 0.0;
  std::vector<TrialRecord> trials;
  int evaluations = 0;
};

/// Trains one network per sampled config (trial i draws from RNG stream i of
/// `seed`; every trial trains with the same training seed) and returns the
/// lowest validation loss. `on_trial` sees each record as soon as it is final.
SearchResult random_search(const Cohort& cohort, NetworkRole role, const SearchSpace& space, int trials,
                           std::uint64_t seed, const std::function<void(const TrialRecord&)>& on_trial = {});

}  // namespace gnice
