#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>

#include "gnice/deepnet.hpp"
#include "gnice/distributions.hpp"
#include "support/oracles.hpp"

namespace gnice {
namespace {

NetworkConfig tiny_config() {
  NetworkConfig c;
  c.feature_dim = 6;
  c.hidden_size = 5;
  c.num_layers = 2;
  c.dropout_rate = 0.1;
  c.learning_rate = 1e-2;
  c.batch_size = 16;
  c.max_epochs = 4;
  c.patience = 2;
  return c;
}

const Cohort& small_cohort() {
  static const Cohort c = simulate_cohort({ScenarioKind::Simple}, 60, 12, Strategy::NaturalCourse, 3);
  return c;
}

TEST(NetworkConfig, JsonRoundTripAndValidation) {
  const auto c = tiny_config();
  EXPECT_EQ(network_config_from_json(nlohmann::json::parse(to_json(c).dump())), c);
  EXPECT_EQ(network_config_from_json(nlohmann::json{{"hidden_size", 7}}, c).hidden_size, 7);
  EXPECT_THROW(network_config_from_json(nlohmann::json{{"hidden", 7}}), std::invalid_argument);
  EXPECT_THROW(network_config_from_json(nlohmann::json{{"dropout_rate", 1.0}}), std::invalid_argument);
  EXPECT_THROW(network_config_from_json(nlohmann::json{{"batch_size", 0}}), std::invalid_argument);
  EXPECT_THROW(network_config_from_json(nlohmann::json{{"learning_rate", -1.0}}), std::invalid_argument);
}

TEST(NetworkConfig, ReferenceSettingsMatchTheSearchedTables) {
  using R = NetworkRole;
  using S = ScenarioKind;
  // {feature, hidden, layers, dropout, lr, batch, wd, max_epochs, patience}
  EXPECT_EQ(paper_config(S::Simple, 10000, R::Covariate), (NetworkConfig{128, 64, 3, 0.19, 4.1e-4, 1024, 3.3e-6, 5000, 50}));
  EXPECT_EQ(paper_config(S::Simple, 10000, R::Outcome), (NetworkConfig{128, 64, 4, 0.15, 4.7e-5, 512, 7.4e-4, 1000, 50}));
  EXPECT_EQ(paper_config(S::Simple, 1000, R::Covariate), (NetworkConfig{512, 64, 2, 0.45, 3.8e-4, 512, 4.1e-5, 5000, 50}));
  EXPECT_EQ(paper_config(S::Simple, 1000, R::Outcome), (NetworkConfig{128, 128, 2, 0.23, 6.7e-4, 512, 3.6e-5, 1000, 50}));
  EXPECT_EQ(paper_config(S::Complex, 10000, R::Covariate), (NetworkConfig{128, 64, 2, 0.36, 4.4e-4, 512, 4.7e-5, 5000, 50}));
  EXPECT_EQ(paper_config(S::Complex, 10000, R::Outcome), (NetworkConfig{512, 256, 2, 0.30, 2.4e-5, 1024, 4.4e-4, 1000, 50}));
  EXPECT_EQ(paper_config(S::Complex, 1000, R::Covariate), (NetworkConfig{512, 64, 2, 0.36, 1.8e-4, 1024, 3.1e-4, 5000, 50}));
  EXPECT_EQ(paper_config(S::Complex, 1000, R::Outcome), (NetworkConfig{512, 128, 2, 0.19, 5.5e-4, 1024, 1.4e-6, 1000, 50}));
  EXPECT_THROW(paper_config(S::Simple, 5000, R::Outcome), std::invalid_argument);
  EXPECT_NO_THROW(validate(desk_config(R::Covariate)));
  EXPECT_NO_THROW(validate(desk_config(R::Outcome)));
}

TEST(Architecture, HeadsPerRole) {
  const auto cov = network_architecture(NetworkRole::Covariate, tiny_config());
  ASSERT_EQ(cov.heads.size(), 4u);
  EXPECT_EQ(cov.heads[0].kind, nn::HeadKind::Gaussian);
  EXPECT_EQ(cov.heads[2].kind, nn::HeadKind::Bernoulli);
  EXPECT_EQ(cov.heads[3].side_dim, kTreatmentSideDim);
  EXPECT_EQ(cov.input_dim, kNetworkInputDim);
  const auto out = network_architecture(NetworkRole::Outcome, tiny_config());
  ASSERT_EQ(out.heads.size(), 1u);
  EXPECT_EQ(out.heads[0].kind, nn::HeadKind::Bernoulli);
}

Cohort encoding_cohort() {
  PersonTrajectory a;
  a.id = 1;
  a.baseline = {1, 50, 1};
  a.records = {{400, 40, 0, 0}, {600, 60, 1, 1}};
  a.event_time = 2;
  PersonTrajectory b;
  b.id = 2;
  b.baseline = {0, 30, 0};
  b.records = {{500, 50, 1, 1}, {500, 50, 1, 1}, {500, 50, 0, 1}};
  return Cohort(CovariateSchema{3}, {a, b});
}

TEST(EncodeBatch, CovariateInputsLagOneMonthAndMaskMonthZero) {
  const auto c = encoding_cohort();
  const std::size_t ids[] = {0, 1};
  const auto stats = compute_stats(c, ids);
  EXPECT_DOUBLE_EQ(stats.cd4_mean, 2500.0 / 5.0);
  const auto b = encode_batch(c, ids, NetworkRole::Covariate, stats);
  ASSERT_EQ(b.T, 3);
  ASSERT_EQ(b.B, 2);
  // Month 0 sees no covariates; month 1 sees month 0.
  for (int i = 3; i <= 6; ++i) EXPECT_EQ(b.inputs[0](i, 0), 0.0);
  EXPECT_DOUBLE_EQ(b.inputs[1](3, 0), (400 - stats.cd4_mean) / stats.cd4_sd);
  EXPECT_DOUBLE_EQ(b.inputs[1](7, 0), 1.0 / 3.0);
  EXPECT_EQ(b.inputs[1](8, 0), 1.0);
  for (std::size_t h = 0; h < 3; ++h) {
    EXPECT_EQ(b.masks[h](0, 0), 0.0);
    EXPECT_EQ(b.masks[h](1, 0), 1.0);
    EXPECT_EQ(b.masks[h](2, 0), 0.0);  // padding
  }
  EXPECT_EQ(b.masks[3](0, 0), 1.0);
  EXPECT_EQ(b.targets[3](1, 0), 1.0);
  EXPECT_DOUBLE_EQ(b.targets[0](1, 0), (600 - stats.cd4_mean) / stats.cd4_sd);
  EXPECT_EQ(b.targets[2](1, 0), 1.0);
  // The treatment head's side input is the current month's covariates.
  EXPECT_DOUBLE_EQ(b.side[3][1](0, 0), (600 - stats.cd4_mean) / stats.cd4_sd);
  EXPECT_EQ(b.side[3][0](2, 1), 1.0);
}

TEST(EncodeBatch, OutcomeTargetsFireAtTheEventStep) {
  const auto c = encoding_cohort();
  const std::size_t ids[] = {0, 1};
  const auto stats = compute_stats(c, ids);
  const auto b = encode_batch(c, ids, NetworkRole::Outcome, stats);
  EXPECT_EQ(b.targets[0](0, 0), 0.0);
  EXPECT_EQ(b.targets[0](1, 0), 1.0);
  EXPECT_EQ(b.masks[0](2, 0), 0.0);
  EXPECT_EQ(b.masks[0].col(1).sum(), 3.0);
  EXPECT_EQ(b.targets[0].col(1).sum(), 0.0);
  // The outcome network conditions on the current month, treatment included.
  EXPECT_EQ(b.inputs[0](6, 1), 1.0);
  EXPECT_DOUBLE_EQ(b.inputs[1](3, 0), (600 - stats.cd4_mean) / stats.cd4_sd);
}

TEST(SplitPersons, DisjointSortedAndSeeded) {
  const auto s = split_persons(100, 7);
  EXPECT_EQ(s.validation.size(), 20u);
  EXPECT_EQ(s.train.size(), 80u);
  EXPECT_TRUE(std::is_sorted(s.train.begin(), s.train.end()));
  std::vector<std::size_t> all = s.train;
  all.insert(all.end(), s.validation.begin(), s.validation.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(all[i], i);
  EXPECT_EQ(split_persons(100, 7).validation, s.validation);
  EXPECT_NE(split_persons(100, 8).validation, s.validation);
  const auto tiny = split_persons(4, 1);
  EXPECT_EQ(tiny.train.size(), 4u);
  EXPECT_EQ(tiny.validation.size(), 4u);
}

class TrainedPair : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    cov_ = new TrainedNetwork(train_covariate_network(small_cohort(), tiny_config(), 11));
    out_ = new TrainedNetwork(train_outcome_network(small_cohort(), tiny_config(), 12));
  }
  static void TearDownTestSuite() {
    delete cov_;
    delete out_;
  }
  static TrainedNetwork* cov_;
  static TrainedNetwork* out_;
};
TrainedNetwork* TrainedPair::cov_ = nullptr;
TrainedNetwork* TrainedPair::out_ = nullptr;

TEST_F(TrainedPair, SameSeedSameResult) {
  const auto again = train_covariate_network(small_cohort(), tiny_config(), 11);
  EXPECT_EQ(again.history.best_validation_loss, cov_->history.best_validation_loss);
  EXPECT_EQ(again.params, cov_->params);
  const auto other = train_covariate_network(small_cohort(), tiny_config(), 13);
  EXPECT_NE(other.params, cov_->params);
}

TEST_F(TrainedPair, ChosenEpochIsNoWorseThanTheFirst) {
  for (const auto* t : {cov_, out_}) {
    const auto& h = t->history;
    ASSERT_FALSE(h.epochs.empty());
    EXPECT_LE(h.best_validation_loss, h.epochs.front().validation_loss);
    double best = INFINITY;
    for (const auto& e : h.epochs) best = std::min(best, e.validation_loss);
    EXPECT_EQ(h.best_validation_loss, best);
    EXPECT_EQ(h.epochs[static_cast<std::size_t>(h.best_epoch - 1)].validation_loss, best);
  }
}

TEST_F(TrainedPair, CovariateCalibrationIsSet) {
  EXPECT_GT(cov_->cd4_residual_sd, 0.0);
  EXPECT_GT(cov_->rna_residual_sd, 0.0);
  EXPECT_LE(cov_->cd4_min, cov_->cd4_max);
  EXPECT_EQ(cov_->train_persons + cov_->validation_persons, small_cohort().size());
}

TEST_F(TrainedPair, CheckpointRoundTripIsExact) {
  const auto dir = testing::scratch_dir("checkpoint_roundtrip");
  save_checkpoint(*cov_, dir / "cov.gnet");
  const auto back = load_checkpoint(dir / "cov.gnet");
  EXPECT_EQ(back.params, cov_->params);
  EXPECT_EQ(back.config, cov_->config);
  EXPECT_EQ(back.role, NetworkRole::Covariate);
  EXPECT_EQ(back.cd4_residual_sd, cov_->cd4_residual_sd);
  EXPECT_EQ(back.stats.cd4_mean, cov_->stats.cd4_mean);
  EXPECT_EQ(back.history.epochs.size(), cov_->history.epochs.size());
  save_checkpoint(back, dir / "again.gnet");
  EXPECT_EQ(testing::slurp(dir / "cov.gnet"), testing::slurp(dir / "again.gnet"));
  EXPECT_EQ(testing::slurp(dir / "cov.gnet").substr(0, 8), "GNICENET");
}

TEST_F(TrainedPair, CorruptCheckpointsAreRejected) {
  const auto dir = testing::scratch_dir("checkpoint_corrupt");
  save_checkpoint(*out_, dir / "good.gnet");
  const std::string bytes = testing::slurp(dir / "good.gnet");
  auto write = [&](const std::string& name, const std::string& data) {
    std::ofstream(dir / name, std::ios::binary) << data;
    return dir / name;
  };
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(load_checkpoint(write("magic.gnet", bad_magic)), std::runtime_error);
  EXPECT_THROW(load_checkpoint(write("short.gnet", bytes.substr(0, bytes.size() - 8))), std::runtime_error);
  EXPECT_THROW(load_checkpoint(write("long.gnet", bytes + "x")), std::runtime_error);
  EXPECT_THROW(load_checkpoint(dir / "missing.gnet"), std::runtime_error);
}

TEST_F(TrainedPair, StepwiseInferenceMatchesTheBatchForward) {
  const DeepModelSet model(*cov_, *out_);
  const auto& c = small_cohort();
  const std::size_t person = 5;
  const std::size_t ids[] = {person};
  const auto& p = c[person];

  const auto cov_net = cov_->network();
  nn::ForwardCache cov_cache;
  cov_net.forward(cov_->params, encode_batch(c, ids, NetworkRole::Covariate, cov_->stats), cov_cache);
  const auto out_net = out_->network();
  nn::ForwardCache out_cache;
  out_net.forward(out_->params, encode_batch(c, ids, NetworkRole::Outcome, out_->stats), out_cache);

  auto state = model.make_state();
  for (int k = 0; k <= p.last_month(); ++k) {
    const HistoryView before{p.baseline, std::span(p.records).first(static_cast<std::size_t>(k))};
    const HistoryView through{p.baseline, std::span(p.records).first(static_cast<std::size_t>(k + 1))};
    if (k > 0) {
      const auto d = model.covariate_step(before, k, state.get());
      EXPECT_NEAR(d.cd4.mean, cov_cache.outputs[0](k, 0) * cov_->stats.cd4_sd + cov_->stats.cd4_mean, 1e-9);
      EXPECT_NEAR(d.high_bmi_prob, expit(cov_cache.outputs[2](k, 0)), 1e-12);
      EXPECT_NEAR(d.cd4.mean, model.covariate_step(before, k, nullptr).cd4.mean, 1e-9);
    }
    EXPECT_NEAR(model.treatment_prob(through, k, state.get()), expit(cov_cache.outputs[3](k, 0)), 1e-12);
    const double h = model.hazard(through, k, state.get());
    EXPECT_NEAR(h, expit(out_cache.outputs[0](k, 0)), 1e-12);
    EXPECT_NEAR(h, model.hazard(through, k, nullptr), 1e-12);
  }
}

TEST_F(TrainedPair, ModelSetSaveLoadAndRoleChecks) {
  const DeepModelSet model(*cov_, *out_);
  const auto dir = testing::scratch_dir("deep_modelset");
  model.save(dir);
  const auto back = DeepModelSet::load(dir);
  EXPECT_EQ(back.covariate().params, cov_->params);
  EXPECT_EQ(back.outcome().params, out_->params);
  EXPECT_THROW(DeepModelSet(*out_, *cov_), std::invalid_argument);
}

SearchSpace collapsed_space() {
  SearchSpace s;
  s.feature_dims = {6};
  s.hidden_sizes = {5};
  s.num_layers = {1};
  s.dropout_lo = s.dropout_hi = 0.0;
  s.lr_lo = s.lr_hi = 5e-3;
  s.batch_sizes = {16};
  s.wd_lo = s.wd_hi = 1e-5;
  s.max_epochs = 2;
  s.patience = 1;
  return s;
}

TEST(RandomSearch, CollapsedSpaceTrainsOnce) {
  const auto r = random_search(small_cohort(), NetworkRole::Outcome, collapsed_space(), 3, 5);
  EXPECT_EQ(r.evaluations, 1);
  ASSERT_EQ(r.trials.size(), 3u);
  EXPECT_FALSE(r.trials[0].duplicate);
  EXPECT_TRUE(r.trials[1].duplicate);
  EXPECT_EQ(r.best.hidden_size, 5);
  EXPECT_EQ(r.best.learning_rate, 5e-3);
  EXPECT_EQ(r.trials[2].validation_loss, r.trials[0].validation_loss);
}

TEST(RandomSearch, BestIsNoWorseThanTheMedianAndReruns) {
  auto space = collapsed_space();
  space.hidden_sizes = {3, 5, 8};
  space.lr_lo = 1e-3;
  space.lr_hi = 3e-2;
  std::vector<int> seen;
  const auto r = random_search(small_cohort(), NetworkRole::Outcome, space, 5, 8,
                               [&](const TrialRecord& t) { seen.push_back(t.trial); });
  EXPECT_EQ(seen, (std::vector<int>{0, 1, 2, 3, 4}));
  std::vector<double> losses;
  for (const auto& t : r.trials) losses.push_back(t.validation_loss);
  std::sort(losses.begin(), losses.end());
  EXPECT_LE(r.best_validation_loss, losses[losses.size() / 2]);
  EXPECT_EQ(r.best_validation_loss, losses.front());

  const auto again = random_search(small_cohort(), NetworkRole::Outcome, space, 5, 8);
  for (std::size_t i = 0; i < r.trials.size(); ++i) {
    EXPECT_EQ(again.trials[i].config, r.trials[i].config);
    EXPECT_EQ(again.trials[i].validation_loss, r.trials[i].validation_loss);
  }
}

TEST(SearchSpace, ReferenceAndJson) {
  const auto s = SearchSpace::reference(NetworkRole::Covariate);
  EXPECT_EQ(s.feature_dims, (std::vector<int>{128, 512}));
  EXPECT_EQ(s.hidden_sizes, (std::vector<int>{64, 128, 256}));
  EXPECT_EQ(s.max_epochs, 5000);
  EXPECT_EQ(SearchSpace::reference(NetworkRole::Outcome).max_epochs, 1000);
  const auto back = search_space_from_json(nlohmann::json::parse(to_json(s).dump()), SearchSpace{});
  EXPECT_EQ(to_json(back).dump(), to_json(s).dump());
  EXPECT_THROW(search_space_from_json(nlohmann::json{{"lr", 1}}, s), std::invalid_argument);
  EXPECT_THROW(search_space_from_json(nlohmann::json{{"learning_rate", {0.0, 1e-3}}}, s), std::invalid_argument);
  RngStream rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto c = s.sample(rng);
    EXPECT_GE(c.learning_rate, s.lr_lo);
    EXPECT_LE(c.learning_rate, s.lr_hi);
    EXPECT_NO_THROW(validate(c));
  }
}

}  // namespace
}  // namespace gnice
