#include <benchmark/benchmark.h>

#include "gnice/deepnet.hpp"
#include "gnice/distributions.hpp"
#include "gnice/glm.hpp"
#include "gnice/montecarlo.hpp"
#include "gnice/parametric.hpp"
#include "gnice/simulator.hpp"

namespace {

using namespace gnice;

void BM_TruncatedNormal(benchmark::State& state) {
  RngStream rng(1);
  // Second case sits 12 sd below the window, the far-tail path.
  const double mu = state.range(0) == 0 ? 0.0 : -12.0;
  for (auto _ : state) benchmark::DoNotOptimize(sample_truncated_normal(mu, 1.0, -1.0, 2.0, rng));
}
BENCHMARK(BM_TruncatedNormal)->Arg(0)->Arg(1);

void BM_SimulatePerson(benchmark::State& state) {
  const Scenario sc{state.range(0) == 0 ? ScenarioKind::Simple : ScenarioKind::Complex, true};
  std::int64_t id = 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(simulate_person(sc, kDefaultHorizon, Strategy::NaturalCourse, 7, ++id));
}
BENCHMARK(BM_SimulatePerson)->Arg(0)->Arg(1);

void BM_FitLogistic(benchmark::State& state) {
  const auto rows = state.range(0);
  RngStream rng(3);
  Eigen::MatrixXd X(rows, 8);
  Eigen::VectorXd y(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    X(i, 0) = 1.0;
    double eta = -1.0;
    for (int j = 1; j < 8; ++j) {
      X(i, j) = rng.normal();
      eta += 0.2 * j * X(i, j) / 8.0;
    }
    y(i) = rng.bernoulli(expit(eta)) ? 1.0 : 0.0;
  }
  for (auto _ : state) benchmark::DoNotOptimize(fit_logistic(X, y));
  state.SetItemsProcessed(state.iterations() * rows);
}
BENCHMARK(BM_FitLogistic)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

void BM_LstmForwardBackward(benchmark::State& state) {
  const Cohort cohort = simulate_cohort({ScenarioKind::Simple, true}, 128, kDefaultHorizon, Strategy::NaturalCourse, 5);
  std::vector<std::size_t> ids(cohort.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  const auto stats = compute_stats(cohort, ids);
  const auto batch = encode_batch(cohort, ids, NetworkRole::Covariate, stats);
  NetworkConfig cfg = desk_config(NetworkRole::Covariate);
  cfg.hidden_size = static_cast<int>(state.range(0));
  const nn::SequenceNetwork net(network_architecture(NetworkRole::Covariate, cfg));
  const Eigen::VectorXd params = net.initialize(1);
  nn::ForwardCache cache;
  std::vector<Eigen::MatrixXd> d_out;
  Eigen::VectorXd grad;
  for (auto _ : state) {
    net.forward(params, batch, cache);
    benchmark::DoNotOptimize(nn::sequence_loss(net, cache, batch, &d_out));
    net.backward(params, batch, cache, d_out, grad);
  }
}
BENCHMARK(BM_LstmForwardBackward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_EstimateRiskParametric(benchmark::State& state) {
  const Cohort cohort =
      simulate_cohort({ScenarioKind::Simple, true}, 2000, kDefaultHorizon, Strategy::NaturalCourse, 9);
  const auto model = fit_parametric_modelset(cohort, FeatureSpec::DgpMatched);
  const auto starts = baseline_rows(cohort);
  for (auto _ : state)
    benchmark::DoNotOptimize(estimate_risk(model, starts, Strategy::NaturalCourse, {1000, kDefaultHorizon, 1, 1}));
  state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_EstimateRiskParametric)->Unit(benchmark::kMillisecond);

}  // namespace

// The packaged benchmark_main archive carries LTO bytecode from another compiler release.
BENCHMARK_MAIN();
