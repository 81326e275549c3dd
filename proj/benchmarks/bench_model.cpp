#include <benchmark/benchmark.h>

#include "mtec/model.hpp"
#include "mtec/random.hpp"

namespace {

struct Fixture {
  mtec::MtecModel model;
  mtec::Batch batch;
  Eigen::VectorXd weights;
};

// 77 species, default 16-wide embedding and 3 latent factors.
Fixture make(int batch_rows, int covariates) {
  mtec::MtecConfig cfg;
  cfg.set_isotropic_prior(0.0, 1.0);
  Fixture f{mtec::MtecModel::zeros(cfg, covariates, 77), {}, Eigen::VectorXd::Ones(77)};
  mtec::Rng rng(1);
  for (auto& t : f.model.params().tensors())
    for (double& v : t.values) v = 0.3 * rng.normal();
  f.batch.features = mtec::standard_normal_matrix(batch_rows, covariates, rng);
  f.batch.community.resize(batch_rows, 77);
  for (Eigen::Index i = 0; i < f.batch.community.size(); ++i) f.batch.community.data()[i] = rng.bernoulli(0.3);
  f.batch.noise = mtec::standard_normal_matrix(batch_rows, cfg.latent_dim, rng);
  return f;
}

void BM_Loss(benchmark::State& state) {
  const auto f = make(static_cast<int>(state.range(0)), 30);
  for (auto _ : state) benchmark::DoNotOptimize(f.model.loss(f.batch, f.weights).total());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Loss)->Arg(32)->Arg(256)->Arg(1346);

void BM_LossAndGradient(benchmark::State& state) {
  const auto f = make(static_cast<int>(state.range(0)), 30);
  auto grads = f.model.zero_gradients();
  for (auto _ : state) benchmark::DoNotOptimize(f.model.loss_and_gradient(f.batch, f.weights, grads).total());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LossAndGradient)->Arg(32)->Arg(256)->Arg(1346);

void BM_PredictPriorMean(benchmark::State& state) {
  auto f = make(static_cast<int>(state.range(0)), 30);
  f.model.set_trained(true);
  for (auto _ : state) benchmark::DoNotOptimize(f.model.predict(f.batch.features).sum());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PredictPriorMean)->Arg(1346);

}  // namespace
