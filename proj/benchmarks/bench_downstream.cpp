#include <benchmark/benchmark.h>

#include "mtec/assoc.hpp"
#include "mtec/explain.hpp"
#include "mtec/groups.hpp"
#include "mtec/numeric.hpp"
#include "mtec/random.hpp"

namespace {

Eigen::MatrixXd gaussian(int rows, int cols, std::uint64_t seed) {
  mtec::Rng rng(seed);
  return mtec::standard_normal_matrix(rows, cols, rng);
}

void BM_GraphicalLasso(benchmark::State& state) {
  const int p = static_cast<int>(state.range(0));
  const Eigen::MatrixXd x = gaussian(4 * p, p, 2);
  const Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd s = c.transpose() * c / static_cast<double>(x.rows());
  mtec::assoc::GlassoOptions o;
  o.lambda = 0.05;
  for (auto _ : state) benchmark::DoNotOptimize(mtec::assoc::graphical_lasso(s, o).iterations);
}
BENCHMARK(BM_GraphicalLasso)->Arg(20)->Arg(77);

void BM_ShapExact(benchmark::State& state) {
  const int p = static_cast<int>(state.range(0));
  const Eigen::MatrixXd w = gaussian(p, 8, 3);
  const mtec::explain::PredictFn f = [&](const Eigen::MatrixXd& e) {
    return Eigen::MatrixXd((e * w).unaryExpr([](double v) { return mtec::logistic(v); }));
  };
  const Eigen::MatrixXd sites = gaussian(4, p, 4), background = gaussian(20, p, 5);
  mtec::explain::ShapOptions o;
  o.mode = mtec::explain::ShapMode::exact;
  for (auto _ : state) benchmark::DoNotOptimize(mtec::explain::shap_explain(f, sites, background, o).base_values.sum());
}
BENCHMARK(BM_ShapExact)->Arg(6)->Arg(10);

void BM_ShapSampled(benchmark::State& state) {
  const int p = 30;
  const Eigen::MatrixXd w = gaussian(p, 8, 3);
  const mtec::explain::PredictFn f = [&](const Eigen::MatrixXd& e) {
    return Eigen::MatrixXd((e * w).unaryExpr([](double v) { return mtec::logistic(v); }));
  };
  const Eigen::MatrixXd sites = gaussian(1, p, 4), background = gaussian(20, p, 5);
  mtec::explain::ShapOptions o;
  o.mode = mtec::explain::ShapMode::sampled;
  o.n_samples = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(mtec::explain::shap_explain(f, sites, background, o).base_values.sum());
}
BENCHMARK(BM_ShapSampled)->Arg(256)->Arg(2048);

void BM_WardCluster(benchmark::State& state) {
  const Eigen::MatrixXd rows = gaussian(static_cast<int>(state.range(0)), 40, 6);
  for (auto _ : state) benchmark::DoNotOptimize(mtec::groups::ward_cluster(rows).merges.back().height);
}
BENCHMARK(BM_WardCluster)->Arg(77)->Arg(300);

void BM_GapStatistic(benchmark::State& state) {
  const Eigen::MatrixXd rows = gaussian(77, 40, 7);
  for (auto _ : state) benchmark::DoNotOptimize(mtec::groups::gap_statistic(rows, 8, 20, 1).chosen_k);
}
BENCHMARK(BM_GapStatistic);

}  // namespace
