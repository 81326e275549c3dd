#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <sstream>

#include "mtec/error.hpp"
#include "mtec/explain.hpp"
#include "mtec/numeric.hpp"
#include "mtec/random.hpp"

namespace ex = mtec::explain;

namespace {

Eigen::MatrixXd random_matrix(int r, int c, std::uint64_t seed) {
  mtec::Rng rng(seed);
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

// Two outputs with interactions over at least 3 features; feature 5 (when
// present) is unused.
Eigen::MatrixXd nonlinear(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out(x.rows(), 2);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double extra = 0.0;
    for (Eigen::Index p = 3; p < std::min<Eigen::Index>(x.cols(), 5); ++p) extra += 0.3 * x(i, p) * x(i, 0);
    for (Eigen::Index p = 6; p < x.cols(); ++p) extra += 0.2 * std::sin(x(i, p) + x(i, 1));
    out(i, 0) = mtec::logistic(x(i, 0) * x(i, 1) + 0.5 * x(i, 2) + extra);
    out(i, 1) = mtec::normal_cdf(std::sin(x(i, 2)) - 0.4 * x(i, 1) * x(i, 1) + extra);
  }
  return out;
}

// Average marginal contribution over all P! orderings.
Eigen::MatrixXd permutation_shapley(const ex::PredictFn& f, const Eigen::RowVectorXd& x,
                                    const Eigen::MatrixXd& background) {
  const int p = static_cast<int>(x.size());
  auto value = [&](const std::vector<bool>& in) {
    Eigen::MatrixXd rows = background;
    for (Eigen::Index r = 0; r < rows.rows(); ++r)
      for (int k = 0; k < p; ++k)
        if (in[static_cast<std::size_t>(k)]) rows(r, k) = x(k);
    return Eigen::RowVectorXd(f(rows).colwise().mean());
  };
  std::vector<int> order(static_cast<std::size_t>(p));
  std::iota(order.begin(), order.end(), 0);
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(p, f(background.topRows(1)).cols());
  double count = 0.0;
  do {
    std::vector<bool> in(static_cast<std::size_t>(p), false);
    Eigen::RowVectorXd prev = value(in);
    for (int k : order) {
      in[static_cast<std::size_t>(k)] = true;
      const Eigen::RowVectorXd next = value(in);
      phi.row(k) += next - prev;
      prev = next;
    }
    count += 1.0;
  } while (std::next_permutation(order.begin(), order.end()));
  return phi / count;
}

TEST(Shap, AdditiveModelSingleBackground) {
  const ex::PredictFn f = [](const Eigen::MatrixXd& x) { return Eigen::MatrixXd(x.col(0) + x.col(1)); };
  Eigen::MatrixXd sites(1, 2), bg(1, 2);
  sites << 3.0, -1.0;
  bg << 0.5, 2.0;
  ex::ShapOptions o;
  o.mode = ex::ShapMode::exact;
  const auto a = ex::shap_explain(f, sites, bg, o);
  EXPECT_NEAR(a(0, 0, 0), 2.5, 1e-12);
  EXPECT_NEAR(a(0, 0, 1), -3.0, 1e-12);
  EXPECT_NEAR(a.base_values(0), 2.5, 1e-12);
}

TEST(Shap, ExactMatchesPermutationDefinition) {
  for (int p : {3, 4, 6}) {
    const Eigen::MatrixXd sites = random_matrix(3, p, 10 + p), bg = random_matrix(5, p, 20 + p);
    ex::ShapOptions o;
    o.mode = ex::ShapMode::exact;
    const auto a = ex::shap_explain(nonlinear, sites, bg, o);
    for (int i = 0; i < 3; ++i) {
      const Eigen::MatrixXd oracle = permutation_shapley(nonlinear, sites.row(i), bg);
      for (int s = 0; s < 2; ++s)
        for (int k = 0; k < p; ++k) ASSERT_NEAR(a(s, i, k), oracle(k, s), 1e-8) << p << " " << i << " " << k;
    }
  }
}

TEST(Shap, EfficiencyDummyAndSymmetry) {
  const int p = 6;
  const Eigen::MatrixXd sites = random_matrix(4, p, 1), bg = random_matrix(8, p, 2);
  ex::ShapOptions o;
  o.mode = ex::ShapMode::exact;
  const auto a = ex::shap_explain(nonlinear, sites, bg, o);
  const Eigen::MatrixXd fx = nonlinear(sites);
  for (int s = 0; s < 2; ++s)
    for (int i = 0; i < 4; ++i) {
      double total = a.base_values(s);
      for (int k = 0; k < p; ++k) total += a(s, i, k);
      EXPECT_NEAR(total, fx(i, s), 1e-6);
      EXPECT_NEAR(a(s, i, 5), 0.0, 1e-12);
    }

  // Features 0 and 1 enter symmetrically.
  const ex::PredictFn sym = [](const Eigen::MatrixXd& x) {
    return Eigen::MatrixXd((x.col(0).array() * x.col(1).array() + x.col(0).array() + x.col(1).array()).sin());
  };
  Eigen::MatrixXd site(1, 3), back(1, 3);
  site << 0.7, 0.7, -1.0;
  back << 0.1, 0.1, 2.0;
  const auto b = ex::shap_explain(sym, site, back, o);
  EXPECT_NEAR(b(0, 0, 0), b(0, 0, 1), 1e-8);
  EXPECT_NEAR(b(0, 0, 2), 0.0, 1e-12);
}

TEST(Shap, SampledConvergesToExact) {
  const int p = 8;
  const Eigen::MatrixXd sites = random_matrix(3, p, 5), bg = random_matrix(6, p, 6);
  ex::ShapOptions o;
  o.mode = ex::ShapMode::exact;
  const auto exact = ex::shap_explain(nonlinear, sites, bg, o);
  o.mode = ex::ShapMode::sampled;
  o.seed = 3;
  double previous = 1e300;
  for (int n : {64, 512, 4096}) {
    o.n_samples = n;
    const auto a = ex::shap_explain(nonlinear, sites, bg, o);
    double err = 0.0;
    for (int s = 0; s < 2; ++s)
      for (int i = 0; i < 3; ++i) {
        double total = a.base_values(s);
        for (int k = 0; k < p; ++k) {
          err = std::max(err, std::abs(a(s, i, k) - exact(s, i, k)));
          total += a(s, i, k);
        }
        if (n >= 2048) EXPECT_NEAR(total, nonlinear(sites)(i, s), 1e-3);
      }
    EXPECT_LT(err, previous) << n;
    previous = err;
  }
  EXPECT_LT(previous, 0.02);
}

TEST(Shap, KernelWeight) {
  // (P-1) / (C(P,s) s (P-s))
  EXPECT_NEAR(ex::shapley_kernel_weight(4, 1), 3.0 / (4.0 * 1 * 3), 1e-15);
  EXPECT_NEAR(ex::shapley_kernel_weight(4, 2), 3.0 / (6.0 * 2 * 2), 1e-15);
  EXPECT_NEAR(ex::shapley_kernel_weight(5, 2), ex::shapley_kernel_weight(5, 3), 1e-15);
}

ex::ShapAttribution two_site_attr() {
  ex::ShapAttribution a(1, 2, 2);
  a(0, 0, 0) = 0.2;
  a(0, 1, 0) = -0.2;
  a(0, 0, 1) = 0.0;
  a(0, 1, 1) = 0.0;
  a.base_values = Eigen::VectorXd::Constant(1, 0.4);
  a.species_names = {"sp"};
  a.site_ids = {"s1", "s2"};
  a.feature_names = {"f1", "f2"};
  return a;
}

TEST(Importance, MeanAbsolute) {
  const auto imp = ex::global_importance(two_site_attr());
  EXPECT_NEAR(imp(0, 0), 0.2, 1e-15);
  EXPECT_EQ(imp(0, 1), 0.0);
  EXPECT_TRUE(ex::global_importance(ex::ShapAttribution(2, 3, 4)).isZero());
}

TEST(Importance, GroupShares) {
  ex::ShapAttribution a(2, 1, 3);
  a(0, 0, 0) = 3.0;
  a(0, 0, 1) = -0.5;
  a(0, 0, 2) = 0.5;
  a(1, 0, 0) = 1.0;
  a(1, 0, 1) = 1.0;
  a(1, 0, 2) = 2.0;
  a.feature_names = {"t", "p1", "p2"};
  a.species_names = {"a", "b"};
  a.site_ids = {"s"};
  a.base_values = Eigen::VectorXd::Zero(2);
  a.feature_groups = {{"t", "temperature"}, {"p1", "precipitation"}, {"p2", "precipitation"}};
  const auto g = ex::group_importance(a);
  ASSERT_EQ(g.groups, (std::vector<std::string>{"precipitation", "temperature"}));
  EXPECT_NEAR(g.values(0, 1), 0.75, 1e-15);
  EXPECT_NEAR(g.values(0, 0), 0.25, 1e-15);
  EXPECT_NEAR(g.values(1, 0), 0.75, 1e-15);
  for (auto& [f, grp] : a.feature_groups) grp = "all";
  EXPECT_TRUE(ex::group_importance(a).values.isOnes());
  a.feature_groups.erase("t");
  EXPECT_THROW(ex::group_importance(a), mtec::ConfigError);
}

TEST(Importance, OrderByMean) {
  Eigen::MatrixXd imp(2, 3);
  imp << 0.1, 0.5, 0.1, 0.3, 0.5, 0.1;
  EXPECT_EQ(ex::importance_order(imp), (std::vector<int>{1, 0, 2}));
}

TEST(LocalExport, Records) {
  ex::ShapAttribution a(1, 1, 1);
  a(0, 0, 0) = -0.3;
  a.site_ids = {"s"};
  a.feature_names = {"f"};
  a.species_names = {"sp"};
  a.base_values = Eigen::VectorXd::Zero(1);
  auto e = ex::export_local_attribution(a, 0, {{"s", {1.5, 2.5}}});
  ASSERT_EQ(e.records.size(), 1u);
  EXPECT_EQ(e.records[0].phi, -0.3);
  EXPECT_EQ(e.records[0].x, 1.5);

  const auto b = two_site_attr();
  EXPECT_EQ(ex::export_local_attribution(b, 0, {{"s1", {0, 0}}, {"s2", {1, 1}}}).records.size(), 4u);
  const auto partial = ex::export_local_attribution(b, 0, {{"s1", {0, 0}}});
  EXPECT_EQ(partial.records.size(), 2u);
  EXPECT_EQ(partial.skipped_sites, 1u);
  std::ostringstream out;
  ex::write_local_csv(out, partial);
  EXPECT_NE(out.str().find("s1"), std::string::npos);
}

TEST(Attribution, SaveLoadRoundTrip) {
  auto a = two_site_attr();
  a.feature_groups = {{"f1", "g"}, {"f2", "h"}};
  const auto dir = std::filesystem::temp_directory_path() / "mtec_attr_roundtrip";
  std::filesystem::remove_all(dir);
  a.save(dir);
  const auto b = ex::ShapAttribution::load(dir);
  EXPECT_EQ(b.n_sites(), 2);
  EXPECT_EQ(b.site_ids, a.site_ids);
  EXPECT_EQ(b.feature_groups, a.feature_groups);
  EXPECT_DOUBLE_EQ(b(0, 1, 0), -0.2);
  EXPECT_DOUBLE_EQ(b.base_values(0), 0.4);
  std::filesystem::remove_all(dir);
}

}  // namespace
