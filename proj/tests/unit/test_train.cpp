#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "mtec/error.hpp"
#include "mtec/random.hpp"
#include "mtec/train.hpp"

namespace train = mtec::train;

namespace {

Eigen::MatrixXd random_community(int n, int m, mtec::Rng& rng) {
  Eigen::MatrixXd y(n, m);
  for (int j = 0; j < m; ++j) {
    const double p = 0.02 + 0.5 * rng.uniform();
    for (int i = 0; i < n; ++i) y(i, j) = rng.bernoulli(p);
  }
  return y;
}

// Independent recount of the split invariants.
std::string check_plan(const Eigen::MatrixXd& y, const train::SplitPlan& plan, std::size_t tsize, int min_occur) {
  const auto n = static_cast<std::size_t>(y.rows());
  std::vector<int> where(n, 0);
  for (auto r : plan.train_rows) where.at(r) += 1;
  for (auto r : plan.valid_rows) where.at(r) += 2;
  for (std::size_t i = 0; i < n; ++i)
    if (where[i] != 1 && where[i] != 2) return "row " + std::to_string(i) + " not in exactly one part";
  if (!std::is_sorted(plan.train_rows.begin(), plan.train_rows.end())) return "train rows unsorted";
  if (!plan.overflow && plan.train_rows.size() != tsize) return "train size";
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    int total = 0, in_train = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (y(static_cast<Eigen::Index>(i), j) != 1.0) continue;
      ++total;
      in_train += where[i] == 1;
    }
    if (in_train < std::min(total, min_occur)) return "species " + std::to_string(j) + " short of presences";
  }
  return {};
}

TEST(BalancedPartition, EveryTaxonGetsMinOccur) {
  mtec::Rng rng(1);
  Eigen::MatrixXd y = random_community(120, 10, rng);
  for (Eigen::Index j = 0; j < y.cols(); ++j)
    for (int i = 0; i < 6; ++i) y(i * 7 + j, j) = 1.0;
  const auto plan = train::balanced_partition(y, 5, 60, 3);
  EXPECT_EQ(check_plan(y, plan, 60, 5), "");
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    int c = 0;
    for (auto r : plan.train_rows) c += y(static_cast<Eigen::Index>(r), j) == 1.0;
    EXPECT_GE(c, 5);
  }
}

TEST(BalancedPartition, ExactlyMinOccurForcesAllIntoTrain) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(20, 1);
  for (int i : {1, 4, 9, 13, 17}) y(i, 0) = 1.0;
  const auto plan = train::balanced_partition(y, 5, 10, 7);
  for (int i : {1, 4, 9, 13, 17}) {
    EXPECT_TRUE(std::binary_search(plan.train_rows.begin(), plan.train_rows.end(), static_cast<std::size_t>(i)));
  }
  EXPECT_EQ(plan.train_rows.size(), 10u);
}

TEST(BalancedPartition, RandomMatricesSatisfyInvariants) {
  mtec::Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    const Eigen::MatrixXd y = random_community(50, 8, rng);
    const std::size_t tsize = 20 + rng.below(20);
    const auto plan = train::balanced_partition(y, 5, tsize, 100 + t);
    ASSERT_EQ(check_plan(y, plan, tsize, 5), "") << "instance " << t;
  }
}

TEST(BalancedPartition, SeedDeterminesPlan) {
  mtec::Rng rng(3);
  const Eigen::MatrixXd y = random_community(40, 5, rng);
  const auto a = train::balanced_partition(y, 5, 25, 9), b = train::balanced_partition(y, 5, 25, 9);
  EXPECT_EQ(a.train_rows, b.train_rows);
  const auto c = train::balanced_partition(y, 5, 25, 10);
  EXPECT_NE(a.train_rows, c.train_rows);
}

TEST(BalancedPartition, OverflowFlagged) {
  // Each of 6 species occupies its own 5 sites; 30 mandatory rows for tsize 10.
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(40, 6);
  for (int j = 0; j < 6; ++j)
    for (int k = 0; k < 5; ++k) y(j * 5 + k, j) = 1.0;
  const auto plan = train::balanced_partition(y, 5, 10, 1);
  EXPECT_TRUE(plan.overflow);
  EXPECT_EQ(plan.train_rows.size(), 30u);
  EXPECT_EQ(check_plan(y, plan, 10, 5), "");
}

TEST(ClassWeights, OddsOfAbsence) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(1000, 4);
  y.col(0).head(500).setOnes();
  y.col(1).head(100).setOnes();
  y.col(2).head(613).setOnes();
  // column 3 never present
  const auto w = train::class_weights(y);
  EXPECT_DOUBLE_EQ(w.weights(0), 1.0);
  EXPECT_DOUBLE_EQ(w.weights(1), 9.0);
  EXPECT_NEAR(w.weights(2), 0.387 / 0.613, 1e-12);
  EXPECT_NEAR(w.weights(2), 0.631, 5e-4);
  EXPECT_DOUBLE_EQ(w.weights(3), 1.0);
  EXPECT_TRUE(w.degenerate[3]);
  EXPECT_FALSE(w.degenerate[0]);
}

TEST(InitModel, InterceptsAtLinkOfPrevalence) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(10000, 2);
  y.col(0).head(5000).setOnes();
  y.col(1).head(1587).setOnes();
  mtec::MtecConfig cfg;
  auto m = train::init_model(cfg, 4, y, 1);
  EXPECT_NEAR(m.params().intercepts(0), 0.0, 1e-12);
  EXPECT_NEAR(m.params().intercepts(1), -1.0, 1e-3);

  // Zeroed networks and effects: predictions equal the training prevalence.
  for (auto& l : m.params().feature_encoder.layers()) l.weight.setZero();
  m.params().response.setZero();
  m.params().loadings.setZero();
  m.set_trained(true);
  const Eigen::MatrixXd p = m.predict(Eigen::MatrixXd::Random(3, 4));
  EXPECT_NEAR(p(0, 0), 0.5, 1e-12);
  EXPECT_NEAR(p(2, 1), 0.1587, 1e-12);
}

TEST(InitModel, WeightsAreGlorot) {
  mtec::MtecConfig cfg;
  const auto m = train::init_model(cfg, 10, Eigen::MatrixXd::Ones(4, 3) * 0.0 + Eigen::MatrixXd::Identity(4, 3), 5);
  const auto& w = m.params().feature_encoder.layers()[0].weight;
  EXPECT_GT(w.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_LE(w.cwiseAbs().maxCoeff(), mtec::nn::glorot_limit(10, 16));
}

struct ToyFit {
  Eigen::MatrixXd features, community;
  train::SplitPlan plan;
};

// One covariate separating two species.
ToyFit separable(int n) {
  ToyFit t;
  mtec::Rng rng(11);
  t.features.resize(n, 1);
  t.community.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    t.features(i, 0) = x;
    t.community(i, 0) = x > 0.0;
    t.community(i, 1) = x < -0.5;
  }
  for (int i = 0; i < n; ++i) (i % 5 == 0 ? t.plan.valid_rows : t.plan.train_rows).push_back(static_cast<std::size_t>(i));
  return t;
}

mtec::MtecConfig toy_config() {
  mtec::MtecConfig cfg;
  cfg.latent_dim = 1;
  cfg.encoder_widths = {4};
  cfg.set_isotropic_prior(0.0, 1.0);
  return cfg;
}

TEST(Fit, TrainingLossMostlyDecreases) {
  const auto t = separable(200);
  train::TrainSettings s;
  s.max_epochs = 21;
  s.patience = 100;
  s.seed = 3;
  s.adam.learning_rate = 0.01;
  const auto r = train::fit(t.features, t.community, toy_config(), s, t.plan);
  ASSERT_EQ(r.log.epochs.size(), 21u);
  int rises = 0;
  for (std::size_t e = 1; e < r.log.epochs.size(); ++e) rises += r.log.epochs[e].recon > r.log.epochs[e - 1].recon;
  EXPECT_LE(rises, 3);
  EXPECT_LT(r.log.epochs.back().recon, r.log.epochs.front().recon);
}

TEST(Fit, EarlyStoppingRespectsPatience) {
  const auto t = separable(150);
  train::TrainSettings s;
  s.max_epochs = 400;
  s.patience = 10;
  s.seed = 4;
  s.adam.learning_rate = 0.05;
  const auto r = train::fit(t.features, t.community, toy_config(), s, t.plan);
  ASSERT_FALSE(r.log.epochs.empty());
  const int last = r.log.epochs.back().epoch;
  EXPECT_LE(last - r.log.best_epoch, 10);
  if (last < s.max_epochs) EXPECT_EQ(last - r.log.best_epoch, 10);
  double best = 1e300;
  for (const auto& e : r.log.epochs) best = std::min(best, e.valid_total);
  EXPECT_EQ(r.log.epochs[static_cast<std::size_t>(r.log.best_epoch - 1)].valid_total, best);
  EXPECT_EQ(r.log.best_valid, best);
}

TEST(Fit, SameSeedSameLog) {
  const auto t = separable(100);
  train::TrainSettings s;
  s.max_epochs = 15;
  s.seed = 5;
  auto text = [&] {
    std::ostringstream out;
    train::fit(t.features, t.community, toy_config(), s, t.plan).log.write_csv(out);
    return out.str();
  };
  EXPECT_EQ(text(), text());
}

TEST(Fit, RestartsKeepLowestValidationLoss) {
  const auto t = separable(100);
  train::TrainSettings s;
  s.max_epochs = 30;
  s.seed = 6;
  const auto single = train::fit(t.features, t.community, toy_config(), s, t.plan);
  s.restarts = 3;
  const auto multi = train::fit(t.features, t.community, toy_config(), s, t.plan);
  EXPECT_LE(multi.log.best_valid, single.log.best_valid);
  EXPECT_GE(multi.log.restart, 0);
  EXPECT_LT(multi.log.restart, 3);
  if (multi.log.restart == 0) EXPECT_EQ(multi.log.best_valid, single.log.best_valid);
}

TEST(Fit, RejectsBadSettings) {
  const auto t = separable(20);
  train::TrainSettings s;
  s.patience = 0;
  EXPECT_THROW(train::fit(t.features, t.community, toy_config(), s, t.plan), mtec::ConfigError);
  s = {};
  s.restarts = 0;
  EXPECT_THROW(s.validate(), mtec::ConfigError);
  EXPECT_THROW(train::TrainSettings::from_json(nlohmann::json{{"epochs", 3}}), mtec::ConfigError);
  const auto back = train::TrainSettings::from_json(nlohmann::json{{"restarts", 2}, {"patience", 7}});
  EXPECT_EQ(back.restarts, 2);
  EXPECT_EQ(back.patience, 7);
}

// Student t CDF with 5 degrees of freedom in closed form.
double t5_cdf(double t) {
  const double th = std::atan(t / std::sqrt(5.0));
  const double c = std::cos(th);
  return 0.5 + (th + std::sin(th) * c * (1.0 + 2.0 / 3.0 * c * c)) / std::numbers::pi;
}

TEST(Dietterich, HandEvaluatedTable) {
  const std::array<std::array<double, 2>, 5> d{{{0.10, 0.05}, {0.02, 0.04}, {-0.01, 0.03}, {0.06, 0.02}, {0.0, 0.08}}};
  // s_i^2: 0.00125, 0.0002, 0.0008, 0.0008, 0.0032; mean 0.00125.
  const double t = 0.10 / std::sqrt(0.00125);
  const auto r = train::dietterich_5x2cv(d);
  EXPECT_NEAR(r.t_statistic, t, 1e-10);
  EXPECT_NEAR(r.t_statistic, 2.8284271247, 1e-9);
  EXPECT_NEAR(r.p_value, 2.0 * (1.0 - t5_cdf(t)), 1e-10);
}

TEST(Dietterich, IdenticalModels) {
  const std::array<std::array<double, 2>, 5> zero{};
  const auto r = train::dietterich_5x2cv(zero);
  EXPECT_EQ(r.t_statistic, 0.0);
  EXPECT_EQ(r.p_value, 1.0);
}

TEST(CrossValidation, IdenticalConfigsAreIndistinguishable) {
  mtec::Rng rng(21);
  mtec::data::Dataset d;
  const int n = 80;
  d.covariates.resize(n, 2);
  d.community.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    d.site_ids.push_back("s" + std::to_string(i));
    d.covariates(i, 0) = rng.normal();
    d.covariates(i, 1) = rng.normal();
    d.community(i, 0) = d.covariates(i, 0) + 0.5 * rng.normal() > 0;
    d.community(i, 1) = d.covariates(i, 1) + 0.5 * rng.normal() > 0.3;
    d.community(i, 2) = d.covariates(i, 0) - d.covariates(i, 1) + 0.5 * rng.normal() > 0;
  }
  d.species_names = {"a", "b", "c"};
  d.schema = mtec::data::FeatureSchema({{"x1", mtec::data::FeatureKind::numerical, {}, ""},
                                       {"x2", mtec::data::FeatureKind::numerical, {}, ""}});
  train::TrainSettings s;
  s.max_epochs = 80;
  s.seed = 8;
  s.adam.learning_rate = 0.02;
  train::CvOptions o;
  o.seed = 9;
  const auto cfg = toy_config();
  const auto rep = train::cross_validate_5x2(d, {cfg, cfg}, {"a", "b"}, s, o);
  ASSERT_EQ(rep.configs.size(), 2u);
  EXPECT_EQ(rep.configs[0].folds.size(), 10u);
  ASSERT_EQ(rep.comparisons.size(), 1u);
  EXPECT_NEAR(rep.comparisons[0].t_statistic, 0.0, 1e-12);
  EXPECT_NEAR(rep.comparisons[0].p_value, 1.0, 1e-12);
  EXPECT_EQ(rep.configs[0].auc_mean, rep.configs[1].auc_mean);
  EXPECT_GT(rep.configs[0].auc_mean, 0.6);
}

}  // namespace
