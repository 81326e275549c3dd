#include "mtec/train.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>

#include "mtec/csv.hpp"
#include "mtec/error.hpp"
#include "mtec/eval.hpp"

namespace mtec::train {

SplitPlan balanced_partition(const Eigen::MatrixXd& y, int min_occur, std::size_t tsize,
                             std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(y.rows());
  const auto m = static_cast<std::size_t>(y.cols());
  if (min_occur < 1) throw ConfigError("balanced_partition: min_occur must be >= 1");
  if (tsize > n) throw ConfigError("balanced_partition: tsize exceeds the number of sites");

  Rng rng(seed);
  std::vector<bool> in_train(n, false);
  std::vector<int> in_train_count(m, 0);
  std::vector<bool> done(m, false);  // satisfied, or every presence already drawn

  auto required = [&](std::size_t j) { return min_occur - in_train_count[j]; };

  while (true) {
    std::vector<std::size_t> unsatisfied;
    std::vector<std::size_t> potential;
    for (std::size_t j = 0; j < m; ++j) {
      if (done[j] || required(j) <= 0) continue;
      std::size_t avail = 0;
      for (std::size_t i = 0; i < n; ++i) avail += (!in_train[i] && y(i, j) == 1.0) ? 1 : 0;
      if (avail == 0) {
        done[j] = true;
        continue;
      }
      unsatisfied.push_back(j);
      potential.push_back(avail);
    }
    if (unsatisfied.empty()) break;

    // Rarest taxa first; ties broken uniformly.
    const std::size_t least = *std::min_element(potential.begin(), potential.end());
    std::vector<std::size_t> candidates;
    for (std::size_t c = 0; c < unsatisfied.size(); ++c) {
      if (potential[c] == least) candidates.push_back(unsatisfied[c]);
    }
    const std::size_t choice = candidates[rng.below(candidates.size())];

    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < n; ++i) {
      if (!in_train[i] && y(i, choice) == 1.0) pool.push_back(i);
    }
    const auto nidx = static_cast<std::size_t>(required(choice));
    const std::size_t take = std::min(nidx, pool.size());
    for (std::size_t t = 0; t < take; ++t) {
      const std::size_t pick = t + rng.below(pool.size() - t);
      std::swap(pool[t], pool[pick]);
      const std::size_t row = pool[t];
      in_train[row] = true;
      for (std::size_t j = 0; j < m; ++j) in_train_count[j] += y(row, j) == 1.0 ? 1 : 0;
    }
    if (take == pool.size()) done[choice] = true;
  }

  SplitPlan plan;
  plan.min_occur = min_occur;
  plan.seed = seed;
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < n; ++i) {
    if (in_train[i]) plan.train_rows.push_back(i);
    else rest.push_back(i);
  }
  if (plan.train_rows.size() > tsize) {
    plan.overflow = true;
  } else {
    const std::size_t fill = tsize - plan.train_rows.size();
    for (std::size_t t = 0; t < fill; ++t) {
      const std::size_t pick = t + rng.below(rest.size() - t);
      std::swap(rest[t], rest[pick]);
      in_train[rest[t]] = true;
    }
    plan.train_rows.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (in_train[i]) plan.train_rows.push_back(i);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!in_train[i]) plan.valid_rows.push_back(i);
  }
  return plan;
}

ClassWeights class_weights(const Eigen::MatrixXd& y_train) {
  ClassWeights out;
  out.weights.resize(y_train.cols());
  out.degenerate.assign(static_cast<std::size_t>(y_train.cols()), false);
  for (Eigen::Index j = 0; j < y_train.cols(); ++j) {
    long presences = 0;
    for (Eigen::Index i = 0; i < y_train.rows(); ++i) presences += y_train(i, j) == 1.0 ? 1 : 0;
    const long absences = static_cast<long>(y_train.rows()) - presences;
    if (presences == 0 || absences == 0) {
      out.weights(j) = 1.0;
      out.degenerate[static_cast<std::size_t>(j)] = true;
    } else {
      out.weights(j) = static_cast<double>(absences) / static_cast<double>(presences);
    }
  }
  return out;
}

MtecModel init_model(const MtecConfig& config, int input_width, const Eigen::MatrixXd& y_train,
                     std::uint64_t seed) {
  const int m = static_cast<int>(y_train.cols());
  MtecModel model = MtecModel::zeros(config, input_width, m);
  Rng rng(seed);
  auto& p = model.params();
  for (auto& l : p.feature_encoder.layers()) nn::glorot_fill(l.weight, rng);
  for (auto& l : p.recog_net.layers()) nn::glorot_fill(l.weight, rng);
  nn::glorot_fill(p.response, rng);
  nn::glorot_fill(p.loadings, rng);
  const double n = static_cast<double>(std::max<Eigen::Index>(y_train.rows(), 1));
  const double lo = 1.0 / (2.0 * n);
  for (int j = 0; j < m; ++j) {
    const double prev = y_train.rows() > 0 ? y_train.col(j).mean() : 0.5;
    p.intercepts(j) = link_function(config.link, std::clamp(prev, lo, 1.0 - lo));
  }
  return model;
}

void TrainSettings::validate() const {
  if (max_epochs < 1 || batch_size < 1 || patience < 1 || restarts < 1) {
    throw ConfigError("training: max_epochs, batch_size, patience and restarts must be positive");
  }
  if (!(adam.learning_rate > 0.0)) throw ConfigError("training: learning_rate must be positive");
}

nlohmann::json TrainSettings::to_json() const {
  return {{"max_epochs", max_epochs}, {"batch_size", batch_size}, {"patience", patience},
          {"restarts", restarts}, {"learning_rate", adam.learning_rate}, {"beta1", adam.beta1}, {"beta2", adam.beta2},
          {"epsilon", adam.epsilon}};
}

TrainSettings TrainSettings::from_json(const nlohmann::json& j) {
  static const char* known[] = {"max_epochs", "batch_size", "patience", "restarts", "learning_rate",
                                "beta1", "beta2", "epsilon"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
      throw ConfigError("training: unknown key '" + key + "'");
    }
  }
  TrainSettings s;
  s.max_epochs = j.value("max_epochs", s.max_epochs);
  s.batch_size = j.value("batch_size", s.batch_size);
  s.patience = j.value("patience", s.patience);
  s.restarts = j.value("restarts", s.restarts);
  s.adam.learning_rate = j.value("learning_rate", s.adam.learning_rate);
  s.adam.beta1 = j.value("beta1", s.adam.beta1);
  s.adam.beta2 = j.value("beta2", s.adam.beta2);
  s.adam.epsilon = j.value("epsilon", s.adam.epsilon);
  s.validate();
  return s;
}

void TrainingLog::write_csv(std::ostream& out) const {
  out << "epoch,recon,kl,reg,valid_total\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << csv::format_number(e.recon, 8) << ',' << csv::format_number(e.kl, 8) << ','
        << csv::format_number(e.reg, 8) << ',' << csv::format_number(e.valid_total, 8) << '\n';
  }
}

namespace {

Batch make_batch(const Eigen::MatrixXd& features, const Eigen::MatrixXd& community,
                 std::span<const std::size_t> rows, int latent_dim, Rng& rng) {
  Batch b;
  const auto n = static_cast<Eigen::Index>(rows.size());
  b.features.resize(n, features.cols());
  b.community.resize(n, community.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    b.features.row(i) = features.row(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)]));
    b.community.row(i) = community.row(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)]));
  }
  b.noise = standard_normal_matrix(n, latent_dim, rng);
  return b;
}

}  // namespace

LossParts evaluate_loss(const MtecModel& model, const Eigen::MatrixXd& features,
                        const Eigen::MatrixXd& community, const std::vector<std::size_t>& rows,
                        const Eigen::VectorXd& class_weights, std::uint64_t noise_seed) {
  Rng rng(noise_seed);
  const Batch b = make_batch(features, community, rows, model.latent_dim(), rng);
  return model.loss(b, class_weights);
}

namespace {

FitResult fit_once(const Eigen::MatrixXd& features, const Eigen::MatrixXd& community, const MtecConfig& config,
                   const TrainSettings& settings, const SplitPlan& plan, const Eigen::MatrixXd& y_train,
                   const Eigen::VectorXd& weights, std::uint64_t seed) {
  FitResult result;
  MtecModel model = init_model(config, static_cast<int>(features.cols()), y_train, seed);
  model.set_trained(true);
  MtecModel best = model;
  double best_valid = std::numeric_limits<double>::infinity();
  const auto& valid_rows = plan.valid_rows.empty() ? plan.train_rows : plan.valid_rows;

  Rng rng = Rng(seed).split(1);
  nn::AdamState adam;
  adam.options = settings.adam;
  std::vector<std::size_t> order = plan.train_rows;
  auto& log = result.log;

  for (int epoch = 1; epoch <= settings.max_epochs; ++epoch) {
    rng.shuffle(order);
    EpochRecord rec;
    rec.epoch = epoch;
    bool failed = false;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(settings.batch_size)) {
      const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(settings.batch_size), order.size() - start);
      const Batch batch = make_batch(features, community, std::span(order).subspan(start, len),
                                     config.latent_dim, rng);
      MtecGradients grads = model.zero_gradients();
      const LossParts parts = model.loss_and_gradient(batch, weights, grads);
      if (!std::isfinite(parts.total())) {
        log.diagnostic = "non-finite training loss at epoch " + std::to_string(epoch);
        failed = true;
        break;
      }
      rec.recon += parts.recon;
      rec.kl += parts.kl;
      auto params = model.params().tensors();
      auto g = grads.tensors();
      const auto step = nn::adam_step(params, g, adam);
      if (!step.applied) {
        log.diagnostic = "non-finite gradient in '" + step.nonfinite_tensor + "' at epoch " + std::to_string(epoch);
        failed = true;
        break;
      }
    }
    if (!failed) {
      rec.reg = model.regularization();
      rec.valid_total = evaluate_loss(model, features, community, valid_rows, weights, settings.eval_seed).total();
      if (!std::isfinite(rec.valid_total)) {
        log.diagnostic = "non-finite validation loss at epoch " + std::to_string(epoch);
        failed = true;
      }
    }
    if (failed) {
      log.aborted = true;
      break;
    }
    log.epochs.push_back(rec);
    if (rec.valid_total < best_valid) {
      best_valid = rec.valid_total;
      best = model;
      log.best_epoch = epoch;
    } else if (epoch - log.best_epoch >= settings.patience) {
      break;
    }
  }
  log.best_valid = best_valid;
  result.model = std::move(best);
  result.model.set_trained(true);
  return result;
}


}  // namespace

FitResult fit(const Eigen::MatrixXd& features, const Eigen::MatrixXd& community,
              const MtecConfig& config, const TrainSettings& settings, const SplitPlan& plan) {
  settings.validate();
  config.validate();
  if (features.rows() != community.rows()) throw ShapeError("fit: features and community row counts differ");
  const auto n = static_cast<std::size_t>(features.rows());
  if (plan.train_rows.empty()) throw ConfigError("fit: empty training set");
  for (auto r : plan.train_rows)
    if (r >= n) throw ConfigError("fit: training row out of range");
  for (auto r : plan.valid_rows)
    if (r >= n) throw ConfigError("fit: validation row out of range");

  Eigen::MatrixXd y_train(static_cast<Eigen::Index>(plan.train_rows.size()), community.cols());
  for (std::size_t i = 0; i < plan.train_rows.size(); ++i) {
    y_train.row(static_cast<Eigen::Index>(i)) = community.row(static_cast<Eigen::Index>(plan.train_rows[i]));
  }
  const Eigen::VectorXd weights = class_weights(y_train).weights;

  std::optional<FitResult> kept;
  for (int r = 0; r < settings.restarts; ++r) {
    const std::uint64_t seed = r == 0 ? settings.seed : Rng(settings.seed).split(100 + static_cast<std::uint64_t>(r)).next();
    FitResult run = fit_once(features, community, config, settings, plan, y_train, weights, seed);
    run.log.restart = r;
    const bool usable = !run.log.epochs.empty() && std::isfinite(run.log.best_valid);
    const bool kept_usable = kept && !kept->log.epochs.empty() && std::isfinite(kept->log.best_valid);
    if (!kept || (usable && (!kept_usable || run.log.best_valid < kept->log.best_valid))) kept = std::move(run);
  }
  return std::move(*kept);
}


PipelineResult fit(const data::Dataset& d, const data::PreprocessOptions& preprocessing,
                   const MtecConfig& config, const TrainSettings& settings, const SplitPlan& plan) {
  PipelineResult out;
  out.preprocessor = data::Preprocessor::fit(d, plan.train_rows, preprocessing);
  const Eigen::MatrixXd features = out.preprocessor.transform(d.covariates);
  out.fit = fit(features, d.community, config, settings, plan);
  return out;
}

PairedTest dietterich_5x2cv(const std::array<std::array<double, 2>, 5>& differences) {
  double sum_var = 0.0;
  for (const auto& rep : differences) {
    const double mean = 0.5 * (rep[0] + rep[1]);
    sum_var += (rep[0] - mean) * (rep[0] - mean) + (rep[1] - mean) * (rep[1] - mean);
  }
  PairedTest out;
  const double numerator = differences[0][0];
  const double denom = std::sqrt(sum_var / 5.0);
  if (denom == 0.0) {
    out.t_statistic = numerator == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), numerator);
    out.p_value = numerator == 0.0 ? 1.0 : 0.0;
    return out;
  }
  out.t_statistic = numerator / denom;
  const boost::math::students_t dist(5.0);
  out.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(out.t_statistic)));
  return out;
}

namespace {

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  Rng r(base ^ (a * 0x9e3779b97f4a7c15ULL) ^ (b * 0xc2b2ae3d27d4eb4fULL));
  return r.next();
}

}  // namespace

CvReport cross_validate_5x2(const data::Dataset& d, const std::vector<MtecConfig>& configs,
                            const std::vector<std::string>& names, const TrainSettings& settings,
                            const CvOptions& options) {
  if (configs.empty()) throw ConfigError("cross_validate_5x2: no configurations");
  if (names.size() != configs.size()) throw ConfigError("cross_validate_5x2: one name per configuration");
  const std::size_t n = d.n_sites();

  // Same five splits for every configuration, so the comparison is paired.
  std::vector<SplitPlan> splits;
  for (int r = 0; r < 5; ++r) {
    splits.push_back(balanced_partition(d.community, options.min_occur, n / 2, mix_seed(options.seed, 100, r)));
  }

  CvReport report;
  for (std::size_t c = 0; c < configs.size(); ++c) {
    ConfigScore score;
    score.name = names[c];
    for (int r = 0; r < 5; ++r) {
      for (int f = 0; f < 2; ++f) {
        const auto& train_half = f == 0 ? splits[r].train_rows : splits[r].valid_rows;
        const auto& test_half = f == 0 ? splits[r].valid_rows : splits[r].train_rows;

        // Inner split of the training half drives early stopping.
        Eigen::MatrixXd y_half(static_cast<Eigen::Index>(train_half.size()), d.community.cols());
        for (std::size_t i = 0; i < train_half.size(); ++i) {
          y_half.row(static_cast<Eigen::Index>(i)) = d.community.row(static_cast<Eigen::Index>(train_half[i]));
        }
        const auto inner_size = static_cast<std::size_t>(
            std::lround(options.inner_train_fraction * static_cast<double>(train_half.size())));
        const SplitPlan inner = balanced_partition(y_half, options.min_occur,
                                                   std::min(inner_size, train_half.size()),
                                                   mix_seed(options.seed, 200 + r, f));
        SplitPlan plan;
        plan.min_occur = options.min_occur;
        for (auto i : inner.train_rows) plan.train_rows.push_back(train_half[i]);
        for (auto i : inner.valid_rows) plan.valid_rows.push_back(train_half[i]);
        std::sort(plan.train_rows.begin(), plan.train_rows.end());
        std::sort(plan.valid_rows.begin(), plan.valid_rows.end());

        const auto pre = data::Preprocessor::fit(d, train_half, options.preprocessing);
        const Eigen::MatrixXd features = pre.transform(d.covariates);
        TrainSettings s = settings;
        s.seed = mix_seed(options.seed, 300 + r, f);
        const auto fitted = fit(features, d.community, configs[c], s, plan);

        Eigen::MatrixXd test_features(static_cast<Eigen::Index>(test_half.size()), features.cols());
        Eigen::MatrixXd test_labels(static_cast<Eigen::Index>(test_half.size()), d.community.cols());
        for (std::size_t i = 0; i < test_half.size(); ++i) {
          test_features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(test_half[i]));
          test_labels.row(static_cast<Eigen::Index>(i)) = d.community.row(static_cast<Eigen::Index>(test_half[i]));
        }
        const Eigen::MatrixXd scores = fitted.model.predict(test_features);
        FoldScore fs;
        fs.replication = r + 1;
        fs.fold = f + 1;
        double auc_sum = 0.0, tss_sum = 0.0;
        int counted = 0;
        for (Eigen::Index j = 0; j < scores.cols(); ++j) {
          const auto sc = eval::column(scores, j);
          const auto lb = eval::column(test_labels, j);
          const auto auc = eval::roc_auc(sc, lb);
          const auto thr = eval::select_threshold(sc, lb);
          if (!auc || !thr) {
            fs.excluded_species.push_back(d.species_names[static_cast<std::size_t>(j)]);
            continue;
          }
          auc_sum += *auc;
          tss_sum += thr->tss;
          ++counted;
        }
        fs.mean_auc = counted ? auc_sum / counted : std::numeric_limits<double>::quiet_NaN();
        fs.mean_tss = counted ? tss_sum / counted : std::numeric_limits<double>::quiet_NaN();
        score.folds.push_back(std::move(fs));
      }
    }
    std::vector<double> aucs, tsss;
    for (const auto& fs : score.folds) {
      aucs.push_back(fs.mean_auc);
      tsss.push_back(fs.mean_tss);
    }
    score.auc_mean = std::accumulate(aucs.begin(), aucs.end(), 0.0) / static_cast<double>(aucs.size());
    score.tss_mean = std::accumulate(tsss.begin(), tsss.end(), 0.0) / static_cast<double>(tsss.size());
    score.auc_sd = sample_sd(aucs);
    score.tss_sd = sample_sd(tsss);
    report.configs.push_back(std::move(score));
  }

  for (std::size_t a = 0; a < report.configs.size(); ++a) {
    if (report.configs[a].auc_mean > report.configs[report.best_config].auc_mean) report.best_config = a;
    for (std::size_t b = a + 1; b < report.configs.size(); ++b) {
      std::array<std::array<double, 2>, 5> diff{};
      for (int r = 0; r < 5; ++r)
        for (int f = 0; f < 2; ++f)
          diff[r][f] = report.configs[a].folds[static_cast<std::size_t>(2 * r + f)].mean_auc -
                       report.configs[b].folds[static_cast<std::size_t>(2 * r + f)].mean_auc;
      PairedTest t = dietterich_5x2cv(diff);
      t.a = a;
      t.b = b;
      report.comparisons.push_back(t);
    }
  }
  return report;
}

nlohmann::json CvReport::to_json() const {
  nlohmann::json j;
  nlohmann::json cs = nlohmann::json::array();
  for (const auto& c : configs) {
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& f : c.folds) {
      folds.push_back({{"replication", f.replication}, {"fold", f.fold}, {"mean_auc", f.mean_auc},
                       {"mean_tss", f.mean_tss}, {"excluded_species", f.excluded_species}});
    }
    cs.push_back({{"name", c.name}, {"auc_mean", c.auc_mean}, {"auc_sd", c.auc_sd},
                  {"tss_mean", c.tss_mean}, {"tss_sd", c.tss_sd},
                  {"auc", eval::format_summary({c.auc_mean, c.auc_sd, c.folds.size()})},
                  {"folds", folds}});
  }
  j["configs"] = cs;
  nlohmann::json cmp = nlohmann::json::array();
  for (const auto& t : comparisons) {
    cmp.push_back({{"a", configs[t.a].name}, {"b", configs[t.b].name}, {"t_statistic", t.t_statistic},
                   {"p_value", t.p_value}, {"dof", 5}});
  }
  j["paired_t_tests"] = cmp;
  j["best"] = configs.empty() ? "" : configs[best_config].name;
  return j;
}

}  // namespace mtec::train
