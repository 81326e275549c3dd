#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mtec/data.hpp"
#include "mtec/model.hpp"
#include "mtec/nn.hpp"

namespace mtec::train {

struct SplitPlan {
  std::vector<std::size_t> train_rows;  // sorted
  std::vector<std::size_t> valid_rows;  // sorted
  int min_occur = 5;
  std::uint64_t seed = 0;
  // Mandatory presence draws alone exceeded the requested training size.
  bool overflow = false;
};

// Imbalance-aware split: repeatedly satisfies the unsatisfied taxon with the
// fewest available presences, then fills the training set uniformly up to
// `tsize`. Species with fewer than `min_occur` presences contribute all of them.
SplitPlan balanced_partition(const Eigen::MatrixXd& y, int min_occur, std::size_t tsize,
                             std::uint64_t seed);

struct ClassWeights {
  Eigen::VectorXd weights;
  std::vector<bool> degenerate;  // all-present or all-absent species (weight 1)
};

// Positive-class weight per species: absences / presences.
ClassWeights class_weights(const Eigen::MatrixXd& y_train);

// Intercepts at g(prevalence) under the configured link, Glorot weights.
// Prevalence is clamped to [1/(2N), 1 - 1/(2N)].
MtecModel init_model(const MtecConfig& config, int input_width, const Eigen::MatrixXd& y_train,
                     std::uint64_t seed);

struct TrainSettings {
  int max_epochs = 400;
  int batch_size = 32;
  int patience = 10;
  // Independent initializations; the one with the lowest best validation
  // loss is kept.
  int restarts = 1;
  std::uint64_t seed = 0;
  // Fixed seed for the validation noise so epochs compare like with like.
  std::uint64_t eval_seed = 0x5eedULL;
  nn::AdamOptions adam{};

  void validate() const;
  nlohmann::json to_json() const;
  static TrainSettings from_json(const nlohmann::json& j);
};

struct EpochRecord {
  int epoch = 0;
  double recon = 0.0;  // summed over training batches
  double kl = 0.0;
  double reg = 0.0;    // at the end of the epoch
  double valid_total = 0.0;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_valid = 0.0;
  int restart = 0;  // index of the kept initialization
  bool aborted = false;
  std::string diagnostic;

  void write_csv(std::ostream& out) const;
};

struct FitResult {
  MtecModel model;
  TrainingLog log;
};

// Mini-batch Adam on the training rows with early stopping on the validation
// loss; returns the best-validation parameters. `features` are preprocessed.
// Restart r > 0 draws its seed from Rng(seed).split(100 + r).
// On a non-finite loss the best finite snapshot is returned with
// log.aborted set.
FitResult fit(const Eigen::MatrixXd& features, const Eigen::MatrixXd& community,
              const MtecConfig& config, const TrainSettings& settings, const SplitPlan& plan);

// Preprocessor fitted on plan.train_rows, then fit() on the transformed rows.
struct PipelineResult {
  data::Preprocessor preprocessor;
  FitResult fit;
};
PipelineResult fit(const data::Dataset& d, const data::PreprocessOptions& preprocessing,
                   const MtecConfig& config, const TrainSettings& settings, const SplitPlan& plan);

// Validation-set loss with a fixed noise draw (used for early stopping).
LossParts evaluate_loss(const MtecModel& model, const Eigen::MatrixXd& features,
                        const Eigen::MatrixXd& community, const std::vector<std::size_t>& rows,
                        const Eigen::VectorXd& class_weights, std::uint64_t noise_seed);

struct CvOptions {
  int min_occur = 5;
  // Fraction of each training half kept for gradient steps; the rest drives
  // early stopping.
  double inner_train_fraction = 0.8;
  data::PreprocessOptions preprocessing{};
  std::uint64_t seed = 0;
};

struct FoldScore {
  int replication = 0;
  int fold = 0;
  double mean_auc = 0.0;
  double mean_tss = 0.0;
  std::vector<std::string> excluded_species;  // single-class in the test half
};

struct ConfigScore {
  std::string name;
  std::vector<FoldScore> folds;  // 10 = 5 replications x 2 folds
  double auc_mean = 0.0, auc_sd = 0.0;
  double tss_mean = 0.0, tss_sd = 0.0;
};

struct PairedTest {
  std::size_t a = 0, b = 0;
  double t_statistic = 0.0;
  double p_value = 1.0;
};

struct CvReport {
  std::vector<ConfigScore> configs;
  std::vector<PairedTest> comparisons;  // every pair, on fold mean AUC
  std::size_t best_config = 0;          // highest mean AUC
  nlohmann::json to_json() const;
};

// Dietterich's 5x2cv paired t statistic from differences[i][j]
// (replication i, fold j): t = p_1^(1) / sqrt(mean_i s_i^2), 5 dof.
PairedTest dietterich_5x2cv(const std::array<std::array<double, 2>, 5>& differences);

CvReport cross_validate_5x2(const data::Dataset& d, const std::vector<MtecConfig>& configs,
                            const std::vector<std::string>& names, const TrainSettings& settings,
                            const CvOptions& options);

}  // namespace mtec::train
