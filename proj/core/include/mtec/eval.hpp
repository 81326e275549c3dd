#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mtec::eval {

// Mann-Whitney AUC: fraction of (positive, negative) pairs ranked correctly,
// ties counted one half. nullopt when labels hold a single class.
std::optional<double> roc_auc(std::span<const double> scores, std::span<const double> labels);

// Sensitivity + specificity - 1, predicting presence when score >= threshold.
std::optional<double> tss(std::span<const double> scores, std::span<const double> labels,
                          double threshold);

struct ThresholdChoice {
  double threshold = 0.5;
  double tss = 0.0;
};

// Maximizes TSS over midpoints between consecutive distinct scores (plus the
// smallest score, which predicts presence everywhere). Ties keep the
// smallest threshold.
std::optional<ThresholdChoice> select_threshold(std::span<const double> scores,
                                                std::span<const double> labels);

// Fraction of known presences with score >= threshold.
std::optional<double> recall_presence_only(std::span<const double> scores_at_occurrences,
                                           double threshold);

struct RankSumResult {
  double u = 0.0;  // pairs with a > b, ties 1/2
  double z = 0.0;
  double p_value = 1.0;
  bool small_sample = false;  // fewer than 8 observations on a side
};

// Two-sided Wilcoxon rank-sum test, normal approximation with tie and
// continuity correction.
RankSumResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b);

struct SpeciesMetrics {
  std::string species;
  double prevalence = 0.0;
  double threshold = 0.5;
  std::optional<double> tss;
  std::optional<double> auc;
  std::optional<double> recall;
};

struct Summary {
  std::optional<double> median;
  std::optional<double> sd;  // sample standard deviation
  std::size_t count = 0;
};

Summary summarize(const std::vector<std::optional<double>>& values);

// "0.746 ± 0.243" or "n/a".
std::string format_summary(const Summary& s, int precision = 3);

struct MetricReport {
  std::string model_name;
  std::vector<SpeciesMetrics> per_species;
  Summary tss() const;
  Summary auc() const;
  Summary recall() const;
};

// Metrics for every column of `scores` against `labels` (sites x species).
// When `thresholds` is empty, thresholds are selected to maximize TSS on
// these labels. Recall is the sensitivity at the same threshold.
MetricReport evaluate(const std::string& model_name, const Eigen::MatrixXd& scores,
                      const Eigen::MatrixXd& labels, const std::vector<std::string>& species,
                      const std::vector<double>& thresholds = {});

// Presence-only evaluation: recall at the given thresholds over cells with
// label 1; TSS/AUC left undefined.
MetricReport evaluate_presence_only(const std::string& model_name, const Eigen::MatrixXd& scores,
                                    const Eigen::MatrixXd& labels,
                                    const std::vector<std::string>& species,
                                    const std::vector<double>& thresholds);

std::vector<double> column(const Eigen::MatrixXd& m, Eigen::Index j);

}  // namespace mtec::eval
