#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mtec/explain.hpp"

namespace mtec::groups {

// One agglomeration step. Ids below n are observations, id n+t is the
// cluster created at step t (scipy linkage convention).
struct Merge {
  int a = 0;
  int b = 0;
  double height = 0.0;  // Ward distance sqrt(2 * increase in within-cluster SS)
  int size = 0;
};

struct MergeTree {
  int n_leaves = 0;
  std::vector<Merge> merges;  // n_leaves - 1 entries

  // Labels 1..k by cutting before the last k-1 merges; clusters numbered in
  // order of their first member.
  std::vector<int> cut(int k) const;
};

// Ward linkage via Lance-Williams updates on squared Euclidean distances.
// Distance ties go to the smallest (i, j) slot pair.
MergeTree ward_cluster(const Eigen::MatrixXd& rows);

// Pooled within-cluster sum of squares for a labelling (labels 1..k).
double within_cluster_ss(const Eigen::MatrixXd& rows, const std::vector<int>& labels);

struct GapResult {
  std::vector<double> log_wk;      // k = 1..k_max
  std::vector<double> ref_log_wk;  // mean over references
  std::vector<double> gap;
  std::vector<double> s_k;         // sd * sqrt(1 + 1/B)
  int chosen_k = 1;
};

// Tibshirani gap statistic with uniform references over the PCA-aligned
// bounding box; 1-SE rule picks the smallest k with Gap(k) >= Gap(k+1) - s_{k+1}.
GapResult gap_statistic(const Eigen::MatrixXd& rows, int k_max, int n_references,
                        std::uint64_t seed);

struct WssResult {
  std::vector<double> wss;  // k = 1..k_max
  std::optional<int> elbow;  // nullopt when k_max < 3 or no curvature
};

WssResult wss_elbow(const Eigen::MatrixXd& rows, int k_max);

struct PcaResult {
  Eigen::MatrixXd scores;     // n x components
  Eigen::MatrixXd loadings;   // columns x components
  Eigen::VectorXd explained;  // eigenvalue / trace per component
};

// Column-centered PCA; each component's largest-magnitude loading is positive.
PcaResult pca_project(const Eigen::MatrixXd& rows, int n_components);

// species x (site, feature) SHAP matrix for the features of one group.
struct ResponseMatrix {
  Eigen::MatrixXd values;
  std::vector<std::string> species;
  std::vector<std::string> features;  // group members, attribution order
  // Column c is (site c / features.size(), feature c % features.size()).
};

ResponseMatrix response_matrix(const explain::ShapAttribution& attr, const std::string& group);

struct ClusterOptions {
  int k_max = 8;
  int n_references = 50;
  std::uint64_t seed = 0;
  bool consensus = false;   // rounded mean of GAP and elbow choices when they differ
  bool standardize = false; // scale response columns to unit variance first
  int pca_components = 2;
};

struct ClusterResult {
  std::string group;
  int k = 1;
  int gap_k = 1;
  std::optional<int> elbow_k;
  std::vector<std::string> species;
  std::vector<int> labels;
  MergeTree merge_tree;
  GapResult gap;
  WssResult wss;
  PcaResult pca;  // on species x mean SHAP per feature

  nlohmann::json to_json() const;
};

ClusterResult build_response_groups(const explain::ShapAttribution& attr,
                                    const std::string& group, const ClusterOptions& options);

}  // namespace mtec::groups
