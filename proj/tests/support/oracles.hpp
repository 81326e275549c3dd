#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. They follow textbook definitions directly and share no code with
// the library beyond plain Eigen types.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>
#include <vector>

namespace oracle {

// AUC by counting every (presence, absence) pair; ties count one half.
inline double pair_count_auc(const std::vector<double>& s, const std::vector<double>& y) {
  double good = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1.0) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0.0) continue;
      pairs += 1.0;
      good += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return good / pairs;
}

// Mann-Whitney U of a against b by pair counting.
inline double pair_count_u(const std::vector<double>& a, const std::vector<double>& b) {
  double u = 0.0;
  for (double x : a)
    for (double y : b) u += x > y ? 1.0 : (x == y ? 0.5 : 0.0);
  return u;
}

inline double tss_at(const std::vector<double>& s, const std::vector<double>& y, double t) {
  double tp = 0, fn = 0, tn = 0, fp = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool pred = s[i] >= t;
    if (y[i] == 1.0) (pred ? tp : fn) += 1;
    else (pred ? fp : tn) += 1;
  }
  return tp / (tp + fn) + tn / (tn + fp) - 1.0;
}

// Coalition value: mean prediction with features outside `mask` taken from
// each background row. Column `out` of the model output.
using Model = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;

inline std::vector<double> coalition_values(const Model& f, const Eigen::RowVectorXd& x,
                                            const Eigen::MatrixXd& background, int out) {
  const int p = static_cast<int>(x.size());
  std::vector<double> v(std::size_t{1} << p);
  for (std::size_t mask = 0; mask < v.size(); ++mask) {
    Eigen::MatrixXd rows = background;
    for (int k = 0; k < p; ++k)
      if (mask & (std::size_t{1} << k)) rows.col(k).setConstant(x(k));
    v[mask] = f(rows).col(out).mean();
  }
  return v;
}

// Shapley values from the permutation definition: average marginal
// contribution over all p! orderings.
inline Eigen::VectorXd permutation_shapley(const Model& f, const Eigen::RowVectorXd& x,
                                           const Eigen::MatrixXd& background, int out) {
  const int p = static_cast<int>(x.size());
  const auto v = coalition_values(f, x, background, out);
  std::vector<int> order(static_cast<std::size_t>(p));
  std::iota(order.begin(), order.end(), 0);
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(p);
  double count = 0.0;
  do {
    std::size_t mask = 0;
    for (int k : order) {
      const std::size_t next = mask | (std::size_t{1} << k);
      phi(k) += v[next] - v[mask];
      mask = next;
    }
    count += 1.0;
  } while (std::next_permutation(order.begin(), order.end()));
  return phi / count;
}

struct BruteMerge {
  std::set<int> left, right;  // leaf sets of the merged clusters
  double height = 0.0;        // sqrt(2 * increase in within-cluster SS)
};

// Agglomerative Ward clustering recomputing every pairwise SS increase from
// centroids at each step.
inline std::vector<BruteMerge> brute_force_ward(const Eigen::MatrixXd& x) {
  std::vector<std::set<int>> clusters;
  for (int i = 0; i < x.rows(); ++i) clusters.push_back({i});
  auto centroid = [&](const std::set<int>& c) {
    Eigen::RowVectorXd m = Eigen::RowVectorXd::Zero(x.cols());
    for (int i : c) m += x.row(i);
    return Eigen::RowVectorXd(m / static_cast<double>(c.size()));
  };
  std::vector<BruteMerge> merges;
  while (clusters.size() > 1) {
    double best = INFINITY;
    std::size_t ba = 0, bb = 0;
    for (std::size_t a = 0; a < clusters.size(); ++a) {
      for (std::size_t b = a + 1; b < clusters.size(); ++b) {
        const double na = static_cast<double>(clusters[a].size()), nb = static_cast<double>(clusters[b].size());
        const double inc = na * nb / (na + nb) * (centroid(clusters[a]) - centroid(clusters[b])).squaredNorm();
        if (inc < best) {
          best = inc;
          ba = a;
          bb = b;
        }
      }
    }
    merges.push_back({clusters[ba], clusters[bb], std::sqrt(2.0 * best)});
    clusters[ba].insert(clusters[bb].begin(), clusters[bb].end());
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bb));
  }
  return merges;
}

// Leaf set of a scipy-style cluster id given the merge list (a, b pairs).
inline std::set<int> leaves(int id, int n, const std::vector<std::pair<int, int>>& merges) {
  if (id < n) return {id};
  const auto& m = merges[static_cast<std::size_t>(id - n)];
  auto s = leaves(m.first, n, merges);
  const auto t = leaves(m.second, n, merges);
  s.insert(t.begin(), t.end());
  return s;
}

}  // namespace oracle
