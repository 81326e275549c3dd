#include "mtec/groups.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mtec/error.hpp"
#include "mtec/random.hpp"

namespace mtec::groups {

std::vector<int> MergeTree::cut(int k) const {
  if (k < 1 || k > n_leaves) throw ConfigError("cut: k must be in [1, n]");
  // Union-find over leaves and internal ids.
  std::vector<int> parent(static_cast<std::size_t>(2 * n_leaves), 0);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int v) {
    while (parent[static_cast<std::size_t>(v)] != v) v = parent[static_cast<std::size_t>(v)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(v)])];
    return v;
  };
  const int applied = n_leaves - k;
  for (int t = 0; t < applied; ++t) {
    const int id = n_leaves + t;
    parent[static_cast<std::size_t>(find(merges[static_cast<std::size_t>(t)].a))] = id;
    parent[static_cast<std::size_t>(find(merges[static_cast<std::size_t>(t)].b))] = id;
  }
  std::vector<int> labels(static_cast<std::size_t>(n_leaves));
  std::vector<std::pair<int, int>> seen;  // root -> label
  for (int i = 0; i < n_leaves; ++i) {
    const int root = find(i);
    auto it = std::find_if(seen.begin(), seen.end(), [&](const auto& p) { return p.first == root; });
    if (it == seen.end()) {
      seen.emplace_back(root, static_cast<int>(seen.size()) + 1);
      labels[static_cast<std::size_t>(i)] = static_cast<int>(seen.size());
    } else {
      labels[static_cast<std::size_t>(i)] = it->second;
    }
  }
  return labels;
}

MergeTree ward_cluster(const Eigen::MatrixXd& rows) {
  const Eigen::Index n = rows.rows();
  if (n < 2) throw ConfigError("ward_cluster: need at least 2 rows");
  Eigen::MatrixXd d(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) d(i, j) = (rows.row(i) - rows.row(j)).squaredNorm();

  std::vector<bool> active(static_cast<std::size_t>(n), true);
  std::vector<int> size(static_cast<std::size_t>(n), 1);
  std::vector<int> id(static_cast<std::size_t>(n));
  std::iota(id.begin(), id.end(), 0);

  MergeTree tree;
  tree.n_leaves = static_cast<int>(n);
  for (Eigen::Index step = 0; step < n - 1; ++step) {
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index bi = -1, bj = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!active[static_cast<std::size_t>(i)]) continue;
      for (Eigen::Index j = i + 1; j < n; ++j) {
        if (!active[static_cast<std::size_t>(j)]) continue;
        if (d(i, j) < best) {
          best = d(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    const int ni = size[static_cast<std::size_t>(bi)], nj = size[static_cast<std::size_t>(bj)];
    Merge mg;
    mg.a = std::min(id[static_cast<std::size_t>(bi)], id[static_cast<std::size_t>(bj)]);
    mg.b = std::max(id[static_cast<std::size_t>(bi)], id[static_cast<std::size_t>(bj)]);
    mg.height = std::sqrt(std::max(0.0, best));
    mg.size = ni + nj;
    tree.merges.push_back(mg);

    for (Eigen::Index k = 0; k < n; ++k) {
      if (!active[static_cast<std::size_t>(k)] || k == bi || k == bj) continue;
      const double nk = size[static_cast<std::size_t>(k)];
      const double upd = ((ni + nk) * d(k, bi) + (nj + nk) * d(k, bj) - nk * d(bi, bj)) / (ni + nj + nk);
      d(k, bi) = d(bi, k) = upd;
    }
    active[static_cast<std::size_t>(bj)] = false;
    size[static_cast<std::size_t>(bi)] = ni + nj;
    id[static_cast<std::size_t>(bi)] = static_cast<int>(n + step);
  }
  return tree;
}

double within_cluster_ss(const Eigen::MatrixXd& rows, const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != rows.rows()) throw ShapeError("within_cluster_ss: one label per row");
  const int k = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
  Eigen::MatrixXd centroids = Eigen::MatrixXd::Zero(k, rows.cols());
  std::vector<int> count(static_cast<std::size_t>(k), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    centroids.row(labels[i] - 1) += rows.row(static_cast<Eigen::Index>(i));
    ++count[static_cast<std::size_t>(labels[i] - 1)];
  }
  for (int c = 0; c < k; ++c)
    if (count[static_cast<std::size_t>(c)] > 0) centroids.row(c) /= count[static_cast<std::size_t>(c)];
  double w = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    w += (rows.row(static_cast<Eigen::Index>(i)) - centroids.row(labels[i] - 1)).squaredNorm();
  }
  return w;
}

namespace {

std::vector<double> wss_curve(const Eigen::MatrixXd& rows, int k_max) {
  const MergeTree tree = ward_cluster(rows);
  std::vector<double> w;
  for (int k = 1; k <= k_max; ++k) w.push_back(within_cluster_ss(rows, tree.cut(k)));
  return w;
}

void check_k_max(const Eigen::MatrixXd& rows, int k_max) {
  if (k_max < 1) throw ConfigError("k_max must be >= 1");
  if (k_max >= rows.rows()) {
    throw ConfigError("k_max (" + std::to_string(k_max) + ") must be below the number of rows (" +
                      std::to_string(rows.rows()) + ")");
  }
}

}  // namespace

GapResult gap_statistic(const Eigen::MatrixXd& rows, int k_max, int n_references, std::uint64_t seed) {
  check_k_max(rows, k_max);
  if (n_references < 10) throw ConfigError("gap_statistic: need at least 10 reference datasets");
  GapResult out;
  const auto wk = wss_curve(rows, k_max);
  if (!(wk[0] > 0.0)) {
    // All rows identical: no structure.
    out.log_wk.assign(static_cast<std::size_t>(k_max), -std::numeric_limits<double>::infinity());
    out.ref_log_wk.assign(static_cast<std::size_t>(k_max), 0.0);
    out.gap.assign(static_cast<std::size_t>(k_max), 0.0);
    out.s_k.assign(static_cast<std::size_t>(k_max), 0.0);
    out.chosen_k = 1;
    return out;
  }
  const double floor = wk[0] * 1e-12;
  for (double w : wk) out.log_wk.push_back(std::log(std::max(w, floor)));

  // PCA-aligned bounding box of the data.
  const Eigen::RowVectorXd mean = rows.colwise().mean();
  const Eigen::MatrixXd centered = rows.rowwise() - mean;
  const Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::MatrixXd v = svd.matrixV();
  const Eigen::MatrixXd rotated = centered * v;
  const Eigen::RowVectorXd lo = rotated.colwise().minCoeff();
  const Eigen::RowVectorXd hi = rotated.colwise().maxCoeff();

  Rng root(seed);
  std::vector<std::vector<double>> ref(static_cast<std::size_t>(k_max));
  for (int b = 0; b < n_references; ++b) {
    Rng rng = root.split(static_cast<std::uint64_t>(b));
    Eigen::MatrixXd z(rows.rows(), rotated.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i)
      for (Eigen::Index c = 0; c < z.cols(); ++c) z(i, c) = rng.uniform(lo(c), hi(c));
    const Eigen::MatrixXd sample = (z * v.transpose()).rowwise() + mean;
    const auto w = wss_curve(sample, k_max);
    for (int k = 0; k < k_max; ++k) ref[static_cast<std::size_t>(k)].push_back(std::log(std::max(w[static_cast<std::size_t>(k)], floor)));
  }
  for (int k = 0; k < k_max; ++k) {
    const auto& r = ref[static_cast<std::size_t>(k)];
    const double m = std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
    double ss = 0.0;
    for (double x : r) ss += (x - m) * (x - m);
    const double sd = std::sqrt(ss / static_cast<double>(r.size()));
    out.ref_log_wk.push_back(m);
    out.gap.push_back(m - out.log_wk[static_cast<std::size_t>(k)]);
    out.s_k.push_back(sd * std::sqrt(1.0 + 1.0 / n_references));
  }
  out.chosen_k = k_max;
  for (int k = 0; k + 1 < k_max; ++k) {
    if (out.gap[static_cast<std::size_t>(k)] >= out.gap[static_cast<std::size_t>(k + 1)] - out.s_k[static_cast<std::size_t>(k + 1)]) {
      out.chosen_k = k + 1;
      break;
    }
  }
  return out;
}

WssResult wss_elbow(const Eigen::MatrixXd& rows, int k_max) {
  check_k_max(rows, k_max);
  WssResult out;
  out.wss = wss_curve(rows, k_max);
  if (k_max < 3) return out;
  double best = -std::numeric_limits<double>::infinity();
  int arg = 0;
  for (int k = 2; k < k_max; ++k) {
    const double d2 = out.wss[static_cast<std::size_t>(k - 2)] - 2.0 * out.wss[static_cast<std::size_t>(k - 1)] +
                      out.wss[static_cast<std::size_t>(k)];
    if (d2 > best) {
      best = d2;
      arg = k;
    }
  }
  // Flat curve: no elbow.
  if (!(out.wss[0] > 0.0) || best <= 1e-9 * out.wss[0]) return out;
  out.elbow = arg;
  return out;
}

PcaResult pca_project(const Eigen::MatrixXd& rows, int n_components) {
  const Eigen::Index n = rows.rows(), p = rows.cols();
  if (n_components < 1 || n_components > std::min(n, p)) {
    throw ConfigError("pca_project: n_components must be in [1, min(rows, cols)]");
  }
  const Eigen::MatrixXd centered = rows.rowwise() - rows.colwise().mean();
  const Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::VectorXd sv = svd.singularValues();
  const double total = sv.squaredNorm();
  PcaResult out;
  out.loadings = svd.matrixV().leftCols(n_components);
  out.explained = Eigen::VectorXd::Zero(n_components);
  for (int c = 0; c < n_components; ++c) {
    if (c < sv.size() && total > 0.0) out.explained(c) = sv(c) * sv(c) / total;
    Eigen::Index arg;
    out.loadings.col(c).cwiseAbs().maxCoeff(&arg);
    if (out.loadings(arg, c) < 0) out.loadings.col(c) *= -1.0;
  }
  out.scores = centered * out.loadings;
  return out;
}

ResponseMatrix response_matrix(const explain::ShapAttribution& attr, const std::string& group) {
  ResponseMatrix rm;
  std::vector<int> members;
  for (int p = 0; p < attr.n_features(); ++p) {
    const auto& name = attr.feature_names.at(static_cast<std::size_t>(p));
    const auto it = attr.feature_groups.find(name);
    if (it != attr.feature_groups.end() && it->second == group) {
      members.push_back(p);
      rm.features.push_back(name);
    }
  }
  if (members.empty()) throw ConfigError("feature group '" + group + "' has no features");
  rm.species = attr.species_names;
  const auto nf = static_cast<Eigen::Index>(members.size());
  rm.values.resize(attr.n_species(), attr.n_sites() * nf);
  for (int s = 0; s < attr.n_species(); ++s)
    for (int i = 0; i < attr.n_sites(); ++i)
      for (Eigen::Index f = 0; f < nf; ++f) rm.values(s, i * nf + f) = attr(s, i, members[static_cast<std::size_t>(f)]);
  return rm;
}

ClusterResult build_response_groups(const explain::ShapAttribution& attr, const std::string& group,
                                    const ClusterOptions& options) {
  ResponseMatrix rm = response_matrix(attr, group);
  if (rm.values.rows() < 2) throw ConfigError("clustering needs at least 2 species");
  if (options.standardize) {
    for (Eigen::Index c = 0; c < rm.values.cols(); ++c) {
      auto col = rm.values.col(c);
      const double m = col.mean();
      const double sd = std::sqrt((col.array() - m).square().mean());
      col.array() -= m;
      if (sd > 0.0) col /= sd;
    }
  }
  const int k_max = std::min<int>(options.k_max, static_cast<int>(rm.values.rows()) - 1);

  ClusterResult out;
  out.group = group;
  out.species = rm.species;
  out.merge_tree = ward_cluster(rm.values);
  out.gap = gap_statistic(rm.values, k_max, options.n_references, options.seed);
  out.wss = wss_elbow(rm.values, k_max);
  out.gap_k = out.gap.chosen_k;
  out.elbow_k = out.wss.elbow;
  out.k = out.gap_k;
  if (options.consensus && out.elbow_k && *out.elbow_k != out.gap_k) {
    out.k = static_cast<int>(std::lround(0.5 * (out.gap_k + *out.elbow_k)));
  }
  out.labels = out.merge_tree.cut(out.k);

  // Species x mean SHAP per feature for the ordination.
  const auto nf = static_cast<Eigen::Index>(rm.features.size());
  Eigen::MatrixXd means = Eigen::MatrixXd::Zero(rm.values.rows(), nf);
  const Eigen::Index sites = rm.values.cols() / nf;
  for (Eigen::Index i = 0; i < sites; ++i) means += rm.values.middleCols(i * nf, nf);
  if (sites > 0) means /= static_cast<double>(sites);
  const int comps = std::min<int>(options.pca_components, static_cast<int>(std::min(means.rows(), means.cols())));
  out.pca = pca_project(means, comps);
  return out;
}

nlohmann::json ClusterResult::to_json() const {
  nlohmann::json j;
  j["group"] = group;
  j["k"] = k;
  j["gap_k"] = gap_k;
  j["elbow_k"] = elbow_k ? nlohmann::json(*elbow_k) : nlohmann::json(nullptr);
  nlohmann::json lab = nlohmann::json::object();
  for (std::size_t i = 0; i < species.size(); ++i) lab[species[i]] = labels[i];
  j["labels"] = lab;
  nlohmann::json merges = nlohmann::json::array();
  for (const auto& m : merge_tree.merges) merges.push_back({m.a, m.b, m.height, m.size});
  j["merge_tree"] = merges;
  auto finite = [](const std::vector<double>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (double x : v) a.push_back(std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr));
    return a;
  };
  j["gap_curve"] = {{"log_wk", finite(gap.log_wk)}, {"ref_log_wk", finite(gap.ref_log_wk)},
                    {"gap", finite(gap.gap)}, {"s_k", finite(gap.s_k)}};
  j["wss_curve"] = finite(wss.wss);
  nlohmann::json scores = nlohmann::json::object();
  for (std::size_t i = 0; i < species.size(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(pca.scores.cols()));
    for (Eigen::Index c = 0; c < pca.scores.cols(); ++c) r[static_cast<std::size_t>(c)] = pca.scores(static_cast<Eigen::Index>(i), c);
    scores[species[i]] = r;
  }
  j["pca"] = {{"scores", scores},
              {"explained_variance", std::vector<double>(pca.explained.data(), pca.explained.data() + pca.explained.size())}};
  return j;
}

}  // namespace mtec::groups
