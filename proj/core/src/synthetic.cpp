#include "mtec/synthetic.hpp"

#include <cmath>
#include <string>

#include "mtec/error.hpp"
#include "mtec/random.hpp"

namespace mtec::synthetic {

namespace {

Eigen::MatrixXd normal_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

std::string numbered(const char* prefix, int index, int width) {
  std::string digits = std::to_string(index);
  if (static_cast<int>(digits.size()) < width) digits.insert(0, width - digits.size(), '0');
  return prefix + digits;
}

// Intercept giving the requested mean occurrence probability over the sites.
double solve_intercept(const Eigen::VectorXd& linear, double prevalence, Link link) {
  double lo = -30.0, hi = 30.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    double mean = 0.0;
    for (Eigen::Index i = 0; i < linear.size(); ++i) mean += inverse_link(link, mid + linear(i));
    mean /= static_cast<double>(linear.size());
    (mean < prevalence ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

GeneratedData generate(const GeneratorOptions& options) {
  const int n = options.n_sites, m = options.n_species, p = options.n_covariates, l = options.latent_dim;
  if (n < 2 || m < 1 || p < 1 || l < 0) throw ConfigError("generate: invalid dimensions");
  if (!options.prevalences.empty() && static_cast<int>(options.prevalences.size()) != m) {
    throw ConfigError("generate: one prevalence per species required");
  }
  for (double q : options.prevalences) {
    if (!(q > 0.0 && q < 1.0)) throw ConfigError("generate: prevalences must lie in (0, 1)");
  }
  if (options.shared_directions < 0) throw ConfigError("generate: shared_directions must be >= 0");

  Rng root(options.seed);
  Rng cov_rng = root.split(1), resp_rng = root.split(2), load_rng = root.split(3), lat_rng = root.split(4),
      icpt_rng = root.split(5), obs_rng = root.split(6);

  // Raw covariates on varied scales; the truth acts on their standardized form.
  Eigen::MatrixXd raw = normal_matrix(cov_rng, n, p);
  for (int c = 0; c < p; ++c) raw.col(c) = raw.col(c) * (1.0 + 0.5 * c) + Eigen::VectorXd::Constant(n, 2.0 * c);
  Eigen::MatrixXd e_std = raw.rowwise() - raw.colwise().mean();
  for (int c = 0; c < p; ++c) {
    const double sd = std::sqrt(e_std.col(c).squaredNorm() / n);
    e_std.col(c) /= sd;
  }

  GeneratedData out;
  auto& truth = out.truth;
  if (options.shared_directions > 0) {
    const Eigen::MatrixXd dirs = normal_matrix(resp_rng, p, options.shared_directions);
    truth.response = dirs * normal_matrix(resp_rng, options.shared_directions, m);
  } else {
    truth.response = normal_matrix(resp_rng, p, m);
  }
  for (int j = 0; j < m; ++j) {
    const double norm = truth.response.col(j).norm();
    if (norm > 0.0) truth.response.col(j) *= options.response_scale / norm;
  }
  truth.loadings = normal_matrix(load_rng, l, m) * options.loading_scale;
  truth.latent = normal_matrix(lat_rng, n, l);

  const Eigen::MatrixXd linear = e_std * truth.response + truth.latent * truth.loadings;
  truth.intercepts.resize(m);
  for (int j = 0; j < m; ++j) {
    truth.intercepts(j) = options.prevalences.empty()
                              ? icpt_rng.uniform(-1.0, 0.5)
                              : solve_intercept(linear.col(j), options.prevalences[static_cast<std::size_t>(j)], options.link);
  }
  truth.probabilities = (linear.rowwise() + truth.intercepts.transpose())
                            .unaryExpr([&](double eta) { return inverse_link(options.link, eta); });

  auto& d = out.dataset;
  d.covariates = raw;
  d.community.resize(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) d.community(i, j) = obs_rng.bernoulli(truth.probabilities(i, j)) ? 1.0 : 0.0;
  const int site_width = std::max(4, static_cast<int>(std::to_string(n).size()));
  const int sp_width = std::max(2, static_cast<int>(std::to_string(m).size()));
  for (int i = 0; i < n; ++i) d.site_ids.push_back(numbered("s", i + 1, site_width));
  for (int j = 0; j < m; ++j) d.species_names.push_back(numbered("sp", j + 1, sp_width));
  std::vector<data::FeatureColumn> cols;
  for (int c = 0; c < p; ++c) cols.push_back({"x" + std::to_string(c + 1), data::FeatureKind::numerical, {}, ""});
  d.schema = data::FeatureSchema(std::move(cols));
  return out;
}

}  // namespace mtec::synthetic
