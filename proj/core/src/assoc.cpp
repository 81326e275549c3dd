#include "mtec/assoc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mtec/error.hpp"

namespace mtec::assoc {

PosteriorStats posterior_stats(const VariationalPosterior& q) {
  if (q.mean.rows() != q.variance.rows() || q.mean.cols() != q.variance.cols()) {
    throw ShapeError("posterior_stats: mean and variance shapes differ");
  }
  if (q.mean.rows() == 0) throw ShapeError("posterior_stats: no sites");
  PosteriorStats out;
  out.means = q.mean;
  out.accumulated = q.variance.colwise().sum().transpose().asDiagonal();
  out.latent_cov = (q.mean.transpose() * q.mean + out.accumulated) / static_cast<double>(q.mean.rows());
  return out;
}

PosteriorStats posterior_stats(const MtecModel& model, const Eigen::MatrixXd& community) {
  return posterior_stats(model.encode_posterior(community));
}

Eigen::MatrixXd residual_covariance(const PosteriorStats& stats, const Eigen::MatrixXd& loadings) {
  if (loadings.rows() != stats.latent_cov.rows()) {
    throw ShapeError("residual_covariance: loadings must have one row per latent dimension");
  }
  Eigen::MatrixXd s = loadings.transpose() * stats.latent_cov * loadings;
  return 0.5 * (s + s.transpose());
}

namespace {

double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

// Removes index j from a vector or both axes of a square matrix.
Eigen::VectorXd drop(const Eigen::VectorXd& v, Eigen::Index j) {
  Eigen::VectorXd out(v.size() - 1);
  out << v.head(j), v.tail(v.size() - j - 1);
  return out;
}

Eigen::MatrixXd drop(const Eigen::MatrixXd& m, Eigen::Index j) {
  const Eigen::Index p = m.rows();
  Eigen::MatrixXd out(p - 1, p - 1);
  for (Eigen::Index r = 0, rr = 0; r < p; ++r) {
    if (r == j) continue;
    for (Eigen::Index c = 0, cc = 0; c < p; ++c) {
      if (c == j) continue;
      out(rr, cc++) = m(r, c);
    }
    ++rr;
  }
  return out;
}

// min 0.5 b'Vb - s'b + lambda |b|_1 by cyclic coordinate descent.
void lasso_cd(const Eigen::MatrixXd& v, const Eigen::VectorXd& s, double lambda, Eigen::VectorXd& beta,
              const GlassoOptions& options) {
  for (int it = 0; it < options.lasso_max_iter; ++it) {
    double delta = 0.0;
    for (Eigen::Index k = 0; k < beta.size(); ++k) {
      const double partial = s(k) - v.row(k).dot(beta) + v(k, k) * beta(k);
      const double next = soft_threshold(partial, lambda) / v(k, k);
      delta = std::max(delta, std::abs(next - beta(k)));
      beta(k) = next;
    }
    if (delta < options.lasso_tol) return;
  }
}

double mean_abs_offdiag(const Eigen::MatrixXd& m) {
  const Eigen::Index p = m.rows();
  if (p < 2) return 0.0;
  const double total = m.cwiseAbs().sum() - m.diagonal().cwiseAbs().sum();
  return total / static_cast<double>(p * (p - 1));
}

}  // namespace

GlassoResult graphical_lasso(const Eigen::MatrixXd& sigma, const GlassoOptions& options) {
  const Eigen::Index p = sigma.rows();
  if (p == 0 || sigma.cols() != p) throw ShapeError("graphical_lasso: input must be square and non-empty");
  if (!sigma.allFinite()) throw ValidationError("graphical_lasso: input has non-finite entries");
  if (!(options.lambda >= 0.0)) throw ConfigError("graphical_lasso: lambda must be >= 0");

  GlassoResult out;
  Eigen::MatrixXd s = 0.5 * (sigma + sigma.transpose());
  if (Eigen::LLT<Eigen::MatrixXd>(s).info() != Eigen::Success) {
    s.diagonal().array() += 1e-6;
    out.ridged = true;
  }
  if ((s.diagonal().array() <= 0.0).any()) throw ValidationError("graphical_lasso: non-positive variance");

  Eigen::MatrixXd w = s;
  Eigen::MatrixXd betas = Eigen::MatrixXd::Zero(std::max<Eigen::Index>(p - 1, 0), p);
  if (p == 1) {
    out.covariance = w;
    out.precision = w.cwiseInverse();
    out.converged = true;
    return out;
  }

  for (int it = 0; it < options.max_iter; ++it) {
    const Eigen::MatrixXd previous = w;
    for (Eigen::Index j = 0; j < p; ++j) {
      const Eigen::MatrixXd w11 = drop(w, j);
      const Eigen::VectorXd s12 = drop(Eigen::VectorXd(s.col(j)), j);
      Eigen::VectorXd beta = betas.col(j);
      lasso_cd(w11, s12, options.lambda, beta, options);
      betas.col(j) = beta;
      const Eigen::VectorXd w12 = w11 * beta;
      for (Eigen::Index k = 0, kk = 0; k < p; ++k) {
        if (k == j) continue;
        w(k, j) = w(j, k) = w12(kk++);
      }
    }
    out.iterations = it + 1;
    if (mean_abs_offdiag(w - previous) < options.tol) {
      out.converged = true;
      break;
    }
  }

  Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const Eigen::VectorXd beta = betas.col(j);
    const Eigen::VectorXd w12 = drop(Eigen::VectorXd(w.col(j)), j);
    const double o22 = 1.0 / (w(j, j) - w12.dot(beta));
    omega(j, j) = o22;
    for (Eigen::Index k = 0, kk = 0; k < p; ++k) {
      if (k == j) continue;
      omega(k, j) = -beta(kk++) * o22;
    }
  }
  out.precision = 0.5 * (omega + omega.transpose());
  out.covariance = w;
  return out;
}

Eigen::MatrixXd constrained_mle(const Eigen::MatrixXd& sigma, const Eigen::MatrixXd& pattern,
                                const GlassoOptions& options) {
  const Eigen::Index p = sigma.rows();
  if (sigma.cols() != p || pattern.rows() != p || pattern.cols() != p) {
    throw ShapeError("constrained_mle: shapes differ");
  }
  const Eigen::MatrixXd s = 0.5 * (sigma + sigma.transpose());
  Eigen::MatrixXd w = s;
  for (int it = 0; it < options.max_iter; ++it) {
    const Eigen::MatrixXd previous = w;
    for (Eigen::Index j = 0; j < p; ++j) {
      std::vector<Eigen::Index> support;
      for (Eigen::Index k = 0; k < p; ++k) {
        if (k != j && (pattern(k, j) != 0.0 || pattern(j, k) != 0.0)) support.push_back(k);
      }
      const auto q = static_cast<Eigen::Index>(support.size());
      Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
      if (q > 0) {
        Eigen::MatrixXd a(q, q);
        Eigen::VectorXd b(q);
        for (Eigen::Index u = 0; u < q; ++u) {
          b(u) = s(support[u], j);
          for (Eigen::Index v = 0; v < q; ++v) a(u, v) = w(support[u], support[v]);
        }
        const Eigen::VectorXd x = a.ldlt().solve(b);
        for (Eigen::Index u = 0; u < q; ++u) beta(support[u]) = x(u);
      }
      const Eigen::VectorXd w12 = w * beta;
      for (Eigen::Index k = 0; k < p; ++k) {
        if (k != j) w(k, j) = w(j, k) = w12(k);
      }
    }
    if (mean_abs_offdiag(w - previous) < options.tol) break;
  }
  Eigen::MatrixXd omega = w.inverse();
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      if (i != j && pattern(i, j) == 0.0 && pattern(j, i) == 0.0) omega(i, j) = 0.0;
    }
  }
  return 0.5 * (omega + omega.transpose());
}

PartialCorrelations partial_correlations(const Eigen::MatrixXd& omega) {
  const Eigen::Index p = omega.rows();
  if (omega.cols() != p) throw ShapeError("partial_correlations: precision must be square");
  if ((omega.diagonal().array() <= 0.0).any()) throw ValidationError("partial_correlations: non-positive diagonal");
  PartialCorrelations out;
  out.rho = Eigen::MatrixXd::Identity(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = i + 1; j < p; ++j) {
      const double r = -omega(i, j) / std::sqrt(omega(i, i) * omega(j, j));
      out.rho(i, j) = out.rho(j, i) = r;
      if (omega(i, j) != 0.0) out.edges.push_back({static_cast<int>(i), static_cast<int>(j), r});
    }
  }
  const double pairs = static_cast<double>(p) * static_cast<double>(p - 1) / 2.0;
  out.density = pairs > 0 ? static_cast<double>(out.edges.size()) / pairs : 0.0;
  return out;
}

double extended_bic(const Eigen::MatrixXd& sample_cov, const Eigen::MatrixXd& omega, std::size_t n_edges,
                    double sample_size, double gamma) {
  if (sample_cov.rows() != omega.rows() || sample_cov.cols() != omega.cols()) {
    throw ShapeError("extended_bic: shapes differ");
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(omega);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double e = static_cast<double>(n_edges);
  const double p = static_cast<double>(omega.rows());
  return sample_size * ((sample_cov * omega).trace() - log_det) + e * std::log(sample_size) +
         4.0 * gamma * e * std::log(p);
}

int connected_components(int n_nodes, const std::vector<Edge>& edges) {
  std::vector<int> parent(static_cast<std::size_t>(n_nodes));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int v) {
    while (parent[static_cast<std::size_t>(v)] != v) v = parent[static_cast<std::size_t>(v)];
    return v;
  };
  int count = n_nodes;
  for (const auto& e : edges) {
    const int a = find(e.i), b = find(e.j);
    if (a != b) {
      parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
      --count;
    }
  }
  return count;
}

AssociationNetwork build_network(const Eigen::MatrixXd& sigma_r, const std::vector<double>& lambdas,
                                 double sample_size, const GlassoOptions& base) {
  if (lambdas.empty()) throw ConfigError("build_network: at least one lambda is required");
  for (double l : lambdas) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("build_network: lambda values must be finite and >= 0");
  }
  AssociationNetwork net;
  net.sigma_r = sigma_r;
  auto run = [&](double lambda) {
    GlassoOptions o = base;
    o.lambda = lambda;
    return graphical_lasso(sigma_r, o);
  };
  if (lambdas.size() == 1) {
    net.lambda = lambdas.front();
    net.glasso = run(net.lambda);
  } else {
    if (!(sample_size > 1.0)) throw ConfigError("build_network: EBIC needs a sample size above 1");
    net.lambda_grid = lambdas;
    double best = std::numeric_limits<double>::infinity();
    for (double l : lambdas) {
      GlassoResult g = run(l);
      const auto pc = partial_correlations(g.precision);
      const double score =
          extended_bic(sigma_r, constrained_mle(sigma_r, g.precision, base), pc.edges.size(), sample_size);
      net.ebic.push_back(score);
      if (score < best || net.glasso.precision.size() == 0) {
        best = score;
        net.lambda = l;
        net.glasso = std::move(g);
      }
    }
  }
  net.partial = partial_correlations(net.glasso.precision);
  net.n_components = connected_components(static_cast<int>(sigma_r.rows()), net.partial.edges);
  return net;
}

nlohmann::json AssociationNetwork::summary_json(const std::vector<std::string>& species) const {
  if (static_cast<Eigen::Index>(species.size()) != sigma_r.rows()) {
    throw ShapeError("summary_json: one name per species required");
  }
  nlohmann::json j;
  j["lambda"] = lambda;
  j["n_species"] = species.size();
  j["n_edges"] = partial.edges.size();
  j["density"] = partial.density;
  j["n_components"] = n_components;
  j["iterations"] = glasso.iterations;
  j["converged"] = glasso.converged;
  j["ridged"] = glasso.ridged;
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : partial.edges) {
    edges.push_back({{"a", species[static_cast<std::size_t>(e.i)]},
                     {"b", species[static_cast<std::size_t>(e.j)]},
                     {"partial_correlation", e.strength}});
  }
  j["edges"] = edges;
  if (!lambda_grid.empty()) {
    nlohmann::json grid = nlohmann::json::array();
    for (std::size_t k = 0; k < lambda_grid.size(); ++k) {
      grid.push_back({{"lambda", lambda_grid[k]},
                      {"ebic", std::isfinite(ebic[k]) ? nlohmann::json(ebic[k]) : nlohmann::json(nullptr)}});
    }
    j["ebic_grid"] = grid;
  }
  return j;
}

}  // namespace mtec::assoc
