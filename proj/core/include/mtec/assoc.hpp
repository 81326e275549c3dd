#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <string>
#include <vector>

#include "mtec/model.hpp"

namespace mtec::assoc {

struct PosteriorStats {
  Eigen::MatrixXd means;          // U, N x L
  Eigen::MatrixXd accumulated;    // S = sum_s diag(var_s), L x L
  Eigen::MatrixXd latent_cov;     // (U'U + S) / N
};

// Posterior statistics from the recognition network on a community matrix.
PosteriorStats posterior_stats(const MtecModel& model, const Eigen::MatrixXd& community);
PosteriorStats posterior_stats(const VariationalPosterior& q);

// Species x species covariance A' Sigma A (A is L x M).
Eigen::MatrixXd residual_covariance(const PosteriorStats& stats, const Eigen::MatrixXd& loadings);

struct GlassoOptions {
  double lambda = 0.01;
  int max_iter = 500;
  double tol = 1e-6;
  int lasso_max_iter = 1000;
  double lasso_tol = 1e-10;
};

struct GlassoResult {
  Eigen::MatrixXd precision;   // Omega
  Eigen::MatrixXd covariance;  // W, the fitted covariance
  int iterations = 0;
  bool converged = false;
  bool ridged = false;  // diagonal +1e-6 because input was not positive definite
};

// Block coordinate descent graphical lasso. Off-diagonal entries are
// penalized, the diagonal is not, so a diagonal input gives diag(1/s_ii).
GlassoResult graphical_lasso(const Eigen::MatrixXd& sigma, const GlassoOptions& options = {});

// Maximum-likelihood precision whose off-diagonal zeros are those of
// `pattern`. Used to score a glasso support without the shrinkage bias.
Eigen::MatrixXd constrained_mle(const Eigen::MatrixXd& sigma, const Eigen::MatrixXd& pattern,
                                const GlassoOptions& options = {});

struct Edge {
  int i = 0;
  int j = 0;
  double strength = 0.0;  // partial correlation
};

struct PartialCorrelations {
  Eigen::MatrixXd rho;  // unit diagonal
  std::vector<Edge> edges;
  double density = 0.0;
};

// rho_ij = -w_ij / sqrt(w_ii w_jj); edges are the non-zero off-diagonals.
PartialCorrelations partial_correlations(const Eigen::MatrixXd& omega);

// Extended BIC: n * (tr(S Omega) - log det Omega) + |E| log n + 4 gamma |E| log p.
double extended_bic(const Eigen::MatrixXd& sample_cov, const Eigen::MatrixXd& omega,
                    std::size_t n_edges, double sample_size, double gamma = 0.5);

struct AssociationNetwork {
  Eigen::MatrixXd sigma_r;
  GlassoResult glasso;
  PartialCorrelations partial;
  double lambda = 0.0;
  int n_components = 0;  // connected components of the edge graph
  std::vector<double> lambda_grid;
  std::vector<double> ebic;  // per grid value, empty for a fixed lambda

  nlohmann::json summary_json(const std::vector<std::string>& species) const;
};

int connected_components(int n_nodes, const std::vector<Edge>& edges);

// Runs glasso at a fixed lambda, or over a grid picking the minimum EBIC
// with the given sample size. Each grid support is scored by its
// constrained_mle refit.
AssociationNetwork build_network(const Eigen::MatrixXd& sigma_r, const std::vector<double>& lambdas,
                                 double sample_size, const GlassoOptions& base = {});

}  // namespace mtec::assoc
