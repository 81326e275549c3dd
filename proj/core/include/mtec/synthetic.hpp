#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "mtec/data.hpp"
#include "mtec/model.hpp"

namespace mtec::synthetic {

// Ground truth for data drawn from the MTEC generative model with a linear
// environmental embedding: eta = c + E_std * B_true + H * A_true.
struct GenerativeTruth {
  Eigen::MatrixXd response;   // P x M
  Eigen::MatrixXd loadings;   // L x M
  Eigen::VectorXd intercepts; // M
  Eigen::MatrixXd latent;     // N x L
  Eigen::MatrixXd probabilities;
};

struct GeneratorOptions {
  int n_sites = 500;
  int n_species = 20;
  int n_covariates = 5;
  int latent_dim = 3;
  double response_scale = 1.0;
  double loading_scale = 0.5;
  // Target prevalences; empty draws intercepts uniformly from [-1, 0.5].
  std::vector<double> prevalences;
  // Number of shared environmental directions (0 = independent responses).
  int shared_directions = 0;
  Link link = Link::probit;
  std::uint64_t seed = 1;
};

struct GeneratedData {
  data::Dataset dataset;
  GenerativeTruth truth;
};

// Numerical covariates only; species named sp01.., covariates x1...
GeneratedData generate(const GeneratorOptions& options);

}  // namespace mtec::synthetic
