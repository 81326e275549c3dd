#pragma once

#include <Eigen/Dense>

#include <optional>
#include <vector>

#include "mtec/model.hpp"
#include "mtec/nn.hpp"

namespace mtec::baseline {

struct GlmSettings {
  Link link = Link::logit;
  double lambda_lasso = 0.0;
  double lambda_ridge = 0.0;
  int max_iterations = 20000;
  double gradient_tolerance = 1e-6;
  nn::AdamOptions adam{0.05, 0.9, 0.999, 1e-8};
};

// Single-species generalized linear model over preprocessed covariates.
struct GlmModel {
  Eigen::VectorXd coefficients;
  double intercept = 0.0;
  Link link = Link::logit;
  double lambda_lasso = 0.0;
  double lambda_ridge = 0.0;
  int iterations = 0;
  bool converged = false;

  Eigen::VectorXd predict(const Eigen::MatrixXd& features) const;
};

// Penalized Bernoulli maximum likelihood by full-batch Adam on the mean
// negative log-likelihood. nullopt when the response is single-class.
std::optional<GlmModel> fit_glm(const Eigen::MatrixXd& features, const Eigen::VectorXd& response,
                                const GlmSettings& settings = {});

// Fit one model per column of `community` on the given rows.
std::vector<std::optional<GlmModel>> fit_all(const Eigen::MatrixXd& features,
                                             const Eigen::MatrixXd& community,
                                             const std::vector<std::size_t>& rows,
                                             const GlmSettings& settings = {});

// Column j = model j's predictions; NaN column for a missing model.
Eigen::MatrixXd stack(const std::vector<std::optional<GlmModel>>& models,
                      const Eigen::MatrixXd& features);

}  // namespace mtec::baseline
