#include "mtec/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mtec/error.hpp"

namespace mtec::baseline {

Eigen::VectorXd GlmModel::predict(const Eigen::MatrixXd& features) const {
  if (features.cols() != coefficients.size()) {
    throw ShapeError("glm: expected " + std::to_string(coefficients.size()) + " features, got " +
                     std::to_string(features.cols()));
  }
  Eigen::VectorXd eta = features * coefficients;
  eta.array() += intercept;
  const Link l = link;
  return eta.unaryExpr([l](double v) { return inverse_link(l, v); });
}

namespace {

struct Objective {
  double value = 0.0;
  Eigen::VectorXd grad_coef;
  double grad_intercept = 0.0;
};

Objective evaluate(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                   double intercept, const GlmSettings& s) {
  const double n = static_cast<double>(x.rows());
  Eigen::VectorXd eta = x * beta;
  eta.array() += intercept;
  Eigen::VectorXd d_eta(eta.size());
  Objective o;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const CellLoss c = bernoulli_cell(s.link, eta(i), y(i), 1.0);
    o.value += c.value;
    d_eta(i) = c.d_eta;
  }
  o.value /= n;
  o.value += s.lambda_lasso * beta.cwiseAbs().sum() + s.lambda_ridge * beta.squaredNorm();
  o.grad_coef = x.transpose() * d_eta / n + 2.0 * s.lambda_ridge * beta;
  o.grad_coef += s.lambda_lasso * beta.array().sign().matrix();
  o.grad_intercept = d_eta.sum() / n;
  return o;
}

// Largest entry of the minimum-norm subgradient (zero coefficients may sit
// inside the L1 kink).
double stationarity(const Objective& o, const Eigen::VectorXd& beta, double lambda_lasso) {
  double worst = std::abs(o.grad_intercept);
  for (Eigen::Index k = 0; k < beta.size(); ++k) {
    double g = o.grad_coef(k);
    if (beta(k) == 0.0) g = std::max(0.0, std::abs(g) - lambda_lasso);
    worst = std::max(worst, std::abs(g));
  }
  return worst;
}

}  // namespace

std::optional<GlmModel> fit_glm(const Eigen::MatrixXd& features, const Eigen::VectorXd& response,
                                const GlmSettings& settings) {
  if (features.rows() != response.size()) throw ShapeError("fit_glm: features and response differ in length");
  const double prevalence = response.mean();
  if (response.size() == 0 || prevalence == 0.0 || prevalence == 1.0) return std::nullopt;

  GlmModel model;
  model.link = settings.link;
  model.lambda_lasso = settings.lambda_lasso;
  model.lambda_ridge = settings.lambda_ridge;
  model.coefficients = Eigen::VectorXd::Zero(features.cols());
  model.intercept = link_function(settings.link, prevalence);

  nn::AdamState state;
  state.options = settings.adam;
  Eigen::VectorXd intercept_vec(1);
  double previous = std::numeric_limits<double>::infinity();
  for (int it = 0; it < settings.max_iterations; ++it) {
    const Objective o = evaluate(features, response, model.coefficients, model.intercept, settings);
    model.iterations = it;
    if (stationarity(o, model.coefficients, settings.lambda_lasso) < settings.gradient_tolerance) {
      model.converged = true;
      break;
    }
    // Step-size backoff when the objective rises keeps Adam from orbiting
    // the optimum.
    if (o.value > previous) state.options.learning_rate *= 0.5;
    previous = o.value;

    Eigen::VectorXd gc = o.grad_coef;
    Eigen::VectorXd gi(1);
    gi(0) = o.grad_intercept;
    intercept_vec(0) = model.intercept;
    const nn::TensorView params[] = {
        {"coefficients", {model.coefficients.data(), static_cast<std::size_t>(model.coefficients.size())},
         model.coefficients.size(), 1},
        {"intercept", {intercept_vec.data(), 1}, 1, 1}};
    const nn::TensorView grads[] = {
        {"coefficients", {gc.data(), static_cast<std::size_t>(gc.size())}, gc.size(), 1},
        {"intercept", {gi.data(), 1}, 1, 1}};
    const auto step = nn::adam_step(params, grads, state);
    if (!step.applied) break;
    model.intercept = intercept_vec(0);
  }
  return model;
}

std::vector<std::optional<GlmModel>> fit_all(const Eigen::MatrixXd& features, const Eigen::MatrixXd& community,
                                             const std::vector<std::size_t>& rows, const GlmSettings& settings) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), features.cols());
  Eigen::MatrixXd y(static_cast<Eigen::Index>(rows.size()), community.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(rows[i]));
    y.row(static_cast<Eigen::Index>(i)) = community.row(static_cast<Eigen::Index>(rows[i]));
  }
  std::vector<std::optional<GlmModel>> out;
  for (Eigen::Index j = 0; j < y.cols(); ++j) out.push_back(fit_glm(x, y.col(j), settings));
  return out;
}

Eigen::MatrixXd stack(const std::vector<std::optional<GlmModel>>& models, const Eigen::MatrixXd& features) {
  Eigen::MatrixXd out(features.rows(), static_cast<Eigen::Index>(models.size()));
  for (std::size_t j = 0; j < models.size(); ++j) {
    if (models[j]) out.col(static_cast<Eigen::Index>(j)) = models[j]->predict(features);
    else out.col(static_cast<Eigen::Index>(j)).setConstant(std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

}  // namespace mtec::baseline
