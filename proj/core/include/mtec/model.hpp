#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "mtec/nn.hpp"

namespace mtec {

enum class Link { probit, logit };

std::string to_string(Link link);
Link parse_link(const std::string& s);

// Inverse link g^-1(eta) and its derivative.
double inverse_link(Link link, double eta);
double inverse_link_derivative(Link link, double eta);
// g(p), used for intercept initialisation.
double link_function(Link link, double p);

struct MtecConfig {
  int latent_dim = 3;                   // L
  std::vector<int> encoder_widths{16};  // feature encoder layers; last entry is K
  std::vector<int> recog_widths{};      // hidden layers of the recognition net
  nn::Activation hidden_activation = nn::Activation::relu;
  Link link = Link::probit;
  std::vector<double> prior_mean{0.0, 0.0, 0.0};  // mu_p, length L
  std::vector<double> prior_var{1.0, 1.0, 1.0};   // sigma_p^2, length L
  double lambda_lasso = 1e-4;
  double lambda_ridge = 1e-4;

  int embed_dim() const { return encoder_widths.empty() ? 0 : encoder_widths.back(); }
  // Throws ConfigError on L < 1, non-positive prior variances, negative penalties.
  void validate() const;

  // Replaces prior vectors by `mean`/`var` repeated latent_dim times.
  void set_isotropic_prior(double mean, double var);

  nlohmann::json to_json() const;
  static MtecConfig from_json(const nlohmann::json& j);
};

struct MtecParameters {
  nn::DenseStack feature_encoder;  // W^e : preprocessed covariates -> K
  nn::DenseStack recog_net;        // xi  : community row (M) -> 2L
  Eigen::MatrixXd response;        // B, K x M
  Eigen::MatrixXd loadings;        // A, L x M
  Eigen::VectorXd intercepts;      // M

  std::vector<nn::TensorView> tensors();
};

struct MtecGradients {
  nn::StackGradient feature_encoder;
  nn::StackGradient recog_net;
  Eigen::MatrixXd response;
  Eigen::MatrixXd loadings;
  Eigen::VectorXd intercepts;

  // Same order and names as MtecParameters::tensors().
  std::vector<nn::TensorView> tensors();
};

// Per-site Gaussian posterior over the latent factors.
struct VariationalPosterior {
  Eigen::MatrixXd mean;      // N x L
  Eigen::MatrixXd variance;  // N x L, > 0
};

struct LossParts {
  double recon = 0.0;
  double kl = 0.0;
  double reg = 0.0;
  double total() const { return recon + kl + reg; }
};

struct Batch {
  Eigen::MatrixXd features;   // n x P preprocessed covariates
  Eigen::MatrixXd community;  // n x M
  Eigen::MatrixXd noise;      // n x L standard normal draws
};

struct PredictOptions {
  enum class Mode { prior_mean, prior_sample } mode = Mode::prior_mean;
  std::uint64_t seed = 0;
  int n_draws = 100;
};

class MtecModel {
 public:
  MtecModel() = default;
  MtecModel(MtecConfig config, MtecParameters params);

  // Zero networks and loadings with the given shapes; the caller fills them.
  static MtecModel zeros(const MtecConfig& config, int input_width, int n_species);

  const MtecConfig& config() const { return config_; }
  MtecConfig& config() { return config_; }
  MtecParameters& params() { return params_; }
  const MtecParameters& params() const { return params_; }

  int input_width() const;
  int n_species() const;
  int latent_dim() const { return config_.latent_dim; }
  int embed_dim() const;

  bool trained() const { return trained_; }
  void set_trained(bool t) { trained_ = t; }

  // x = f_ext(e), one row per site.
  Eigen::MatrixXd encode_features(const Eigen::MatrixXd& e) const;
  Eigen::VectorXd encode_features(const Eigen::VectorXd& e) const;

  // Recognition network: mean and variance (exp of the log-variance half).
  VariationalPosterior encode_posterior(const Eigen::MatrixXd& y) const;

  // theta = g^-1(intercept + x B + h A), one row per site.
  Eigen::MatrixXd decode(const Eigen::MatrixXd& x, const Eigen::MatrixXd& h) const;
  Eigen::VectorXd decode(const Eigen::VectorXd& x, const Eigen::VectorXd& h) const;

  // Loss value only, and loss with analytic gradients for every tensor.
  LossParts loss(const Batch& batch, const Eigen::VectorXd& class_weights) const;
  LossParts loss_and_gradient(const Batch& batch, const Eigen::VectorXd& class_weights,
                              MtecGradients& grads) const;

  // Elastic-net penalty over encoder, recognition, B and A (not intercepts).
  double regularization() const;

  MtecGradients zero_gradients() const;

  // Occurrence probabilities for preprocessed covariate rows using latent
  // factors from the prior. Throws ContractError on an untrained model.
  Eigen::MatrixXd predict(const Eigen::MatrixXd& e, const PredictOptions& options = {}) const;

  Eigen::VectorXd prior_mean() const;
  Eigen::VectorXd prior_var() const;

 private:
  LossParts evaluate(const Batch& batch, const Eigen::VectorXd& class_weights,
                     MtecGradients* grads) const;

  MtecConfig config_;
  MtecParameters params_;
  bool trained_ = false;
};

// h = eps * sigma + mu, elementwise; sigma = sqrt(var).
Eigen::MatrixXd sample_latent(const Eigen::MatrixXd& mean, const Eigen::MatrixXd& var,
                              const Eigen::MatrixXd& eps);
Eigen::VectorXd sample_latent(const Eigen::VectorXd& mean, const Eigen::VectorXd& var,
                              const Eigen::VectorXd& eps);

// KL(N(mu_q, var_q) || N(mu_p, var_p)) summed over dimensions.
double gaussian_kl(const Eigen::VectorXd& mu_q, const Eigen::VectorXd& var_q,
                   const Eigen::VectorXd& mu_p, const Eigen::VectorXd& var_p);

// Probabilities are clamped to [kProbFloor, 1 - kProbFloor] before logs.
inline constexpr double kProbFloor = 1e-12;

// Weighted binary cross-entropy of one cell.
double weighted_bce(double y, double theta, double positive_weight);

struct CellLoss {
  double value = 0.0;
  double d_eta = 0.0;
};

// weighted_bce as a function of eta with its derivative. 1 - theta is taken
// as g^-1(-eta) so both tails keep full precision; each probability is
// floored at kProbFloor, with zero slope below the floor.
CellLoss bernoulli_cell(Link link, double eta, double y, double positive_weight);

Eigen::MatrixXd standard_normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng);

}  // namespace mtec
