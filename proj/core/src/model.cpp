#include "mtec/model.hpp"

#include <algorithm>
#include <cmath>

#include "mtec/error.hpp"
#include "mtec/numeric.hpp"

namespace mtec {

std::string to_string(Link link) { return link == Link::probit ? "probit" : "logit"; }

Link parse_link(const std::string& s) {
  if (s == "probit") return Link::probit;
  if (s == "logit") return Link::logit;
  throw ConfigError("unknown link '" + s + "'");
}

double inverse_link(Link link, double eta) {
  return link == Link::probit ? normal_cdf(eta) : logistic(eta);
}

double inverse_link_derivative(Link link, double eta) {
  if (link == Link::probit) return normal_pdf(eta);
  const double t = logistic(eta);
  return t * (1.0 - t);
}

double link_function(Link link, double p) {
  return link == Link::probit ? normal_quantile(p) : logit(p);
}

void MtecConfig::validate() const {
  if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
  if (encoder_widths.empty()) throw ConfigError("encoder_widths must name at least the embedding width");
  for (int w : encoder_widths)
    if (w < 1) throw ConfigError("encoder_widths entries must be positive");
  for (int w : recog_widths)
    if (w < 1) throw ConfigError("recog_widths entries must be positive");
  if (static_cast<int>(prior_mean.size()) != latent_dim || static_cast<int>(prior_var.size()) != latent_dim) {
    throw ConfigError("prior_mean/prior_var must have latent_dim entries");
  }
  for (double v : prior_var)
    if (!(v > 0.0)) throw ConfigError("prior_var entries must be positive");
  if (!(lambda_lasso >= 0.0) || !(lambda_ridge >= 0.0)) throw ConfigError("regularization weights must be >= 0");
}

void MtecConfig::set_isotropic_prior(double mean, double var) {
  prior_mean.assign(static_cast<std::size_t>(latent_dim), mean);
  prior_var.assign(static_cast<std::size_t>(latent_dim), var);
}

nlohmann::json MtecConfig::to_json() const {
  return {{"latent_dim", latent_dim},
          {"encoder_widths", encoder_widths},
          {"recog_widths", recog_widths},
          {"hidden_activation", nn::to_string(hidden_activation)},
          {"link", mtec::to_string(link)},
          {"prior_mean", prior_mean},
          {"prior_var", prior_var},
          {"lambda_lasso", lambda_lasso},
          {"lambda_ridge", lambda_ridge}};
}

MtecConfig MtecConfig::from_json(const nlohmann::json& j) {
  static const char* known[] = {"latent_dim", "encoder_widths", "recog_widths", "hidden_activation",
                                "link", "prior_mean", "prior_var", "lambda_lasso", "lambda_ridge"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
      throw ConfigError("model config: unknown key '" + key + "'");
    }
  }
  MtecConfig c;
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.encoder_widths = j.value("encoder_widths", c.encoder_widths);
  c.recog_widths = j.value("recog_widths", c.recog_widths);
  c.hidden_activation = nn::parse_activation(j.value("hidden_activation", std::string("relu")));
  c.link = parse_link(j.value("link", std::string("probit")));
  c.lambda_lasso = j.value("lambda_lasso", c.lambda_lasso);
  c.lambda_ridge = j.value("lambda_ridge", c.lambda_ridge);
  // Scalars broadcast over latent dimensions.
  auto vec = [&](const char* key, double dflt) {
    if (!j.contains(key)) return std::vector<double>(static_cast<std::size_t>(c.latent_dim), dflt);
    if (j[key].is_number()) return std::vector<double>(static_cast<std::size_t>(c.latent_dim), j[key].get<double>());
    return j[key].get<std::vector<double>>();
  };
  c.prior_mean = vec("prior_mean", 0.0);
  c.prior_var = vec("prior_var", 1.0);
  c.validate();
  return c;
}

std::vector<nn::TensorView> MtecParameters::tensors() {
  std::vector<nn::TensorView> out;
  feature_encoder.append_tensors("feature_encoder", out);
  recog_net.append_tensors("recog_net", out);
  out.push_back({"response", {response.data(), static_cast<std::size_t>(response.size())}, response.rows(), response.cols()});
  out.push_back({"loadings", {loadings.data(), static_cast<std::size_t>(loadings.size())}, loadings.rows(), loadings.cols()});
  out.push_back({"intercepts", {intercepts.data(), static_cast<std::size_t>(intercepts.size())}, intercepts.size(), 1});
  return out;
}

std::vector<nn::TensorView> MtecGradients::tensors() {
  std::vector<nn::TensorView> out;
  nn::append_tensors("feature_encoder", feature_encoder, out);
  nn::append_tensors("recog_net", recog_net, out);
  out.push_back({"response", {response.data(), static_cast<std::size_t>(response.size())}, response.rows(), response.cols()});
  out.push_back({"loadings", {loadings.data(), static_cast<std::size_t>(loadings.size())}, loadings.rows(), loadings.cols()});
  out.push_back({"intercepts", {intercepts.data(), static_cast<std::size_t>(intercepts.size())}, intercepts.size(), 1});
  return out;
}

MtecModel::MtecModel(MtecConfig config, MtecParameters params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  const auto k = params_.feature_encoder.output_width();
  const auto m = params_.intercepts.size();
  if (k != config_.embed_dim()) throw ShapeError("feature encoder output width != embed_dim");
  if (params_.recog_net.output_width() != 2 * config_.latent_dim) {
    throw ShapeError("recognition net must output 2 * latent_dim values");
  }
  if (params_.recog_net.input_width() != m) throw ShapeError("recognition net input width != species count");
  if (params_.response.rows() != k || params_.response.cols() != m) throw ShapeError("response matrix must be K x M");
  if (params_.loadings.rows() != config_.latent_dim || params_.loadings.cols() != m) {
    throw ShapeError("loading matrix must be L x M");
  }
}

MtecModel MtecModel::zeros(const MtecConfig& config, int input_width, int n_species) {
  config.validate();
  MtecParameters p;
  std::vector<int> enc{input_width};
  enc.insert(enc.end(), config.encoder_widths.begin(), config.encoder_widths.end());
  p.feature_encoder = nn::DenseStack::zeros(enc, config.hidden_activation, config.hidden_activation);
  std::vector<int> rec{n_species};
  rec.insert(rec.end(), config.recog_widths.begin(), config.recog_widths.end());
  rec.push_back(2 * config.latent_dim);
  p.recog_net = nn::DenseStack::zeros(rec, config.hidden_activation, nn::Activation::linear);
  p.response = Eigen::MatrixXd::Zero(config.embed_dim(), n_species);
  p.loadings = Eigen::MatrixXd::Zero(config.latent_dim, n_species);
  p.intercepts = Eigen::VectorXd::Zero(n_species);
  return MtecModel(config, std::move(p));
}

int MtecModel::input_width() const { return static_cast<int>(params_.feature_encoder.input_width()); }
int MtecModel::n_species() const { return static_cast<int>(params_.intercepts.size()); }
int MtecModel::embed_dim() const { return static_cast<int>(params_.feature_encoder.output_width()); }

Eigen::VectorXd MtecModel::prior_mean() const {
  return Eigen::Map<const Eigen::VectorXd>(config_.prior_mean.data(), config_.latent_dim);
}
Eigen::VectorXd MtecModel::prior_var() const {
  return Eigen::Map<const Eigen::VectorXd>(config_.prior_var.data(), config_.latent_dim);
}

Eigen::MatrixXd MtecModel::encode_features(const Eigen::MatrixXd& e) const {
  return params_.feature_encoder.forward(e);
}

Eigen::VectorXd MtecModel::encode_features(const Eigen::VectorXd& e) const {
  return params_.feature_encoder.forward(Eigen::MatrixXd(e.transpose())).row(0).transpose();
}

VariationalPosterior MtecModel::encode_posterior(const Eigen::MatrixXd& y) const {
  if (y.cols() != n_species()) {
    throw ShapeError("encode_posterior: expected " + std::to_string(n_species()) + " species, got " +
                     std::to_string(y.cols()));
  }
  const Eigen::MatrixXd out = params_.recog_net.forward(y);
  const int l = config_.latent_dim;
  return {out.leftCols(l), out.rightCols(l).array().exp().matrix()};
}

Eigen::MatrixXd MtecModel::decode(const Eigen::MatrixXd& x, const Eigen::MatrixXd& h) const {
  if (x.cols() != params_.response.rows() || h.cols() != params_.loadings.rows() || x.rows() != h.rows()) {
    throw ShapeError("decode: embedding/latent shapes do not match B and A");
  }
  Eigen::MatrixXd eta = x * params_.response + h * params_.loadings;
  eta.rowwise() += params_.intercepts.transpose();
  const Link link = config_.link;
  return eta.unaryExpr([link](double v) { return inverse_link(link, v); });
}

Eigen::VectorXd MtecModel::decode(const Eigen::VectorXd& x, const Eigen::VectorXd& h) const {
  return decode(Eigen::MatrixXd(x.transpose()), Eigen::MatrixXd(h.transpose())).row(0).transpose();
}

double MtecModel::regularization() const {
  double l1 = 0.0, l2 = 0.0;
  auto add = [&](const auto& m) {
    l1 += m.cwiseAbs().sum();
    l2 += m.squaredNorm();
  };
  for (const auto& l : params_.feature_encoder.layers()) {
    add(l.weight);
    add(l.bias);
  }
  for (const auto& l : params_.recog_net.layers()) {
    add(l.weight);
    add(l.bias);
  }
  add(params_.response);
  add(params_.loadings);
  return config_.lambda_lasso * l1 + config_.lambda_ridge * l2;
}

MtecGradients MtecModel::zero_gradients() const {
  MtecGradients g;
  g.feature_encoder = params_.feature_encoder.zero_gradient();
  g.recog_net = params_.recog_net.zero_gradient();
  g.response = Eigen::MatrixXd::Zero(params_.response.rows(), params_.response.cols());
  g.loadings = Eigen::MatrixXd::Zero(params_.loadings.rows(), params_.loadings.cols());
  g.intercepts = Eigen::VectorXd::Zero(params_.intercepts.size());
  return g;
}

LossParts MtecModel::loss(const Batch& batch, const Eigen::VectorXd& class_weights) const {
  return evaluate(batch, class_weights, nullptr);
}

LossParts MtecModel::loss_and_gradient(const Batch& batch, const Eigen::VectorXd& class_weights,
                                       MtecGradients& grads) const {
  return evaluate(batch, class_weights, &grads);
}

double weighted_bce(double y, double theta, double positive_weight) {
  const double t = std::clamp(theta, kProbFloor, 1.0 - kProbFloor);
  return -(positive_weight * y * std::log(t) + (1.0 - y) * std::log(1.0 - t));
}

CellLoss bernoulli_cell(Link link, double eta, double y, double positive_weight) {
  // Both links are symmetric: 1 - g^-1(eta) = g^-1(-eta).
  const double p = inverse_link(link, eta);
  const double q = inverse_link(link, -eta);
  const double slope = inverse_link_derivative(link, eta);
  CellLoss c;
  if (y != 0.0) {
    c.value -= positive_weight * y * std::log(std::max(p, kProbFloor));
    if (p > kProbFloor) c.d_eta -= positive_weight * y * slope / p;
  }
  if (y != 1.0) {
    c.value -= (1.0 - y) * std::log(std::max(q, kProbFloor));
    if (q > kProbFloor) c.d_eta += (1.0 - y) * slope / q;
  }
  return c;
}

LossParts MtecModel::evaluate(const Batch& batch, const Eigen::VectorXd& w, MtecGradients* grads) const {
  const Eigen::Index n = batch.features.rows();
  const int m = n_species();
  const int l = config_.latent_dim;
  if (batch.community.rows() != n || batch.noise.rows() != n) throw ShapeError("batch: row counts differ");
  if (batch.community.cols() != m) throw ShapeError("batch: community width != species count");
  if (batch.noise.cols() != l) throw ShapeError("batch: noise width != latent_dim");
  if (w.size() != m) throw ShapeError("class weights: expected one per species");

  nn::Tape enc_tape, rec_tape;
  const Eigen::MatrixXd x = params_.feature_encoder.forward(batch.features, enc_tape);
  const Eigen::MatrixXd r = params_.recog_net.forward(batch.community, rec_tape);
  const Eigen::MatrixXd mu = r.leftCols(l);
  const Eigen::MatrixXd logvar = r.rightCols(l);
  const Eigen::MatrixXd var = logvar.array().exp().matrix();
  const Eigen::MatrixXd sd = var.cwiseSqrt();
  const Eigen::MatrixXd h = mu + batch.noise.cwiseProduct(sd);

  Eigen::MatrixXd eta = x * params_.response + h * params_.loadings;
  eta.rowwise() += params_.intercepts.transpose();

  LossParts parts;
  Eigen::MatrixXd d_eta;
  if (grads) d_eta.resize(n, m);
  const Link link = config_.link;
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const CellLoss c = bernoulli_cell(link, eta(i, j), batch.community(i, j), w(j));
      parts.recon += c.value;
      if (grads) d_eta(i, j) = c.d_eta;
    }
  }

  const Eigen::VectorXd mp = prior_mean();
  const Eigen::VectorXd vp = prior_var();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int k = 0; k < l; ++k) {
      const double dm = mp(k) - mu(i, k);
      parts.kl += 0.5 * (var(i, k) / vp(k) + dm * dm / vp(k) - 1.0 + std::log(vp(k)) - logvar(i, k));
    }
  }
  parts.reg = regularization();
  if (!grads) return parts;

  MtecGradients& g = *grads;
  g.response = x.transpose() * d_eta;
  g.loadings = h.transpose() * d_eta;
  g.intercepts = d_eta.colwise().sum().transpose();
  const Eigen::MatrixXd d_x = d_eta * params_.response.transpose();
  const Eigen::MatrixXd d_h = d_eta * params_.loadings.transpose();

  Eigen::MatrixXd d_r(n, 2 * l);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int k = 0; k < l; ++k) {
      d_r(i, k) = d_h(i, k) + (mu(i, k) - mp(k)) / vp(k);
      // h = mu + eps * exp(logvar / 2)
      d_r(i, l + k) = d_h(i, k) * batch.noise(i, k) * sd(i, k) * 0.5 + 0.5 * (var(i, k) / vp(k) - 1.0);
    }
  }
  g.feature_encoder = params_.feature_encoder.backward(enc_tape, d_x);
  g.recog_net = params_.recog_net.backward(rec_tape, d_r);

  // Elastic net; the L1 subgradient at 0 is 0.
  const double l1 = config_.lambda_lasso, l2 = config_.lambda_ridge;
  auto penalize = [&](auto& grad, const auto& param) {
    grad.array() += l1 * param.array().sign() + 2.0 * l2 * param.array();
  };
  for (std::size_t i = 0; i < params_.feature_encoder.depth(); ++i) {
    penalize(g.feature_encoder.layers[i].weight, params_.feature_encoder.layers()[i].weight);
    penalize(g.feature_encoder.layers[i].bias, params_.feature_encoder.layers()[i].bias);
  }
  for (std::size_t i = 0; i < params_.recog_net.depth(); ++i) {
    penalize(g.recog_net.layers[i].weight, params_.recog_net.layers()[i].weight);
    penalize(g.recog_net.layers[i].bias, params_.recog_net.layers()[i].bias);
  }
  penalize(g.response, params_.response);
  penalize(g.loadings, params_.loadings);
  return parts;
}

Eigen::MatrixXd MtecModel::predict(const Eigen::MatrixXd& e, const PredictOptions& options) const {
  if (!trained_) throw ContractError("predict: model has not been trained");
  const Eigen::MatrixXd x = encode_features(e);
  const Eigen::Index n = e.rows();
  const int l = config_.latent_dim;
  if (options.mode == PredictOptions::Mode::prior_mean) {
    const Eigen::MatrixXd h = prior_mean().transpose().replicate(n, 1);
    return decode(x, h);
  }
  if (options.n_draws < 1) throw ConfigError("predict: n_draws must be >= 1");
  Rng rng(options.seed);
  const Eigen::VectorXd sd = prior_var().cwiseSqrt();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, n_species());
  Eigen::MatrixXd h(n, l);
  for (int d = 0; d < options.n_draws; ++d) {
    for (Eigen::Index i = 0; i < n; ++i)
      for (int k = 0; k < l; ++k) h(i, k) = config_.prior_mean[k] + sd(k) * rng.normal();
    acc += decode(x, h);
  }
  return acc / options.n_draws;
}

Eigen::MatrixXd sample_latent(const Eigen::MatrixXd& mean, const Eigen::MatrixXd& var,
                              const Eigen::MatrixXd& eps) {
  return mean + eps.cwiseProduct(var.cwiseSqrt());
}

Eigen::VectorXd sample_latent(const Eigen::VectorXd& mean, const Eigen::VectorXd& var,
                              const Eigen::VectorXd& eps) {
  return mean + eps.cwiseProduct(var.cwiseSqrt());
}

double gaussian_kl(const Eigen::VectorXd& mu_q, const Eigen::VectorXd& var_q,
                   const Eigen::VectorXd& mu_p, const Eigen::VectorXd& var_p) {
  double kl = 0.0;
  for (Eigen::Index k = 0; k < mu_q.size(); ++k) {
    const double d = mu_p(k) - mu_q(k);
    kl += 0.5 * (var_q(k) / var_p(k) + d * d / var_p(k) - 1.0 + std::log(var_p(k) / var_q(k)));
  }
  return kl;
}

Eigen::MatrixXd standard_normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

}  // namespace mtec
