#include "mtec/nn.hpp"

#include <cmath>

#include "mtec/error.hpp"

namespace mtec::nn {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  return "linear";
}

Activation parse_activation(const std::string& s) {
  if (s == "linear") return Activation::linear;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + s + "'");
}

namespace {

Eigen::MatrixXd activate(Activation a, const Eigen::MatrixXd& z) {
  switch (a) {
    case Activation::linear: return z;
    case Activation::relu: return z.cwiseMax(0.0);
    case Activation::tanh: return z.array().tanh().matrix();
  }
  return z;
}

// Elementwise derivative of the activation at the pre-activation z.
Eigen::MatrixXd activation_slope(Activation a, const Eigen::MatrixXd& z) {
  switch (a) {
    case Activation::linear: return Eigen::MatrixXd::Ones(z.rows(), z.cols());
    case Activation::relu: return (z.array() > 0.0).cast<double>().matrix();
    case Activation::tanh: return (1.0 - z.array().tanh().square()).matrix();
  }
  return Eigen::MatrixXd::Ones(z.rows(), z.cols());
}

}  // namespace

double glorot_limit(Eigen::Index fan_in, Eigen::Index fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

void glorot_fill(Eigen::MatrixXd& w, Rng& rng) {
  const double limit = glorot_limit(w.rows(), w.cols());
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-limit, limit);
}

DenseStack::DenseStack(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].bias.size() != layers_[i].fan_out()) {
      throw ShapeError("layer " + std::to_string(i) + ": bias width " +
                       std::to_string(layers_[i].bias.size()) + " != fan_out " +
                       std::to_string(layers_[i].fan_out()));
    }
    if (i > 0 && layers_[i].fan_in() != layers_[i - 1].fan_out()) {
      throw ShapeError("layer " + std::to_string(i) + ": fan_in " +
                       std::to_string(layers_[i].fan_in()) + " != previous fan_out " +
                       std::to_string(layers_[i - 1].fan_out()));
    }
  }
}

DenseStack DenseStack::zeros(const std::vector<int>& widths, Activation hidden, Activation output) {
  if (widths.size() < 2) throw ShapeError("dense stack needs at least input and output widths");
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    DenseLayer l;
    l.weight = Eigen::MatrixXd::Zero(widths[i], widths[i + 1]);
    l.bias = Eigen::VectorXd::Zero(widths[i + 1]);
    l.activation = i + 2 == widths.size() ? output : hidden;
    layers.push_back(std::move(l));
  }
  return DenseStack(std::move(layers));
}

DenseStack DenseStack::glorot(const std::vector<int>& widths, Activation hidden, Activation output,
                              Rng& rng) {
  DenseStack s = zeros(widths, hidden, output);
  for (auto& l : s.layers_) glorot_fill(l.weight, rng);
  return s;
}

Eigen::Index DenseStack::input_width() const {
  return layers_.empty() ? 0 : layers_.front().fan_in();
}

Eigen::Index DenseStack::output_width() const {
  return layers_.empty() ? 0 : layers_.back().fan_out();
}

Eigen::MatrixXd DenseStack::forward(const Eigen::MatrixXd& x, Tape& tape) const {
  if (layers_.empty()) throw ContractError("forward on an empty dense stack");
  if (x.cols() != input_width()) {
    throw ShapeError("forward: expected input width " + std::to_string(input_width()) + ", got " +
                     std::to_string(x.cols()));
  }
  tape.clear();
  Eigen::MatrixXd a = x;
  for (const auto& l : layers_) {
    Eigen::MatrixXd z = a * l.weight;
    z.rowwise() += l.bias.transpose();
    tape.inputs.push_back(std::move(a));
    a = activate(l.activation, z);
    tape.pre_activations.push_back(std::move(z));
  }
  return a;
}

Eigen::MatrixXd DenseStack::forward(const Eigen::MatrixXd& x) const {
  if (layers_.empty()) throw ContractError("forward on an empty dense stack");
  if (x.cols() != input_width()) {
    throw ShapeError("forward: expected input width " + std::to_string(input_width()) + ", got " +
                     std::to_string(x.cols()));
  }
  Eigen::MatrixXd a = x;
  for (const auto& l : layers_) {
    Eigen::MatrixXd z = a * l.weight;
    z.rowwise() += l.bias.transpose();
    a = activate(l.activation, z);
  }
  return a;
}

Eigen::VectorXd DenseStack::forward(const Eigen::VectorXd& x, Tape& tape) const {
  return forward(Eigen::MatrixXd(x.transpose()), tape).row(0).transpose();
}

StackGradient DenseStack::backward(const Tape& tape, const Eigen::MatrixXd& upstream) const {
  if (tape.empty() || tape.inputs.size() != layers_.size() ||
      tape.pre_activations.size() != layers_.size()) {
    throw ContractError("backward: tape does not come from a forward pass of this stack");
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (tape.inputs[i].cols() != layers_[i].fan_in() ||
        tape.pre_activations[i].cols() != layers_[i].fan_out()) {
      throw ContractError("backward: stale tape (layer " + std::to_string(i) + " shape changed)");
    }
  }
  const auto& last = tape.pre_activations.back();
  if (upstream.rows() != last.rows() || upstream.cols() != last.cols()) {
    throw ShapeError("backward: upstream gradient is " + std::to_string(upstream.rows()) + "x" +
                     std::to_string(upstream.cols()) + ", expected " + std::to_string(last.rows()) +
                     "x" + std::to_string(last.cols()));
  }
  StackGradient g;
  g.layers.resize(layers_.size());
  Eigen::MatrixXd delta = upstream;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& l = layers_[k];
    const Eigen::MatrixXd dz =
        l.activation == Activation::linear
            ? delta
            : Eigen::MatrixXd(delta.cwiseProduct(activation_slope(l.activation, tape.pre_activations[k])));
    g.layers[k].weight = tape.inputs[k].transpose() * dz;
    g.layers[k].bias = dz.colwise().sum().transpose();
    delta = dz * l.weight.transpose();
  }
  g.input = std::move(delta);
  return g;
}

void DenseStack::append_tensors(const std::string& prefix, std::vector<TensorView>& out) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto& l = layers_[i];
    const std::string base = prefix + "." + std::to_string(i);
    out.push_back({base + ".weight", {l.weight.data(), static_cast<std::size_t>(l.weight.size())},
                   l.weight.rows(), l.weight.cols()});
    out.push_back({base + ".bias", {l.bias.data(), static_cast<std::size_t>(l.bias.size())},
                   l.bias.size(), 1});
  }
}

void append_tensors(const std::string& prefix, StackGradient& grad, std::vector<TensorView>& out) {
  for (std::size_t i = 0; i < grad.layers.size(); ++i) {
    auto& l = grad.layers[i];
    const std::string base = prefix + "." + std::to_string(i);
    out.push_back({base + ".weight", {l.weight.data(), static_cast<std::size_t>(l.weight.size())},
                   l.weight.rows(), l.weight.cols()});
    out.push_back({base + ".bias", {l.bias.data(), static_cast<std::size_t>(l.bias.size())},
                   l.bias.size(), 1});
  }
}

StackGradient DenseStack::zero_gradient() const {
  StackGradient g;
  for (const auto& l : layers_) {
    g.layers.push_back({Eigen::MatrixXd::Zero(l.fan_in(), l.fan_out()), Eigen::VectorXd::Zero(l.fan_out())});
  }
  return g;
}

nlohmann::json DenseStack::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : layers_) {
    layers.push_back({{"fan_in", l.fan_in()}, {"fan_out", l.fan_out()},
                      {"activation", to_string(l.activation)}});
  }
  return layers;
}

DenseStack DenseStack::from_json(const nlohmann::json& j) {
  std::vector<DenseLayer> layers;
  for (const auto& l : j) {
    DenseLayer d;
    d.weight = Eigen::MatrixXd::Zero(l.at("fan_in").get<Eigen::Index>(), l.at("fan_out").get<Eigen::Index>());
    d.bias = Eigen::VectorXd::Zero(d.weight.cols());
    d.activation = parse_activation(l.at("activation").get<std::string>());
    layers.push_back(std::move(d));
  }
  return DenseStack(std::move(layers));
}

AdamResult adam_step(std::span<const TensorView> params, std::span<const TensorView> grads,
                     AdamState& state) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam: " + std::to_string(params.size()) + " parameter tensors but " +
                     std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].values.size() != grads[t].values.size()) {
      throw ShapeError("adam: gradient shape mismatch for '" + params[t].name + "'");
    }
    for (double g : grads[t].values) {
      if (!std::isfinite(g)) return {false, params[t].name};
    }
  }
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.values.size(), 0.0);
      state.second_moment.emplace_back(p.values.size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) throw ShapeError("adam: state does not mirror parameters");

  const auto& o = state.options;
  ++state.step;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& m = state.first_moment[t];
    auto& v = state.second_moment[t];
    if (m.size() != params[t].values.size()) throw ShapeError("adam: state does not mirror '" + params[t].name + "'");
    auto p = params[t].values;
    auto g = grads[t].values;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g[i];
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= o.learning_rate * mhat / (std::sqrt(vhat) + o.epsilon);
    }
  }
  return {};
}

nlohmann::json tensors_to_json(std::span<const TensorView> tensors) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& t : tensors) {
    // Eigen storage is column-major; serialize row-major.
    std::vector<double> data(t.values.size());
    for (Eigen::Index i = 0; i < t.rows; ++i)
      for (Eigen::Index j = 0; j < t.cols; ++j)
        data[static_cast<std::size_t>(i * t.cols + j)] = t.values[static_cast<std::size_t>(j * t.rows + i)];
    arr.push_back({{"name", t.name}, {"shape", {t.rows, t.cols}}, {"data", data}});
  }
  return {{"version", 1}, {"tensors", arr}};
}

void tensors_from_json(const nlohmann::json& j, std::span<const TensorView> tensors) {
  if (j.value("version", 0) != 1) throw ShapeError("tensor document: unsupported version");
  const auto& arr = j.at("tensors");
  for (const auto& t : tensors) {
    const nlohmann::json* found = nullptr;
    for (const auto& e : arr) {
      if (e.at("name").get<std::string>() == t.name) {
        found = &e;
        break;
      }
    }
    if (!found) throw ShapeError("tensor document: missing tensor '" + t.name + "'");
    const auto rows = found->at("shape").at(0).get<Eigen::Index>();
    const auto cols = found->at("shape").at(1).get<Eigen::Index>();
    if (rows != t.rows || cols != t.cols) {
      throw ShapeError("tensor '" + t.name + "': stored shape " + std::to_string(rows) + "x" +
                       std::to_string(cols) + ", expected " + std::to_string(t.rows) + "x" +
                       std::to_string(t.cols));
    }
    const auto data = found->at("data").get<std::vector<double>>();
    if (data.size() != t.values.size()) throw ShapeError("tensor '" + t.name + "': data length mismatch");
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index k = 0; k < cols; ++k)
        t.values[static_cast<std::size_t>(k * rows + i)] = data[static_cast<std::size_t>(i * cols + k)];
  }
}

}  // namespace mtec::nn
