#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <span>
#include <string>
#include <vector>

#include "mtec/random.hpp"

namespace mtec::nn {

enum class Activation { linear, relu, tanh };

std::string to_string(Activation a);
Activation parse_activation(const std::string& s);

// Weight is fan_in x fan_out so a batch of row vectors X maps to X * W + b.
struct DenseLayer {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
  Activation activation = Activation::linear;

  Eigen::Index fan_in() const { return weight.rows(); }
  Eigen::Index fan_out() const { return weight.cols(); }
};

// Values recorded by a forward pass and consumed by backward.
struct Tape {
  std::vector<Eigen::MatrixXd> inputs;           // input of each layer
  std::vector<Eigen::MatrixXd> pre_activations;  // X*W+b of each layer
  bool empty() const { return inputs.empty(); }
  void clear() {
    inputs.clear();
    pre_activations.clear();
  }
};

struct LayerGradient {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
};

struct StackGradient {
  std::vector<LayerGradient> layers;
  Eigen::MatrixXd input;  // dL/dX, one row per sample
};

// Non-owning view of a named parameter (or gradient) tensor.
struct TensorView {
  std::string name;
  std::span<double> values;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
};

// Fully connected stack. Layer dims chain: layers[i].fan_out == layers[i+1].fan_in.
class DenseStack {
 public:
  DenseStack() = default;
  explicit DenseStack(std::vector<DenseLayer> layers);

  // widths = {in, h1, ..., out}; hidden layers use `hidden`, the last `output`.
  // Weights Glorot-uniform, biases zero.
  static DenseStack glorot(const std::vector<int>& widths, Activation hidden, Activation output,
                           Rng& rng);
  static DenseStack zeros(const std::vector<int>& widths, Activation hidden, Activation output);

  Eigen::Index input_width() const;
  Eigen::Index output_width() const;
  std::size_t depth() const { return layers_.size(); }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  // Batch forward: rows of x are samples. Throws ShapeError on width mismatch.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Tape& tape) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
  Eigen::VectorXd forward(const Eigen::VectorXd& x, Tape& tape) const;

  // Gradients of a scalar loss whose gradient at the output is `upstream`.
  // Throws ContractError if the tape does not come from a matching forward.
  StackGradient backward(const Tape& tape, const Eigen::MatrixXd& upstream) const;

  // Parameter tensors named "<prefix>.<layer>.weight" / ".bias".
  void append_tensors(const std::string& prefix, std::vector<TensorView>& out);

  StackGradient zero_gradient() const;

  nlohmann::json to_json() const;
  static DenseStack from_json(const nlohmann::json& j);

 private:
  std::vector<DenseLayer> layers_;
};

void append_tensors(const std::string& prefix, StackGradient& grad, std::vector<TensorView>& out);

double glorot_limit(Eigen::Index fan_in, Eigen::Index fan_out);

// In-place Glorot-uniform fill of a fan_in x fan_out matrix.
void glorot_fill(Eigen::MatrixXd& w, Rng& rng);

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamOptions options;
  long step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

struct AdamResult {
  bool applied = true;
  std::string nonfinite_tensor;  // set when a gradient entry is NaN/inf
};

// Bias-corrected Adam update. Accumulators are sized lazily on the first call
// and must mirror `params` afterwards. Nothing is modified (including the step
// counter) when any gradient entry is non-finite.
AdamResult adam_step(std::span<const TensorView> params, std::span<const TensorView> grads,
                     AdamState& state);

// Named-tensor document: {"version": 1, "tensors": [{"name", "shape", "data"}]}.
nlohmann::json tensors_to_json(std::span<const TensorView> tensors);
// Copies values by name into `tensors`; throws ShapeError on mismatch.
void tensors_from_json(const nlohmann::json& j, std::span<const TensorView> tensors);

}  // namespace mtec::nn
