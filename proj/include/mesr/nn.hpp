#pragma once

#include <Eigen/Dense>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace mesr::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using MatrixF = Eigen::MatrixXf;

enum class OutputActivation { identity, tanh };

/// Arithmetic used inside forward and backward passes. Parameters, gradients
/// and optimizer state are always stored in double.
enum class Precision { float64, float32 };

/// Activations recorded by a training-mode forward pass. Samples are columns.
/// Only the vectors matching the network's precision are filled.
struct Tape {
  std::vector<Matrix> inputs;       ///< input to each layer
  std::vector<Matrix> activations;  ///< post-activation output of each layer
  std::vector<MatrixF> inputs_f;
  std::vector<MatrixF> activations_f;
  bool recorded() const { return !inputs.empty() || !inputs_f.empty(); }
};

struct Gradients {
  Vector params;  ///< same layout as Mlp::parameters()
  Matrix input;   ///< d loss / d input, one column per sample
};

/// Fully connected network with ReLU hidden layers. All weights and biases
/// live in one flat vector: per layer a column-major (out x in) weight block
/// followed by the bias.
class Mlp {
 public:
  Mlp() = default;
  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
  Mlp(std::vector<int> layer_sizes, OutputActivation output, std::mt19937_64& rng);
  /// Zero-initialized network.
  Mlp(std::vector<int> layer_sizes, OutputActivation output);

  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  const std::vector<int>& layer_sizes() const { return sizes_; }
  OutputActivation output_activation() const { return output_; }
  Precision precision() const { return precision_; }
  void set_precision(Precision p) { precision_ = p; }

  Vector& parameters() { return params_; }
  const Vector& parameters() const { return params_; }

  Matrix forward(const Matrix& x) const;
  Vector forward(std::span<const double> x) const;
  /// Forward pass that records what backward() needs.
  Matrix forward(const Matrix& x, Tape& tape) const;
  /// Back-propagates `upstream` (d loss / d output, one column per sample).
  /// Throws std::logic_error when the tape holds no forward pass.
  Gradients backward(const Tape& tape, const Matrix& upstream) const;

 private:
  std::size_t layer_count() const { return sizes_.size() - 1; }
  Eigen::Map<const Matrix> weights(std::size_t layer) const;
  Eigen::Map<const Vector> bias(std::size_t layer) const;
  void build_offsets();
  template <class S>
  Matrix forward_impl(const Matrix& x, std::vector<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>>& inputs,
                      std::vector<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>>& activations) const;
  template <class S>
  Gradients backward_impl(const std::vector<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>>& inputs,
                          const std::vector<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>>& activations,
                          const Matrix& upstream) const;

  std::vector<int> sizes_;
  OutputActivation output_ = OutputActivation::identity;
  Precision precision_ = Precision::float64;
  std::vector<std::size_t> offsets_;
  Vector params_;
};

struct AdamState {
  Vector m;
  Vector v;
  long step = 0;
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  AdamState(Eigen::Index size, double learning_rate)
      : m(Vector::Zero(size)), v(Vector::Zero(size)), lr(learning_rate) {}
};

/// Bias-corrected Adam. Rejects non-finite gradients with std::domain_error.
void adam_step(Vector& params, const Vector& grads, AdamState& state);

/// target <- tau * online + (1 - tau) * target
void polyak_update(Vector& target, const Vector& online, double tau);

}  // namespace mesr::nn
