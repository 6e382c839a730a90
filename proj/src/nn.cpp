#include "mesr/nn.hpp"

#include <cmath>
#include <string>

namespace mesr::nn {

Mlp::Mlp(std::vector<int> layer_sizes, OutputActivation output)
    : sizes_(std::move(layer_sizes)), output_(output) {
  if (sizes_.size() < 2) {
    throw std::invalid_argument("an MLP needs at least input and output sizes");
  }
  for (int s : sizes_) {
    if (s <= 0) {
      throw std::invalid_argument("layer sizes must be positive");
    }
  }
  build_offsets();
  params_ = Vector::Zero(static_cast<Eigen::Index>(offsets_.back()));
}

Mlp::Mlp(std::vector<int> layer_sizes, OutputActivation output, std::mt19937_64& rng)
    : Mlp(std::move(layer_sizes), output) {
  for (std::size_t l = 0; l < layer_count(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = offsets_[l]; i < offsets_[l + 1]; ++i) {
      params_[static_cast<Eigen::Index>(i)] = dist(rng);
    }
  }
}

void Mlp::build_offsets() {
  offsets_.assign(1, 0);
  for (std::size_t l = 0; l < layer_count(); ++l) {
    const auto in = static_cast<std::size_t>(sizes_[l]);
    const auto out = static_cast<std::size_t>(sizes_[l + 1]);
    offsets_.push_back(offsets_.back() + out * in + out);
  }
}

Eigen::Map<const Matrix> Mlp::weights(std::size_t layer) const {
  return {params_.data() + offsets_[layer], sizes_[layer + 1], sizes_[layer]};
}

Eigen::Map<const Vector> Mlp::bias(std::size_t layer) const {
  const auto w = static_cast<std::size_t>(sizes_[layer + 1]) * static_cast<std::size_t>(sizes_[layer]);
  return {params_.data() + offsets_[layer] + w, sizes_[layer + 1]};
}

Matrix Mlp::forward(const Matrix& x) const {
  Tape unused;
  return forward(x, unused);
}

Vector Mlp::forward(std::span<const double> x) const {
  Eigen::Map<const Vector> col(x.data(), static_cast<Eigen::Index>(x.size()));
  return forward(Matrix(col)).col(0);
}

Matrix Mlp::forward(const Matrix& x, Tape& tape) const {
  if (x.rows() != input_size()) {
    throw std::invalid_argument("MLP input has " + std::to_string(x.rows()) + " rows, expected " +
                                std::to_string(input_size()));
  }
  tape.inputs.clear();
  tape.activations.clear();
  tape.inputs_f.clear();
  tape.activations_f.clear();
  if (precision_ == Precision::float32) {
    return forward_impl<float>(x, tape.inputs_f, tape.activations_f);
  }
  return forward_impl<double>(x, tape.inputs, tape.activations);
}

template <class S>
Matrix Mlp::forward_impl(const Matrix& x,
                         std::vector<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>>& inputs,
                         std::vector<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>>& activations) const {
  using M = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  M h = x.cast<S>();
  for (std::size_t l = 0; l < layer_count(); ++l) {
    M z(sizes_[l + 1], h.cols());
    z.noalias() = weights(l).cast<S>() * h;
    z.colwise() += bias(l).cast<S>();
    inputs.push_back(std::move(h));
    if (l + 1 < layer_count()) {
      h = z.cwiseMax(S(0));
    } else if (output_ == OutputActivation::tanh) {
      h = z.array().tanh().matrix();
    } else {
      h = std::move(z);
    }
    activations.push_back(h);
  }
  return h.template cast<double>();
}

Gradients Mlp::backward(const Tape& tape, const Matrix& upstream) const {
  const bool single = precision_ == Precision::float32;
  const std::size_t recorded = single ? tape.inputs_f.size() : tape.inputs.size();
  if (!tape.recorded() || recorded != layer_count()) {
    throw std::logic_error("backward called without a recorded forward pass");
  }
  const Eigen::Index cols = single ? tape.inputs_f.front().cols() : tape.inputs.front().cols();
  if (upstream.rows() != output_size() || upstream.cols() != cols) {
    throw std::invalid_argument("upstream gradient shape does not match the forward pass");
  }
  return single ? backward_impl<float>(tape.inputs_f, tape.activations_f, upstream)
                : backward_impl<double>(tape.inputs, tape.activations, upstream);
}

template <class S>
Gradients Mlp::backward_impl(const std::vector<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>>& inputs,
                             const std::vector<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>>& activations,
                             const Matrix& upstream) const {
  using M = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  Gradients g;
  g.params = Vector::Zero(params_.size());
  M delta = upstream.cast<S>();
  M dw;
  for (std::size_t idx = layer_count(); idx-- > 0;) {
    const M& out = activations[idx];
    if (idx + 1 < layer_count()) {
      delta.array() *= (out.array() > S(0)).template cast<S>();
    } else if (output_ == OutputActivation::tanh) {
      delta.array() *= S(1) - out.array().square();
    }
    const auto in_size = sizes_[idx];
    const auto out_size = sizes_[idx + 1];
    Eigen::Map<Matrix> gw(g.params.data() + offsets_[idx], out_size, in_size);
    Eigen::Map<Vector> gb(g.params.data() + offsets_[idx] +
                              static_cast<std::size_t>(out_size) * static_cast<std::size_t>(in_size),
                          out_size);
    dw.resize(out_size, in_size);
    dw.noalias() = delta * inputs[idx].transpose();
    gw = dw.template cast<double>();
    gb = delta.rowwise().sum().template cast<double>();
    M next(in_size, delta.cols());
    next.noalias() = weights(idx).cast<S>().transpose() * delta;
    delta = std::move(next);
  }
  g.input = delta.template cast<double>();
  return g;
}

void adam_step(Vector& params, const Vector& grads, AdamState& state) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw std::invalid_argument("Adam: parameter, gradient and moment shapes differ");
  }
  if (!grads.allFinite()) {
    throw std::domain_error("Adam: non-finite gradient");
  }
  state.step += 1;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params.array() -= state.lr * (state.m.array() / c1) /
                    ((state.v.array() / c2).sqrt() + state.eps);
}

void polyak_update(Vector& target, const Vector& online, double tau) {
  if (target.size() != online.size()) {
    throw std::invalid_argument("Polyak update: shape mismatch");
  }
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw std::invalid_argument("Polyak update: tau outside [0, 1]");
  }
  if (tau == 1.0) {
    target = online;
    return;
  }
  target = tau * online + (1.0 - tau) * target;
}

}  // namespace mesr::nn
