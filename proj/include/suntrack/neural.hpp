#pragma once

// Small dense network (ReLU hidden layers, identity output) with exact
// reverse-mode gradients, SGD/Adam updates and a finite-difference checker.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "suntrack/random.hpp"

namespace suntrack {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Parameter-shaped container; Mlp and Gradients share it.
struct ParameterSet {
  std::vector<Matrix> weights;  // weights[l] is (out x in)
  std::vector<Vector> biases;

  std::size_t size() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  bool same_shape(const ParameterSet& o) const {
    if (weights.size() != o.weights.size() || biases.size() != o.biases.size()) return false;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].rows() != o.weights[l].rows() || weights[l].cols() != o.weights[l].cols() ||
          biases[l].size() != o.biases[l].size()) {
        return false;
      }
    }
    return true;
  }

  bool all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    }
    return true;
  }

  // Flat view in a fixed order: layer by layer, weights (column-major) then biases.
  double& at(std::size_t flat) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      const auto nw = static_cast<std::size_t>(weights[l].size());
      if (flat < nw) return weights[l].data()[flat];
      flat -= nw;
      const auto nb = static_cast<std::size_t>(biases[l].size());
      if (flat < nb) return biases[l].data()[flat];
      flat -= nb;
    }
    throw std::out_of_range("parameter index out of range");
  }
  double at(std::size_t flat) const { return const_cast<ParameterSet*>(this)->at(flat); }

  void set_zero() {
    for (auto& w : weights) w.setZero();
    for (auto& b : biases) b.setZero();
  }

  ParameterSet& operator+=(const ParameterSet& o) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] += o.weights[l];
      biases[l] += o.biases[l];
    }
    return *this;
  }

  ParameterSet& operator*=(double s) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] *= s;
      biases[l] *= s;
    }
    return *this;
  }

  bool operator==(const ParameterSet& o) const {
    if (!same_shape(o)) return false;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l] != o.weights[l] || biases[l] != o.biases[l]) return false;
    }
    return true;
  }
};

using Gradients = ParameterSet;

class Mlp {
 public:
  Mlp() = default;

  // Zero-initialized network with the given layer sizes.
  explicit Mlp(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) {
    validate_sizes(sizes_);
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      params_.weights.emplace_back(Matrix::Zero(sizes_[l + 1], sizes_[l]));
      params_.biases.emplace_back(Vector::Zero(sizes_[l + 1]));
    }
  }

  Mlp(std::vector<int> layer_sizes, ParameterSet params) : sizes_(std::move(layer_sizes)) {
    validate_sizes(sizes_);
    Mlp shape(sizes_);
    if (!shape.params_.same_shape(params)) {
      throw std::invalid_argument("parameter shapes do not chain with layer_sizes");
    }
    if (!params.all_finite()) throw std::invalid_argument("parameters must be finite");
    params_ = std::move(params);
  }

  const std::vector<int>& layer_sizes() const { return sizes_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  std::size_t num_layers() const { return params_.weights.size(); }

  const ParameterSet& params() const { return params_; }
  ParameterSet& params() { return params_; }

  Gradients zero_gradients() const {
    Gradients g = params_;
    g.set_zero();
    return g;
  }

  bool operator==(const Mlp& o) const { return sizes_ == o.sizes_ && params_ == o.params_; }

 private:
  static void validate_sizes(const std::vector<int>& sizes) {
    if (sizes.size() < 2) throw std::invalid_argument("an Mlp needs at least 2 layer sizes");
    for (int s : sizes) {
      if (s < 1) throw std::invalid_argument("layer sizes must be >= 1");
    }
  }

  std::vector<int> sizes_;
  ParameterSet params_;
};

// Glorot-uniform weights, zero biases.
inline Mlp mlp_new(const std::vector<int>& layer_sizes, std::uint64_t seed) {
  Mlp m(layer_sizes);
  Rng rng(seed);
  for (auto& w : m.params().weights) {
    const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = rng.uniform(-bound, bound);
    }
  }
  return m;
}

namespace detail {

inline void check_input(const Mlp& m, const Vector& x) {
  if (x.size() != m.input_size()) {
    throw std::invalid_argument("input has " + std::to_string(x.size()) + " entries, network expects " +
                                std::to_string(m.input_size()));
  }
}

}  // namespace detail

inline Vector forward(const Mlp& m, const Vector& x) {
  detail::check_input(m, x);
  const auto& p = m.params();
  Vector h = x;
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    Vector z = p.weights[l] * h + p.biases[l];
    if (l + 1 < m.num_layers()) z = z.cwiseMax(0.0);
    h = std::move(z);
  }
  return h;
}

// Accumulates d(loss)/d(params) for one input into `grads`.
inline void backward_accumulate(const Mlp& m, const Vector& x, const Vector& d_out,
                                Gradients& grads) {
  detail::check_input(m, x);
  if (d_out.size() != m.output_size()) {
    throw std::invalid_argument("output cotangent has wrong size");
  }
  if (!grads.same_shape(m.params())) throw std::invalid_argument("gradient shape mismatch");
  const auto& p = m.params();
  const std::size_t layers = m.num_layers();

  std::vector<Vector> acts;  // acts[l] is the input to layer l
  acts.reserve(layers);
  acts.push_back(x);
  for (std::size_t l = 0; l + 1 < layers; ++l) {
    acts.push_back((p.weights[l] * acts.back() + p.biases[l]).cwiseMax(0.0));
  }

  Vector delta = d_out;
  for (std::size_t l = layers; l-- > 0;) {
    grads.weights[l].noalias() += delta * acts[l].transpose();
    grads.biases[l] += delta;
    if (l == 0) break;
    Vector back = p.weights[l].transpose() * delta;
    // ReLU subgradient at 0 is 0; acts[l] == 0 exactly when the unit is off.
    for (Eigen::Index i = 0; i < back.size(); ++i) {
      if (acts[l][i] <= 0.0) back[i] = 0.0;
    }
    delta = std::move(back);
  }
}

inline Gradients backward(const Mlp& m, const Vector& x, const Vector& d_out) {
  Gradients g = m.zero_gradients();
  backward_accumulate(m, x, d_out, g);
  return g;
}

struct AdamMoments {
  ParameterSet first;
  ParameterSet second;
  std::int64_t t = 0;
};

struct OptimState {
  double learning_rate = 1e-3;
  std::optional<AdamMoments> adam;  // empty means plain SGD

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  static OptimState sgd(double lr) { return {lr, std::nullopt}; }

  static OptimState adam_for(const Mlp& m, double lr) {
    AdamMoments mo{m.zero_gradients(), m.zero_gradients(), 0};
    return {lr, std::move(mo)};
  }
};

inline void step(Mlp& m, const Gradients& g, OptimState& o) {
  auto& p = m.params();
  if (!g.same_shape(p)) throw std::invalid_argument("gradient shape mismatch");
  if (!o.adam) {
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
      p.weights[l] -= o.learning_rate * g.weights[l];
      p.biases[l] -= o.learning_rate * g.biases[l];
    }
    return;
  }
  auto& mo = *o.adam;
  if (!mo.first.same_shape(p) || !mo.second.same_shape(p)) {
    throw std::invalid_argument("optimizer moments do not match the network");
  }
  ++mo.t;
  const double c1 = 1.0 - std::pow(OptimState::kBeta1, static_cast<double>(mo.t));
  const double c2 = 1.0 - std::pow(OptimState::kBeta2, static_cast<double>(mo.t));
  const auto update = [&](auto& param, const auto& grad, auto& m1, auto& m2) {
    m1 = OptimState::kBeta1 * m1 + (1.0 - OptimState::kBeta1) * grad;
    m2 = OptimState::kBeta2 * m2 + (1.0 - OptimState::kBeta2) * grad.cwiseProduct(grad);
    param.array() -= o.learning_rate * (m1.array() / c1) /
                     ((m2.array() / c2).sqrt() + OptimState::kEpsilon);
  };
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    update(p.weights[l], g.weights[l], mo.first.weights[l], mo.second.weights[l]);
    update(p.biases[l], g.biases[l], mo.first.biases[l], mo.second.biases[l]);
  }
}

// Scalar loss of the network output and its gradient with respect to that output.
struct LossAndGrad {
  double value;
  Vector d_out;
};
using OutputLoss = std::function<LossAndGrad(const Vector&)>;

struct GradientCheckOptions {
  double step = 1e-5;
  std::size_t max_params = 0;  // 0 checks every parameter
  std::uint64_t subset_seed = 0;
};

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b));
}

// Compares an analytic gradient against central differences of `loss` over
// every parameter, or over a seeded random subset when max_params is set and
// smaller than the parameter count. Returns the maximum relative error.
inline double gradient_check(const Mlp& m, const std::function<double(const Mlp&)>& loss,
                             const Gradients& analytic, const GradientCheckOptions& opt = {}) {
  if (!analytic.same_shape(m.params())) throw std::invalid_argument("gradient shape mismatch");
  const std::size_t total = m.params().size();
  std::vector<std::size_t> indices;
  if (opt.max_params == 0 || opt.max_params >= total) {
    indices.resize(total);
    for (std::size_t i = 0; i < total; ++i) indices[i] = i;
  } else {
    Rng rng(opt.subset_seed);
    for (std::size_t i = 0; i < opt.max_params; ++i) indices.push_back(rng.index(total));
  }
  Mlp probe = m;
  double worst = 0.0;
  for (const std::size_t i : indices) {
    const double original = probe.params().at(i);
    probe.params().at(i) = original + opt.step;
    const double up = loss(probe);
    probe.params().at(i) = original - opt.step;
    const double down = loss(probe);
    probe.params().at(i) = original;
    const double numeric = (up - down) / (2.0 * opt.step);
    worst = std::max(worst, relative_error(analytic.at(i), numeric));
  }
  return worst;
}

inline double gradient_check(const Mlp& m, const Vector& x, const OutputLoss& loss,
                             const GradientCheckOptions& opt = {}) {
  const Gradients analytic = backward(m, x, loss(forward(m, x)).d_out);
  return gradient_check(
      m, [&](const Mlp& p) { return loss(forward(p, x)).value; }, analytic, opt);
}

}  // namespace suntrack
