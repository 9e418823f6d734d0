#include "scn/train/optimizer.hpp"

#include <cmath>

#include "scn/core/errors.hpp"

namespace scn::train {

namespace {

void check_and_init(std::span<Tensor* const> params, std::span<const Tensor> grads,
                    std::vector<Tensor>& acc) {
  if (params.size() != grads.size()) {
    throw ShapeError("optimizer: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  if (acc.empty()) {
    for (auto* p : params) acc.emplace_back(p->shape());
  }
  if (acc.size() != params.size()) throw ShapeError("optimizer state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i].shape() || params[i]->shape() != acc[i].shape()) {
      throw ShapeError("optimizer: shape mismatch for parameter " + std::to_string(i) + ": " +
                       shape_str(params[i]->shape()) + " vs gradient " +
                       shape_str(grads[i].shape()));
    }
  }
}

}  // namespace

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
               OptimizerState& state, const TrainConfig& config) {
  check_and_init(params, grads, state.first);
  check_and_init(params, grads, state.second);
  ++state.step;
  const double b1 = config.beta1, b2 = config.beta2;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  const double lr = config.learning_rate;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    Tensor& m = state.first[i];
    Tensor& v = state.second[i];
    const Tensor& g = grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] -= lr * m_hat / (std::sqrt(v_hat) + config.adam_epsilon);
    }
  }
}

void sgd_momentum_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
                       OptimizerState& state, const TrainConfig& config) {
  check_and_init(params, grads, state.velocity);
  ++state.step;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    Tensor& v = state.velocity[i];
    const Tensor& g = grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = config.momentum * v[j] + g[j];
      p[j] -= config.learning_rate * v[j];
    }
  }
}

void optimizer_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
                    OptimizerState& state, const TrainConfig& config) {
  if (config.optimizer == OptimizerKind::adam) {
    adam_step(params, grads, state, config);
  } else {
    sgd_momentum_step(params, grads, state, config);
  }
}

}  // namespace scn::train
