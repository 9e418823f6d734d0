#ifndef SCN_TRAIN_OPTIMIZER_HPP
#define SCN_TRAIN_OPTIMIZER_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "scn/core/tensor.hpp"
#include "scn/train/config.hpp"

namespace scn::train {

/// Per-parameter accumulators; shapes mirror the parameters.
struct OptimizerState {
  std::vector<Tensor> first;     // Adam m
  std::vector<Tensor> second;    // Adam v
  std::vector<Tensor> velocity;  // momentum SGD
  std::uint64_t step = 0;
};

/// Adam with bias correction.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
               OptimizerState& state, const TrainConfig& config);

/// v <- momentum * v + g; p <- p - lr * v.
void sgd_momentum_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
                       OptimizerState& state, const TrainConfig& config);

void optimizer_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
                    OptimizerState& state, const TrainConfig& config);

}  // namespace scn::train

#endif  // SCN_TRAIN_OPTIMIZER_HPP
