#ifndef SCN_TRAIN_CONFIG_HPP
#define SCN_TRAIN_CONFIG_HPP

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "scn/capsule/layers.hpp"
#include "scn/subspace/projector.hpp"

namespace scn::train {

enum class OptimizerKind { adam, sgd_momentum };

std::string to_string(OptimizerKind kind);

/// Optimizer, run and architecture settings. Defaults follow the Adam
/// recipe (lr 3e-4, beta1 0.5, beta2 0.99) and 20 Newton-Schulz steps.
struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 0.0003;
  double beta1 = 0.5;
  double beta2 = 0.99;
  double adam_epsilon = 1e-8;
  double momentum = 0.9;
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  int newton_schulz_iters = subspace::kDefaultNewtonSchulzIters;
  capsule::FieldShape input;
  std::vector<capsule::LayerSpec> architecture;
  std::size_t train_limit = 0;  // 0 = use every example
  std::size_t test_limit = 0;

  /// Throws ConfigError for out-of-range hyperparameters.
  void validate() const;
};

}  // namespace scn::train

#endif  // SCN_TRAIN_CONFIG_HPP
