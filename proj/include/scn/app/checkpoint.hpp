#ifndef SCN_APP_CHECKPOINT_HPP
#define SCN_APP_CHECKPOINT_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scn/train/config.hpp"
#include "scn/train/model.hpp"
#include "scn/train/optimizer.hpp"

namespace scn::app {

inline constexpr int kCheckpointVersion = 1;

/// Text header (version, architecture, shapes, metrics) followed by the
/// parameter and optimizer tensors as little-endian float64 blobs.
struct Checkpoint {
  capsule::FieldShape input;
  std::vector<capsule::LayerSpec> architecture;
  std::uint64_t seed = 0;
  int newton_schulz_iters = subspace::kDefaultNewtonSchulzIters;
  std::vector<std::pair<std::string, double>> metrics;
  std::vector<std::string> param_names;
  std::vector<Tensor> params;
  std::optional<train::OptimizerKind> optimizer;
  train::OptimizerState state;
};

Checkpoint capture(train::Model& model, const train::TrainConfig& config,
                   const train::OptimizerState* state = nullptr,
                   std::vector<std::pair<std::string, double>> metrics = {});

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Throws VersionError for another format version and IoError for anything malformed.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rebuilds the model and copies the stored parameters into it.
train::Model restore_model(const Checkpoint& ckpt);

}  // namespace scn::app

#endif  // SCN_APP_CHECKPOINT_HPP
