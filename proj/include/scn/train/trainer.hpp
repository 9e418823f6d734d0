#ifndef SCN_TRAIN_TRAINER_HPP
#define SCN_TRAIN_TRAINER_HPP

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "scn/train/config.hpp"
#include "scn/train/dataset.hpp"
#include "scn/train/model.hpp"
#include "scn/train/optimizer.hpp"

namespace scn::train {

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_err = 0.0;  // measured on the fly during the epoch
  double test_err = 0.0;   // NaN when no test set is given
  double seconds = 0.0;
  std::vector<double> mean_norms;  // one per capsule-producing layer, in order
};

struct StepResult {
  double loss = 0.0;
  std::size_t errors = 0;
  std::size_t projector_builds = 0;
  std::vector<double> mean_norms;
};

/// One forward/backward/update on a batch. Projectors are built once per
/// subspace layer and shared by the forward and backward passes.
StepResult train_step(Model& model, const Tensor& images, std::span<const int> labels,
                      OptimizerState& state, const TrainConfig& config);

using EpochCallback = std::function<void(const EpochMetrics&)>;

struct TrainResult {
  std::vector<EpochMetrics> epochs;
  OptimizerState state;
};

/// Seeded-shuffle minibatch training. Throws NumericError naming the
/// offending layer if the loss or any activation turns non-finite.
TrainResult train(Model& model, const Dataset& train_set, const TrainConfig& config,
                  const Dataset* test_set = nullptr, const EpochCallback& on_epoch = {},
                  OptimizerState state = {});

/// Fraction of examples whose largest-norm class differs from the label.
double evaluate(Model& model, const Dataset& data,
                int newton_schulz_iters = subspace::kDefaultNewtonSchulzIters,
                std::size_t batch_size = 250);

/// Fraction of mismatches between predictions and labels.
double error_rate(std::span<const int> predicted, std::span<const int> labels);

std::string metrics_csv_header(const Model& model);
std::string metrics_csv_row(const EpochMetrics& m);

}  // namespace scn::train

#endif  // SCN_TRAIN_TRAINER_HPP
