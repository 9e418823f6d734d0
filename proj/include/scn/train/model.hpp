#ifndef SCN_TRAIN_MODEL_HPP
#define SCN_TRAIN_MODEL_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "scn/capsule/layers.hpp"
#include "scn/core/autodiff.hpp"
#include "scn/core/tensor.hpp"

namespace scn::train {

using capsule::FieldShape;
using capsule::ForwardContext;
using capsule::LayerSpec;
using capsule::Parameter;

/// Shape of every layer's output, in order; throws ShapeError on bad geometry.
std::vector<FieldShape> propagate_shapes(const FieldShape& input,
                                         const std::vector<LayerSpec>& specs);

/// A feed-forward stack of layers ending in a 1x1 capsule head whose
/// per-type norms are the class scores.
class Model {
 public:
  Model(FieldShape input, std::vector<LayerSpec> specs, std::uint64_t seed);

  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const FieldShape& input_shape() const { return input_; }
  const std::vector<LayerSpec>& specs() const { return specs_; }
  std::size_t num_layers() const { return layers_.size(); }
  capsule::Layer& layer(std::size_t i) { return *layers_.at(i); }
  const capsule::Layer& layer(std::size_t i) const { return *layers_.at(i); }
  std::size_t num_classes() const;

  /// Parameters in declaration order, with names "layer<i>.<name>".
  std::vector<Parameter*> parameters();
  std::vector<std::string> parameter_names() const;

  struct Output {
    ad::Var capsules;                // final capsule field
    ad::Var norms;                   // (B, n) class scores
    std::vector<double> mean_norms;  // per layer; NaN for non-capsule layers
  };

  /// Runs every layer on `x` (B, C, H, W). Throws NumericError naming the
  /// first layer whose output is not finite.
  Output forward(ForwardContext& ctx, const Tensor& x, bool collect_stats = false);

  /// Class norms (B, n) in inference mode using frozen projector kernels.
  Tensor class_norms(const Tensor& x, int newton_schulz_iters);
  std::vector<int> predict(const Tensor& x, int newton_schulz_iters);

 private:
  FieldShape input_;
  std::vector<LayerSpec> specs_;
  std::vector<std::unique_ptr<capsule::Layer>> layers_;
};

}  // namespace scn::train

#endif  // SCN_TRAIN_MODEL_HPP
