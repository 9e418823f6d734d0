#ifndef SCN_CAPSULE_LAYERS_HPP
#define SCN_CAPSULE_LAYERS_HPP

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scn/core/autodiff.hpp"
#include "scn/core/random.hpp"
#include "scn/core/tensor.hpp"
#include "scn/subspace/projector.hpp"

namespace scn::capsule {

enum class LayerKind { conv, sc_conv, sc_fc, sc_meanpool, activation, upsample };
enum class Activation { none, relu, sparking, squashing };

std::string to_string(LayerKind kind);
std::string to_string(Activation act);
std::optional<LayerKind> parse_layer_kind(const std::string& s);
std::optional<Activation> parse_activation(const std::string& s);

/// Declarative layer description. For conv, n is the output channel count;
/// for the sc_* kinds (n, c, k, k) is the capsule tuple.
struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t k = 1;
  std::optional<std::size_t> stride;
  std::optional<std::size_t> pad;
  Activation activation = Activation::none;

  /// Defaults: stride k for mean pooling, 1 otherwise.
  std::size_t effective_stride() const;
  /// Defaults: floor(k/2) for convolutions, 0 otherwise.
  std::size_t effective_pad() const;

  /// One-line `kind key=value ...` form used by configs and checkpoints.
  std::string describe() const;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Per-example shape flowing between layers. When `types` is non-zero the
/// channels are grouped as types x dim capsules.
struct FieldShape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t types = 0;
  std::size_t dim = 0;

  bool is_capsule() const { return types > 0; }
  std::string describe() const;
  friend bool operator==(const FieldShape&, const FieldShape&) = default;
};

/// Output shape of `spec` applied to `in`; throws ShapeError on bad geometry.
FieldShape propagate(const LayerSpec& spec, const FieldShape& in);

struct Parameter {
  std::string name;
  Tensor value;
  std::uint64_t version = 0;

  void assign(Tensor t);
};

/// Per-forward state: the tape, parameter bindings and instrumentation.
struct ForwardContext {
  explicit ForwardContext(ad::Tape& t) : tape(t) {}

  ad::Tape& tape;
  /// Training builds projectors on the tape; inference may reuse frozen kernels.
  bool training = true;
  int newton_schulz_iters = subspace::kDefaultNewtonSchulzIters;
  std::vector<std::pair<Parameter*, ad::Var>> bindings;
  std::size_t projector_builds = 0;

  /// Leaf variable (training) or constant (inference) for a parameter.
  ad::Var bind(Parameter& p);
};

class Layer {
 public:
  Layer(LayerSpec spec, FieldShape in);
  virtual ~Layer() = default;

  virtual ad::Var forward(ad::Var x, ForwardContext& ctx) = 0;
  virtual std::vector<Parameter*> parameters() { return {}; }

  const LayerSpec& spec() const { return spec_; }
  const FieldShape& input_shape() const { return in_; }
  const FieldShape& output_shape() const { return out_; }

 protected:
  LayerSpec spec_;
  FieldShape in_;
  FieldShape out_;
};

/// Builds and randomly initializes a layer for the given input shape.
std::unique_ptr<Layer> make_layer(const LayerSpec& spec, const FieldShape& in, Rng& rng);

/// Subspace capsule layers expose their weight matrices for inspection.
class SubspaceLayer : public Layer {
 public:
  using Layer::Layer;

  std::vector<subspace::WeightMatrix> weight_matrices() const;
  /// Pc kernel built from the current weights, cached until a weight changes.
  const Tensor& frozen_kernel(int iters) const;

 protected:
  ad::Var kernel(ForwardContext& ctx);
  ad::Var apply_activation(ad::Var u, ForwardContext& ctx);

  std::vector<Parameter> weights_;
  std::optional<Parameter> sparking_b_;

 private:
  std::uint64_t weight_version() const;

  mutable std::optional<Tensor> frozen_;
  mutable std::uint64_t frozen_version_ = 0;
  mutable int frozen_iters_ = 0;
};

}  // namespace scn::capsule

#endif  // SCN_CAPSULE_LAYERS_HPP
