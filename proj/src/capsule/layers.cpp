#include "scn/capsule/layers.hpp"

#include <cmath>
#include <sstream>

#include "scn/capsule/capsule_field.hpp"
#include "scn/capsule/capsule_ops.hpp"
#include "scn/core/errors.hpp"
#include "scn/core/ops.hpp"

namespace scn::capsule {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::sc_conv: return "sc_conv";
    case LayerKind::sc_fc: return "sc_fc";
    case LayerKind::sc_meanpool: return "sc_meanpool";
    case LayerKind::activation: return "activation";
    case LayerKind::upsample: return "upsample";
  }
  return "?";
}

std::string to_string(Activation act) {
  switch (act) {
    case Activation::none: return "none";
    case Activation::relu: return "relu";
    case Activation::sparking: return "sparking";
    case Activation::squashing: return "squashing";
  }
  return "?";
}

std::optional<LayerKind> parse_layer_kind(const std::string& s) {
  for (auto k : {LayerKind::conv, LayerKind::sc_conv, LayerKind::sc_fc, LayerKind::sc_meanpool,
                 LayerKind::activation, LayerKind::upsample}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

std::optional<Activation> parse_activation(const std::string& s) {
  for (auto a : {Activation::none, Activation::relu, Activation::sparking, Activation::squashing}) {
    if (to_string(a) == s) return a;
  }
  return std::nullopt;
}

std::size_t LayerSpec::effective_stride() const {
  if (stride) return *stride;
  return kind == LayerKind::sc_meanpool ? k : 1;
}

std::size_t LayerSpec::effective_pad() const {
  if (pad) return *pad;
  return (kind == LayerKind::conv || kind == LayerKind::sc_conv) ? k / 2 : 0;
}

std::string LayerSpec::describe() const {
  std::ostringstream os;
  os << to_string(kind);
  if (kind == LayerKind::conv || kind == LayerKind::sc_conv || kind == LayerKind::sc_fc) os << " n=" << n;
  if (kind == LayerKind::sc_conv || kind == LayerKind::sc_fc) os << " c=" << c;
  if (kind == LayerKind::conv || kind == LayerKind::sc_conv || kind == LayerKind::sc_meanpool) os << " k=" << k;
  if (stride) os << " stride=" << *stride;
  if (pad) os << " pad=" << *pad;
  if (activation != Activation::none) os << " activation=" << to_string(activation);
  return os.str();
}

std::string FieldShape::describe() const {
  std::ostringstream os;
  os << channels << 'x' << height << 'x' << width;
  if (is_capsule()) os << " (" << types << " capsules of dim " << dim << ')';
  return os.str();
}

namespace {

[[noreturn]] void bad(const LayerSpec& spec, const FieldShape& in, const std::string& why) {
  throw ShapeError("layer '" + spec.describe() + "' on input " + in.describe() + ": " + why);
}

}  // namespace

FieldShape propagate(const LayerSpec& spec, const FieldShape& in) {
  if (in.channels == 0 || in.height == 0 || in.width == 0) bad(spec, in, "empty input");
  const auto act = spec.activation;
  switch (spec.kind) {
    case LayerKind::conv: {
      if (spec.n == 0 || spec.k == 0) bad(spec, in, "conv needs n >= 1 and k >= 1");
      if (act != Activation::none && act != Activation::relu) bad(spec, in, "conv supports relu or none");
      const std::size_t stride = spec.effective_stride(), pad = spec.effective_pad();
      if (stride == 0) bad(spec, in, "stride must be positive");
      if (in.height + 2 * pad < spec.k || in.width + 2 * pad < spec.k) bad(spec, in, "window exceeds input");
      return {spec.n, (in.height + 2 * pad - spec.k) / stride + 1,
              (in.width + 2 * pad - spec.k) / stride + 1, 0, 0};
    }
    case LayerKind::sc_conv: {
      if (spec.n == 0 || spec.c == 0 || spec.k == 0) bad(spec, in, "sc_conv needs n, c, k >= 1");
      if (act == Activation::relu) bad(spec, in, "capsule layers use sparking, squashing or none");
      if (spec.c > in.channels * spec.k * spec.k) bad(spec, in, "capsule dimension exceeds i*k*k");
      const std::size_t stride = spec.effective_stride(), pad = spec.effective_pad();
      if (stride == 0) bad(spec, in, "stride must be positive");
      if (in.height + 2 * pad < spec.k || in.width + 2 * pad < spec.k) bad(spec, in, "window exceeds input");
      return {spec.n * spec.c, (in.height + 2 * pad - spec.k) / stride + 1,
              (in.width + 2 * pad - spec.k) / stride + 1, spec.n, spec.c};
    }
    case LayerKind::sc_fc: {
      if (spec.n == 0 || spec.c == 0) bad(spec, in, "sc_fc needs n, c >= 1");
      if (act == Activation::relu) bad(spec, in, "capsule layers use sparking, squashing or none");
      if (spec.c > in.channels * in.height * in.width) bad(spec, in, "capsule dimension exceeds input size");
      return {spec.n * spec.c, 1, 1, spec.n, spec.c};
    }
    case LayerKind::sc_meanpool: {
      const std::size_t k = spec.k, stride = spec.effective_stride();
      if (k == 0 || stride == 0) bad(spec, in, "window and stride must be positive");
      if (act != Activation::none) bad(spec, in, "pooling takes no activation");
      if (in.height < k || in.width < k || (in.height - k) % stride || (in.width - k) % stride) {
        bad(spec, in, "window does not tile the field (partial windows are rejected)");
      }
      FieldShape out = in;
      out.height = (in.height - k) / stride + 1;
      out.width = (in.width - k) / stride + 1;
      return out;
    }
    case LayerKind::activation: {
      if ((act == Activation::sparking || act == Activation::squashing) && !in.is_capsule()) {
        bad(spec, in, "capsule activations need a capsule input");
      }
      return in;
    }
    case LayerKind::upsample: {
      FieldShape out = in;
      out.height *= 2;
      out.width *= 2;
      return out;
    }
  }
  bad(spec, in, "unknown layer kind");
}

void Parameter::assign(Tensor t) {
  if (t.shape() != value.shape()) {
    throw ShapeError("parameter " + name + ": cannot assign " + shape_str(t.shape()) +
                     " to " + shape_str(value.shape()));
  }
  value = std::move(t);
  ++version;
}

ad::Var ForwardContext::bind(Parameter& p) {
  ad::Var v = training ? tape.variable(p.value) : tape.constant(p.value);
  bindings.emplace_back(&p, v);
  return v;
}

Layer::Layer(LayerSpec spec, FieldShape in)
    : spec_(std::move(spec)), in_(in), out_(propagate(spec_, in_)) {}

// ---------------------------------------------------------------------------

std::vector<subspace::WeightMatrix> SubspaceLayer::weight_matrices() const {
  std::vector<subspace::WeightMatrix> out;
  out.reserve(weights_.size());
  for (const auto& w : weights_) out.emplace_back(w.value);
  return out;
}

std::uint64_t SubspaceLayer::weight_version() const {
  std::uint64_t v = 0;
  for (const auto& w : weights_) v += w.version;
  return v;
}

const Tensor& SubspaceLayer::frozen_kernel(int iters) const {
  if (!frozen_ || frozen_version_ != weight_version() || frozen_iters_ != iters) {
    ad::Tape tape;
    std::vector<ad::Var> ws;
    for (const auto& w : weights_) ws.push_back(tape.constant(w.value));
    frozen_ = ops::sc_kernel(ws, iters).value();
    frozen_version_ = weight_version();
    frozen_iters_ = iters;
  }
  return *frozen_;
}

ad::Var SubspaceLayer::kernel(ForwardContext& ctx) {
  if (!ctx.training) {
    return ctx.tape.constant(frozen_kernel(ctx.newton_schulz_iters));
  }
  std::vector<ad::Var> ws;
  ws.reserve(weights_.size());
  for (auto& w : weights_) ws.push_back(ctx.bind(w));
  ++ctx.projector_builds;
  return ops::sc_kernel(ws, ctx.newton_schulz_iters);
}

ad::Var SubspaceLayer::apply_activation(ad::Var u, ForwardContext& ctx) {
  switch (spec_.activation) {
    case Activation::sparking: return ops::sparking(u, ctx.bind(*sparking_b_));
    case Activation::squashing: return ops::squashing(u);
    default: return u;
  }
}

namespace {

std::vector<Parameter> make_weights(std::size_t n, std::size_t d, std::size_t c, Rng& rng) {
  std::vector<Parameter> ws;
  ws.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    ws.push_back({"w" + std::to_string(t), subspace::WeightMatrix::random(d, c, rng).entries()});
  }
  return ws;
}

class ConvLayer final : public Layer {
 public:
  ConvLayer(const LayerSpec& spec, const FieldShape& in, Rng& rng) : Layer(spec, in) {
    const std::size_t fan_in = in.channels * spec.k * spec.k;
    weight_ = {"weight", rng.normal_tensor({spec.n, fan_in}, std::sqrt(2.0 / static_cast<double>(fan_in)))};
    bias_ = {"bias", Tensor({spec.n})};
  }

  ad::Var forward(ad::Var x, ForwardContext& ctx) override {
    ad::Var img = x;
    if (x.shape().size() == 5) img = ad::reshape(x, {x.shape()[0], in_.channels, in_.height, in_.width});
    ad::Var y = ad::conv2d(img, ctx.bind(weight_), spec_.k, spec_.effective_stride(),
                           spec_.effective_pad());
    y = ad::add_channel_bias(y, ctx.bind(bias_));
    return spec_.activation == Activation::relu ? ad::relu(y) : y;
  }

  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }

 private:
  Parameter weight_;
  Parameter bias_;
};

class ScConvLayer final : public SubspaceLayer {
 public:
  ScConvLayer(const LayerSpec& spec, const FieldShape& in, Rng& rng) : SubspaceLayer(spec, in) {
    weights_ = make_weights(spec.n, in.channels * spec.k * spec.k, spec.c, rng);
    if (spec.activation == Activation::sparking) {
      sparking_b_ = Parameter{"b", SparkingParams::initial(spec.n).b};
    }
  }

  ad::Var forward(ad::Var x, ForwardContext& ctx) override {
    ad::Var u = ops::sc_conv(x, kernel(ctx), spec_.n, spec_.k, spec_.effective_stride(),
                             spec_.effective_pad());
    return apply_activation(u, ctx);
  }

  std::vector<Parameter*> parameters() override {
    std::vector<Parameter*> ps;
    for (auto& w : weights_) ps.push_back(&w);
    if (sparking_b_) ps.push_back(&*sparking_b_);
    return ps;
  }
};

class ScFcLayer final : public SubspaceLayer {
 public:
  ScFcLayer(const LayerSpec& spec, const FieldShape& in, Rng& rng) : SubspaceLayer(spec, in) {
    weights_ = make_weights(spec.n, in.channels * in.height * in.width, spec.c, rng);
    if (spec.activation == Activation::sparking) {
      sparking_b_ = Parameter{"b", SparkingParams::initial(spec.n).b};
    }
  }

  ad::Var forward(ad::Var x, ForwardContext& ctx) override {
    return apply_activation(ops::sc_fc(x, kernel(ctx), spec_.n), ctx);
  }

  std::vector<Parameter*> parameters() override {
    std::vector<Parameter*> ps;
    for (auto& w : weights_) ps.push_back(&w);
    if (sparking_b_) ps.push_back(&*sparking_b_);
    return ps;
  }
};

class MeanPoolLayer final : public Layer {
 public:
  using Layer::Layer;

  ad::Var forward(ad::Var x, ForwardContext&) override {
    return ops::mean_pool(x, spec_.k, spec_.effective_stride());
  }
};

class ActivationLayer final : public Layer {
 public:
  ActivationLayer(const LayerSpec& spec, const FieldShape& in) : Layer(spec, in) {
    if (spec.activation == Activation::sparking) {
      b_ = Parameter{"b", SparkingParams::initial(in.types).b};
    }
  }

  ad::Var forward(ad::Var x, ForwardContext& ctx) override {
    ad::Var u = x;
    const bool capsule_act = spec_.activation == Activation::sparking ||
                             spec_.activation == Activation::squashing;
    if (capsule_act && x.shape().size() == 4) {
      u = ad::reshape(x, {x.shape()[0], in_.types, in_.dim, in_.height, in_.width});
    }
    switch (spec_.activation) {
      case Activation::relu: return ad::relu(u);
      case Activation::sparking: return ops::sparking(u, ctx.bind(*b_));
      case Activation::squashing: return ops::squashing(u);
      case Activation::none: return u;
    }
    return u;
  }

  std::vector<Parameter*> parameters() override {
    if (b_) return {&*b_};
    return {};
  }

 private:
  std::optional<Parameter> b_;
};

class UpsampleLayer final : public Layer {
 public:
  using Layer::Layer;

  ad::Var forward(ad::Var x, ForwardContext&) override { return ops::upsample_bilinear2x(x); }
};

}  // namespace

std::unique_ptr<Layer> make_layer(const LayerSpec& spec, const FieldShape& in, Rng& rng) {
  switch (spec.kind) {
    case LayerKind::conv: return std::make_unique<ConvLayer>(spec, in, rng);
    case LayerKind::sc_conv: return std::make_unique<ScConvLayer>(spec, in, rng);
    case LayerKind::sc_fc: return std::make_unique<ScFcLayer>(spec, in, rng);
    case LayerKind::sc_meanpool: return std::make_unique<MeanPoolLayer>(spec, in);
    case LayerKind::activation: return std::make_unique<ActivationLayer>(spec, in);
    case LayerKind::upsample: return std::make_unique<UpsampleLayer>(spec, in);
  }
  throw ShapeError("unknown layer kind");
}

}  // namespace scn::capsule
