#include "scn/train/model.hpp"

#include <cmath>
#include <limits>

#include "scn/capsule/capsule_ops.hpp"
#include "scn/core/errors.hpp"
#include "scn/core/ops.hpp"
#include "scn/core/random.hpp"

namespace scn::train {

std::vector<FieldShape> propagate_shapes(const FieldShape& input,
                                         const std::vector<LayerSpec>& specs) {
  std::vector<FieldShape> shapes;
  shapes.reserve(specs.size());
  FieldShape cur = input;
  for (const auto& spec : specs) {
    cur = capsule::propagate(spec, cur);
    shapes.push_back(cur);
  }
  return shapes;
}

Model::Model(FieldShape input, std::vector<LayerSpec> specs, std::uint64_t seed)
    : input_(input), specs_(std::move(specs)) {
  if (specs_.empty()) throw ShapeError("model needs at least one layer");
  Rng rng(seed);
  FieldShape cur = input_;
  for (const auto& spec : specs_) {
    layers_.push_back(capsule::make_layer(spec, cur, rng));
    cur = layers_.back()->output_shape();
  }
  if (!cur.is_capsule() || cur.height != 1 || cur.width != 1) {
    throw ShapeError("model must end in a 1x1 capsule field, got " + cur.describe());
  }
}

std::size_t Model::num_classes() const { return layers_.back()->output_shape().types; }

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_) {
    for (auto* p : l->parameters()) out.push_back(p);
  }
  return out;
}

std::vector<std::string> Model::parameter_names() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    for (auto* p : layers_[i]->parameters()) out.push_back("layer" + std::to_string(i) + "." + p->name);
  }
  return out;
}

namespace {

double mean_capsule_norm(const Tensor& v, const FieldShape& s) {
  const std::size_t spatial = s.height * s.width;
  const std::size_t batch = v.size() / (s.channels * spatial);
  const std::size_t count = batch * s.types * spatial;
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < s.types; ++t)
      for (std::size_t p = 0; p < spatial; ++p) {
        const std::size_t base = ((b * s.types + t) * s.dim) * spatial + p;
        double sq = 0.0;
        for (std::size_t i = 0; i < s.dim; ++i) sq += v[base + i * spatial] * v[base + i * spatial];
        total += std::sqrt(sq);
      }
  return count ? total / static_cast<double>(count) : 0.0;
}

}  // namespace

Model::Output Model::forward(ForwardContext& ctx, const Tensor& x, bool collect_stats) {
  if (x.rank() != 4 || x.dim(1) != input_.channels || x.dim(2) != input_.height ||
      x.dim(3) != input_.width) {
    throw ShapeError("model expects (B," + input_.describe() + ") input, got " +
                     shape_str(x.shape()));
  }
  Output out;
  ad::Var h = ctx.tape.constant(x);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string where = "layer " + std::to_string(i) + " (" + specs_[i].describe() + ")";
    try {
      h = layers_[i]->forward(h, ctx);
    } catch (const DegenerateBasisError& e) {
      throw DegenerateBasisError(where + ": " + e.what());
    } catch (const NumericError& e) {
      throw NumericError(where + ": " + e.what());
    }
    const Tensor& v = h.value();
    if (!v.all_finite()) throw NumericError("non-finite values in output of " + where);
    if (collect_stats) {
      const FieldShape& s = layers_[i]->output_shape();
      out.mean_norms.push_back(s.is_capsule() ? mean_capsule_norm(v, s)
                                              : std::numeric_limits<double>::quiet_NaN());
    }
  }
  const FieldShape& head = layers_.back()->output_shape();
  if (h.shape().size() != 5) {
    h = ad::reshape(h, {x.dim(0), head.types, head.dim, 1, 1});
  }
  out.capsules = h;
  out.norms = ad::reshape(capsule::ops::capsule_norms(h), {x.dim(0), head.types});
  return out;
}

Tensor Model::class_norms(const Tensor& x, int newton_schulz_iters) {
  ad::Tape tape;
  ForwardContext ctx(tape);
  ctx.training = false;
  ctx.newton_schulz_iters = newton_schulz_iters;
  return forward(ctx, x).norms.value();
}

std::vector<int> Model::predict(const Tensor& x, int newton_schulz_iters) {
  const Tensor norms = class_norms(x, newton_schulz_iters);
  const std::size_t n = norms.dim(1);
  std::vector<int> out(norms.dim(0));
  for (std::size_t b = 0; b < out.size(); ++b) {
    std::size_t best = 0;
    for (std::size_t t = 1; t < n; ++t) {
      if (norms.at(b, t) > norms.at(b, best)) best = t;
    }
    out[b] = static_cast<int>(best);
  }
  return out;
}

}  // namespace scn::train
