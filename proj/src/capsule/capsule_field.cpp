#include "scn/capsule/capsule_field.hpp"

#include <cmath>

#include "scn/capsule/capsule_ops.hpp"
#include "scn/core/errors.hpp"

namespace scn::capsule {

CapsuleField::CapsuleField(Tensor values) : values_(std::move(values)) {
  if (values_.rank() != 5) {
    throw ShapeError("capsule field must be (B,n,c,H,W), got " + shape_str(values_.shape()));
  }
}

std::vector<double> CapsuleField::capsule(std::size_t b, std::size_t t, std::size_t y,
                                          std::size_t x) const {
  const std::size_t spatial = height() * width();
  const std::size_t base = ((b * types() + t) * dim()) * spatial + y * width() + x;
  std::vector<double> out(dim());
  for (std::size_t i = 0; i < dim(); ++i) out[i] = values_[base + i * spatial];
  return out;
}

SparkingParams SparkingParams::initial(std::size_t types) {
  return {Tensor({types}, kInitialSparkingB)};
}

namespace {

std::vector<ad::Var> weight_constants(ad::Tape& tape, std::span<const WeightMatrix> weights) {
  std::vector<ad::Var> vars;
  vars.reserve(weights.size());
  for (const auto& w : weights) vars.push_back(tape.constant(w.entries()));
  return vars;
}

}  // namespace

CapsuleField sc_fc_forward(const Tensor& x, std::span<const WeightMatrix> weights, int iters) {
  if (x.rank() != 2) throw ShapeError("sc_fc_forward expects (batch, d), got " + shape_str(x.shape()));
  ad::Tape tape;
  ad::Var kernel = ops::sc_kernel(weight_constants(tape, weights), iters);
  return CapsuleField(ops::sc_fc(tape.constant(x), kernel, weights.size()).value());
}

CapsuleField sc_conv_forward(const Tensor& x, std::span<const WeightMatrix> weights,
                             std::size_t k, std::size_t stride, std::size_t pad, int iters) {
  if (x.rank() != 4) throw ShapeError("sc_conv_forward expects (B,i,H,W), got " + shape_str(x.shape()));
  for (const auto& w : weights) {
    if (w.d() != x.dim(1) * k * k) {
      throw ShapeError("sc_conv_forward: weight rows " + std::to_string(w.d()) +
                       " != i*k*k = " + std::to_string(x.dim(1) * k * k));
    }
  }
  ad::Tape tape;
  ad::Var kernel = ops::sc_kernel(weight_constants(tape, weights), iters);
  return CapsuleField(
      ops::sc_conv(tape.constant(x), kernel, weights.size(), k, stride, pad).value());
}

CapsuleField sparking(const CapsuleField& u, const SparkingParams& params) {
  ad::Tape tape;
  return CapsuleField(
      ops::sparking(tape.constant(u.values()), tape.constant(params.b)).value());
}

CapsuleField squashing(const CapsuleField& u) {
  ad::Tape tape;
  return CapsuleField(ops::squashing(tape.constant(u.values())).value());
}

CapsuleField sc_mean_pool(const CapsuleField& f, std::size_t window, std::size_t stride) {
  ad::Tape tape;
  return CapsuleField(ops::mean_pool(tape.constant(f.values()), window, stride).value());
}

Tensor capsule_norms(const CapsuleField& f) {
  ad::Tape tape;
  return ops::capsule_norms(tape.constant(f.values())).value();
}

CapsuleSelection capsule_select(const CapsuleField& f) {
  if (f.height() != 1 || f.width() != 1) {
    throw ShapeError("capsule_select needs a 1x1 spatial field");
  }
  const Tensor norms = capsule_norms(f);
  CapsuleSelection out{std::vector<std::size_t>(f.batch(), 0), Tensor({f.batch(), f.dim()})};
  for (std::size_t b = 0; b < f.batch(); ++b) {
    std::size_t best = 0;
    for (std::size_t t = 1; t < f.types(); ++t) {
      if (norms[b * f.types() + t] > norms[b * f.types() + best]) best = t;
    }
    out.index[b] = best;
    const auto v = f.capsule(b, best);
    for (std::size_t i = 0; i < f.dim(); ++i) out.vectors.at(b, i) = v[i];
  }
  return out;
}

}  // namespace scn::capsule
