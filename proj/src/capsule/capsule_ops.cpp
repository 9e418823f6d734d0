#include "scn/capsule/capsule_ops.hpp"

#include <algorithm>
#include <cmath>

#include "scn/core/errors.hpp"
#include "scn/core/ops.hpp"

namespace scn::capsule::ops {

namespace {

struct FieldDims {
  std::size_t batch, types, dim, spatial;
};

FieldDims field_dims(const Tensor& u, const char* what) {
  if (u.rank() != 5) {
    throw ShapeError(std::string(what) + " expects a (B,n,c,H,W) field, got " +
                     shape_str(u.shape()));
  }
  return {u.dim(0), u.dim(1), u.dim(2), u.dim(3) * u.dim(4)};
}

// Calls fn(base, stride) for every capsule; components live at
// base + i * stride for i in [0, dim).
template <typename Fn>
void for_each_capsule(const FieldDims& f, Fn&& fn) {
  for (std::size_t b = 0; b < f.batch; ++b)
    for (std::size_t t = 0; t < f.types; ++t)
      for (std::size_t s = 0; s < f.spatial; ++s)
        fn(b, t, s, ((b * f.types + t) * f.dim) * f.spatial + s);
}

}  // namespace

ad::Var sparking(ad::Var u, ad::Var b) {
  const Tensor& uv = u.value();
  const FieldDims f = field_dims(uv, "sparking");
  if (b.value().size() != f.types) {
    throw ShapeError("sparking: need one b per capsule type (" + std::to_string(f.types) +
                     "), got " + shape_str(b.shape()));
  }
  Tensor out(uv.shape());
  const Tensor& bv = b.value();
  for_each_capsule(f, [&](std::size_t, std::size_t t, std::size_t, std::size_t base) {
    double sq = 0.0;
    for (std::size_t i = 0; i < f.dim; ++i) sq += uv[base + i * f.spatial] * uv[base + i * f.spatial];
    const double r = std::sqrt(sq);
    const double thr = bv[t] * bv[t];
    if (r > thr) {
      const double factor = (r - thr) / r;
      for (std::size_t i = 0; i < f.dim; ++i) out[base + i * f.spatial] = factor * uv[base + i * f.spatial];
    }
  });
  return u.tape().record(std::move(out), {u, b}, [f](const ad::PullbackArgs& p) {
    const Tensor& uv = *p.inputs[0];
    const Tensor& bv = *p.inputs[1];
    Tensor gu(uv.shape());
    Tensor gb(bv.shape());
    for_each_capsule(f, [&](std::size_t, std::size_t t, std::size_t, std::size_t base) {
      double sq = 0.0, ug = 0.0;
      for (std::size_t i = 0; i < f.dim; ++i) {
        const std::size_t at = base + i * f.spatial;
        sq += uv[at] * uv[at];
        ug += uv[at] * p.grad[at];
      }
      const double r = std::sqrt(sq);
      const double thr = bv[t] * bv[t];
      if (!(r > thr)) return;
      const double keep = 1.0 - thr / r;
      const double radial = thr * ug / (r * r * r);
      for (std::size_t i = 0; i < f.dim; ++i) {
        const std::size_t at = base + i * f.spatial;
        gu[at] = keep * p.grad[at] + radial * uv[at];
      }
      gb[t] += -2.0 * bv[t] * ug / r;
    });
    return std::vector<Tensor>{std::move(gu), std::move(gb)};
  });
}

ad::Var squashing(ad::Var u) {
  const Tensor& uv = u.value();
  const FieldDims f = field_dims(uv, "squashing");
  Tensor out(uv.shape());
  for_each_capsule(f, [&](std::size_t, std::size_t, std::size_t, std::size_t base) {
    double sq = 0.0;
    for (std::size_t i = 0; i < f.dim; ++i) sq += uv[base + i * f.spatial] * uv[base + i * f.spatial];
    if (sq == 0.0) return;
    // |u|^2/(1+|u|^2) * u/|u| == u * |u| / (1 + |u|^2)
    const double r = std::sqrt(sq);
    const double factor = r / (1.0 + sq);
    for (std::size_t i = 0; i < f.dim; ++i) out[base + i * f.spatial] = factor * uv[base + i * f.spatial];
  });
  return u.tape().record(std::move(out), {u}, [f](const ad::PullbackArgs& p) {
    const Tensor& uv = *p.inputs[0];
    Tensor gu(uv.shape());
    for_each_capsule(f, [&](std::size_t, std::size_t, std::size_t, std::size_t base) {
      double sq = 0.0, ug = 0.0;
      for (std::size_t i = 0; i < f.dim; ++i) {
        const std::size_t at = base + i * f.spatial;
        sq += uv[at] * uv[at];
        ug += uv[at] * p.grad[at];
      }
      if (sq == 0.0) return;
      const double r = std::sqrt(sq);
      const double denom = 1.0 + sq;
      // v = s(r) u with s(r) = r / (1 + r^2); ds/dr = (1 - r^2) / (1 + r^2)^2.
      const double s = r / denom;
      const double ds = (1.0 - sq) / (denom * denom);
      const double radial = ds * ug / r;
      for (std::size_t i = 0; i < f.dim; ++i) {
        const std::size_t at = base + i * f.spatial;
        gu[at] = s * p.grad[at] + radial * uv[at];
      }
    });
    return std::vector<Tensor>{std::move(gu)};
  });
}

ad::Var capsule_norms(ad::Var u) {
  const Tensor& uv = u.value();
  const FieldDims f = field_dims(uv, "capsule_norms");
  Tensor out({uv.dim(0), uv.dim(1), uv.dim(3), uv.dim(4)});
  for_each_capsule(f, [&](std::size_t b, std::size_t t, std::size_t s, std::size_t base) {
    double sq = 0.0;
    for (std::size_t i = 0; i < f.dim; ++i) sq += uv[base + i * f.spatial] * uv[base + i * f.spatial];
    out[(b * f.types + t) * f.spatial + s] = std::sqrt(sq);
  });
  return u.tape().record(std::move(out), {u}, [f](const ad::PullbackArgs& p) {
    const Tensor& uv = *p.inputs[0];
    Tensor gu(uv.shape());
    for_each_capsule(f, [&](std::size_t b, std::size_t t, std::size_t s, std::size_t base) {
      const std::size_t o = (b * f.types + t) * f.spatial + s;
      const double r = p.output[o];
      if (r == 0.0) return;
      const double scale = p.grad[o] / r;
      for (std::size_t i = 0; i < f.dim; ++i) gu[base + i * f.spatial] = scale * uv[base + i * f.spatial];
    });
    return std::vector<Tensor>{std::move(gu)};
  });
}

ad::Var mean_pool(ad::Var x, std::size_t k, std::size_t stride) {
  const Tensor& xv = x.value();
  if (xv.rank() != 4 && xv.rank() != 5) {
    throw ShapeError("mean_pool expects a 4-D or 5-D field, got " + shape_str(xv.shape()));
  }
  const std::size_t h = xv.dim(xv.rank() - 2), w = xv.dim(xv.rank() - 1);
  if (k == 0 || stride == 0) throw ShapeError("mean_pool: window and stride must be positive");
  if (h < k || w < k || (h - k) % stride != 0 || (w - k) % stride != 0) {
    throw ShapeError("mean_pool: window " + std::to_string(k) + " stride " +
                     std::to_string(stride) + " does not tile a " + std::to_string(h) + "x" +
                     std::to_string(w) + " field");
  }
  const std::size_t oh = (h - k) / stride + 1, ow = (w - k) / stride + 1;
  const std::size_t planes = xv.size() / (h * w);
  Shape out_shape = xv.shape();
  out_shape[out_shape.size() - 2] = oh;
  out_shape[out_shape.size() - 1] = ow;
  Tensor out(out_shape);
  const double inv = 1.0 / static_cast<double>(k * k);
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const double* src = xv.ptr() + pl * h * w;
    double* dst = out.ptr() + pl * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (std::size_t ky = 0; ky < k; ++ky)
          for (std::size_t kx = 0; kx < k; ++kx) acc += src[(oy * stride + ky) * w + ox * stride + kx];
        dst[oy * ow + ox] = acc * inv;
      }
  }
  return x.tape().record(std::move(out), {x}, [=](const ad::PullbackArgs& p) {
    Tensor g(p.inputs[0]->shape());
    for (std::size_t pl = 0; pl < planes; ++pl) {
      const double* src = p.grad.ptr() + pl * oh * ow;
      double* dst = g.ptr() + pl * h * w;
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const double v = src[oy * ow + ox] * inv;
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) dst[(oy * stride + ky) * w + ox * stride + kx] += v;
        }
    }
    return std::vector<Tensor>{std::move(g)};
  });
}

namespace {

struct Tap {
  std::size_t lo, hi;
  double w_hi;
};

std::vector<Tap> bilinear_taps(std::size_t in) {
  std::vector<Tap> taps(2 * in);
  for (std::size_t o = 0; o < 2 * in; ++o) {
    double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[o] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

ad::Var upsample_bilinear2x(ad::Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 4 && xv.rank() != 5) {
    throw ShapeError("upsample expects a 4-D or 5-D field, got " + shape_str(xv.shape()));
  }
  const std::size_t h = xv.dim(xv.rank() - 2), w = xv.dim(xv.rank() - 1);
  const std::size_t planes = xv.size() / (h * w);
  const auto ty = bilinear_taps(h), tx = bilinear_taps(w);
  Shape out_shape = xv.shape();
  out_shape[out_shape.size() - 2] = 2 * h;
  out_shape[out_shape.size() - 1] = 2 * w;
  Tensor out(out_shape);
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const double* src = xv.ptr() + pl * h * w;
    double* dst = out.ptr() + pl * 4 * h * w;
    for (std::size_t oy = 0; oy < 2 * h; ++oy)
      for (std::size_t ox = 0; ox < 2 * w; ++ox) {
        const Tap& a = ty[oy];
        const Tap& b = tx[ox];
        const double top = (1 - b.w_hi) * src[a.lo * w + b.lo] + b.w_hi * src[a.lo * w + b.hi];
        const double bot = (1 - b.w_hi) * src[a.hi * w + b.lo] + b.w_hi * src[a.hi * w + b.hi];
        dst[oy * 2 * w + ox] = (1 - a.w_hi) * top + a.w_hi * bot;
      }
  }
  return x.tape().record(std::move(out), {x}, [=](const ad::PullbackArgs& p) {
    Tensor g(p.inputs[0]->shape());
    for (std::size_t pl = 0; pl < planes; ++pl) {
      const double* src = p.grad.ptr() + pl * 4 * h * w;
      double* dst = g.ptr() + pl * h * w;
      for (std::size_t oy = 0; oy < 2 * h; ++oy)
        for (std::size_t ox = 0; ox < 2 * w; ++ox) {
          const Tap& a = ty[oy];
          const Tap& b = tx[ox];
          const double v = src[oy * 2 * w + ox];
          dst[a.lo * w + b.lo] += (1 - a.w_hi) * (1 - b.w_hi) * v;
          dst[a.lo * w + b.hi] += (1 - a.w_hi) * b.w_hi * v;
          dst[a.hi * w + b.lo] += a.w_hi * (1 - b.w_hi) * v;
          dst[a.hi * w + b.hi] += a.w_hi * b.w_hi * v;
        }
    }
    return std::vector<Tensor>{std::move(g)};
  });
}

ad::Var sc_kernel(const std::vector<ad::Var>& weights, int iters) {
  if (weights.empty()) throw ShapeError("subspace capsule layer needs at least one type");
  const Shape& first = weights.front().shape();
  std::vector<ad::Var> rows;
  rows.reserve(weights.size());
  for (const auto& w : weights) {
    if (w.shape() != first) throw ShapeError("all capsule types must share d and c");
    rows.push_back(subspace::ad_ops::capsule_projector(w, iters, false).pc);
  }
  return rows.size() == 1 ? rows.front() : ad::concat_rows(rows);
}

ad::Var sc_fc(ad::Var x, ad::Var kernel, std::size_t types) {
  const Tensor& xv = x.value();
  if (xv.rank() < 2) throw ShapeError("sc_fc expects a batched input, got " + shape_str(xv.shape()));
  const std::size_t batch = xv.dim(0);
  const std::size_t d = xv.size() / std::max<std::size_t>(batch, 1);
  const std::size_t rows = kernel.value().dim(0);
  if (kernel.value().dim(1) != d) {
    throw ShapeError("sc_fc: input dimension " + std::to_string(d) + " vs kernel " +
                     shape_str(kernel.shape()));
  }
  if (types == 0 || rows % types != 0) throw ShapeError("sc_fc: kernel rows not divisible by types");
  ad::Var flat = xv.rank() == 2 ? x : ad::reshape(x, {batch, d});
  ad::Var out = ad::matmul(flat, ad::transpose(kernel));
  return ad::reshape(out, {batch, types, rows / types, 1, 1});
}

ad::Var sc_conv(ad::Var x, ad::Var kernel, std::size_t types, std::size_t k,
                std::size_t stride, std::size_t pad) {
  const Tensor& xv = x.value();
  ad::Var img = x;
  if (xv.rank() == 5) {
    img = ad::reshape(x, {xv.dim(0), xv.dim(1) * xv.dim(2), xv.dim(3), xv.dim(4)});
  } else if (xv.rank() != 4) {
    throw ShapeError("sc_conv expects (B,C,H,W), got " + shape_str(xv.shape()));
  }
  const std::size_t rows = kernel.value().dim(0);
  if (types == 0 || rows % types != 0) throw ShapeError("sc_conv: kernel rows not divisible by types");
  ad::Var y = ad::conv2d(img, kernel, k, stride, pad);
  const Shape& ys = y.shape();
  return ad::reshape(y, {ys[0], types, rows / types, ys[2], ys[3]});
}

}  // namespace scn::capsule::ops
