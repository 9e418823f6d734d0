#include "scn/core/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "scn/core/errors.hpp"

namespace scn {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) +
                     ", got " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

template <class Out, class A, class B>
void multiply(Out& out, const A& a, const B& b, bool transpose_a, bool transpose_b) {
  if (transpose_a && transpose_b) {
    out.noalias() = a.transpose() * b.transpose();
  } else if (transpose_a) {
    out.noalias() = a.transpose() * b;
  } else if (transpose_b) {
    out.noalias() = a * b.transpose();
  } else {
    out.noalias() = a * b;
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a, bool transpose_b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = transpose_a ? a.dim(1) : a.dim(0);
  const std::size_t ka = transpose_a ? a.dim(0) : a.dim(1);
  const std::size_t kb = transpose_b ? b.dim(1) : b.dim(0);
  const std::size_t n = transpose_b ? b.dim(0) : b.dim(1);
  if (ka != kb) {
    throw ShapeError("matmul: inner dimensions disagree " + shape_str(a.shape()) + " * " +
                     shape_str(b.shape()));
  }
  Tensor out({m, n});
  if (m == 0 || n == 0) return out;
  ConstMap ma(a.ptr(), a.dim(0), a.dim(1));
  ConstMap mb(b.ptr(), b.dim(0), b.dim(1));
  MutMap mo(out.ptr(), m, n);
  if (m + n + ka < EIGEN_GEMM_TO_COEFFBASED_THRESHOLD || m == 1 || n == 1) {
    const RowMajor ca = ma, cb = mb;
    RowMajor co(m, n);
    multiply(co, ca, cb, transpose_a, transpose_b);
    mo = co;
  } else {
    multiply(mo, ma, mb, transpose_a, transpose_b);
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  axpy(out, b, 1.0);
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  axpy(out, b, -1.0);
  return out;
}

Tensor scaled(const Tensor& a, double s) {
  Tensor out = a;
  for (auto& v : out.data()) v *= s;
  return out;
}

void axpy(Tensor& a, const Tensor& b, double s) {
  if (a.size() != b.size()) {
    throw ShapeError("axpy: size mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  double* pa = a.ptr();
  const double* pb = b.ptr();
  const std::size_t n = a.size();
  if (s == 1.0) {
    for (std::size_t i = 0; i < n; ++i) pa[i] += pb[i];
  } else {
    for (std::size_t i = 0; i < n; ++i) pa[i] += s * pb[i];
  }
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw ShapeError("dot: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double frobenius_norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw ShapeError("max_abs_diff: size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::size_t conv_out_size(std::size_t in, std::size_t k, std::size_t stride,
                          std::size_t pad) {
  if (stride == 0 || k == 0) throw ShapeError("kernel size and stride must be positive");
  const long span = static_cast<long>(in + 2 * pad) - static_cast<long>(k);
  if (span < 0) {
    throw ShapeError("window " + std::to_string(k) + " larger than padded input " +
                     std::to_string(in + 2 * pad));
  }
  return static_cast<std::size_t>(span) / stride + 1;
}

namespace {

struct ImageDims {
  std::size_t batch, channels, height, width;
};

ImageDims image_dims(const Shape& s) {
  if (s.size() == 3) return {1, s[0], s[1], s[2]};
  if (s.size() == 4) return {s[0], s[1], s[2], s[3]};
  throw ShapeError("expected (C,H,W) or (B,C,H,W), got " + shape_str(s));
}

}  // namespace

Tensor im2col(const Tensor& x, std::size_t k, std::size_t stride, std::size_t pad) {
  const auto [batch, channels, h, w] = image_dims(x.shape());
  const std::size_t oh = conv_out_size(h, k, stride, pad);
  const std::size_t ow = conv_out_size(w, k, stride, pad);
  const std::size_t per = oh * ow;
  const std::size_t cols = batch * per;
  Tensor out({channels * k * k, cols});
  double* po = out.ptr();
  const double* px = x.ptr();
  for (std::size_t ch = 0; ch < channels; ++ch) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        double* row = po + ((ch * k + ky) * k + kx) * cols;
        for (std::size_t b = 0; b < batch; ++b) {
          const double* plane = px + (b * channels + ch) * h * w;
          double* dst = row + b * per;
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
            if (iy < 0 || iy >= static_cast<long>(h)) {
              std::fill(dst + oy * ow, dst + (oy + 1) * ow, 0.0);
              continue;
            }
            const double* src = plane + iy * w;
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
              dst[oy * ow + ox] = (ix < 0 || ix >= static_cast<long>(w)) ? 0.0 : src[ix];
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor col2im(const Tensor& cols, const Shape& image_shape, std::size_t k,
              std::size_t stride, std::size_t pad) {
  const auto [batch, channels, h, w] = image_dims(image_shape);
  const std::size_t oh = conv_out_size(h, k, stride, pad);
  const std::size_t ow = conv_out_size(w, k, stride, pad);
  const std::size_t per = oh * ow;
  const std::size_t ncols = batch * per;
  if (cols.rank() != 2 || cols.dim(0) != channels * k * k || cols.dim(1) != ncols) {
    throw ShapeError("col2im: columns " + shape_str(cols.shape()) +
                     " do not match image " + shape_str(image_shape));
  }
  Tensor out(image_shape);
  double* px = out.ptr();
  const double* pc = cols.ptr();
  for (std::size_t ch = 0; ch < channels; ++ch) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const double* row = pc + ((ch * k + ky) * k + kx) * ncols;
        for (std::size_t b = 0; b < batch; ++b) {
          double* plane = px + (b * channels + ch) * h * w;
          const double* src = row + b * per;
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            double* dst = plane + iy * w;
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
              if (ix >= 0 && ix < static_cast<long>(w)) dst[ix] += src[oy * ow + ox];
            }
          }
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace ad {

Var matmul(Var a, Var b) {
  Tensor out = scn::matmul(a.value(), b.value());
  return a.tape().record(std::move(out), {a, b}, [](const PullbackArgs& p) {
    std::vector<Tensor> g(2);
    if (p.needs[0]) g[0] = scn::matmul(p.grad, *p.inputs[1], false, true);
    if (p.needs[1]) g[1] = scn::matmul(*p.inputs[0], p.grad, true, false);
    return g;
  });
}

Var transpose(Var a) {
  return a.tape().record(scn::transpose(a.value()), {a}, [](const PullbackArgs& p) {
    return std::vector<Tensor>{scn::transpose(p.grad)};
  });
}

Var add(Var a, Var b) {
  return a.tape().record(scn::add(a.value(), b.value()), {a, b},
                         [](const PullbackArgs& p) {
                           return std::vector<Tensor>{p.grad, p.grad};
                         });
}

Var sub(Var a, Var b) {
  return a.tape().record(scn::sub(a.value(), b.value()), {a, b},
                         [](const PullbackArgs& p) {
                           return std::vector<Tensor>{p.grad, scaled(p.grad, -1.0)};
                         });
}

Var scale(Var a, double s) {
  return a.tape().record(scaled(a.value(), s), {a}, [s](const PullbackArgs& p) {
    return std::vector<Tensor>{scaled(p.grad, s)};
  });
}

Var mul_scalar(Var a, Var s) {
  const double sv = s.value().item();
  return a.tape().record(scaled(a.value(), sv), {a, s}, [](const PullbackArgs& p) {
    std::vector<Tensor> g(2);
    const double sv = p.inputs[1]->item();
    if (p.needs[0]) g[0] = scaled(p.grad, sv);
    if (p.needs[1]) g[1] = Tensor(p.inputs[1]->shape(), dot(p.grad, *p.inputs[0]));
    return g;
  });
}

Var scalar_pow(Var s, double e) {
  const double sv = s.value().item();
  if (!(sv > 0.0)) throw NumericError("scalar_pow: base must be positive");
  Tensor out(s.shape(), std::pow(sv, e));
  return s.tape().record(std::move(out), {s}, [e](const PullbackArgs& p) {
    const double sv = p.inputs[0]->item();
    return std::vector<Tensor>{
        Tensor(p.inputs[0]->shape(), p.grad.item() * e * std::pow(sv, e - 1.0))};
  });
}

Var frobenius_norm(Var a) {
  return a.tape().record(Tensor::scalar(scn::frobenius_norm(a.value())), {a},
                         [](const PullbackArgs& p) {
                           const double n = p.output.item();
                           if (n == 0.0) return std::vector<Tensor>{Tensor(p.inputs[0]->shape())};
                           return std::vector<Tensor>{scaled(*p.inputs[0], p.grad.item() / n)};
                         });
}

Var affine_identity(Var a, double alpha, double beta) {
  const Tensor& av = a.value();
  if (av.rank() != 2 || av.dim(0) != av.dim(1)) {
    throw ShapeError("affine_identity needs a square matrix, got " + shape_str(av.shape()));
  }
  Tensor out = scaled(av, beta);
  for (std::size_t i = 0; i < av.dim(0); ++i) out.at(i, i) += alpha;
  return a.tape().record(std::move(out), {a}, [beta](const PullbackArgs& p) {
    return std::vector<Tensor>{scaled(p.grad, beta)};
  });
}

Var sum(Var a) {
  double acc = 0.0;
  for (double v : a.value().data()) acc += v;
  return a.tape().record(Tensor::scalar(acc), {a}, [](const PullbackArgs& p) {
    return std::vector<Tensor>{Tensor(p.inputs[0]->shape(), p.grad.item())};
  });
}

Var weighted_sum(Var a, const Tensor& w) {
  if (w.size() != a.value().size()) throw ShapeError("weighted_sum: size mismatch");
  return a.tape().record(Tensor::scalar(scn::dot(a.value(), w)), {a},
                         [w](const PullbackArgs& p) {
                           return std::vector<Tensor>{
                               scaled(w, p.grad.item()).reshaped(p.inputs[0]->shape())};
                         });
}

Var reshape(Var a, Shape shape) {
  return a.tape().record(a.value().reshaped(std::move(shape)), {a},
                         [](const PullbackArgs& p) {
                           return std::vector<Tensor>{p.grad.reshaped(p.inputs[0]->shape())};
                         });
}

Var slice(Var a, std::size_t offset, Shape shape) {
  const std::size_t n = shape_size(shape);
  const Tensor& av = a.value();
  if (offset + n > av.size()) throw ShapeError("slice out of range");
  std::vector<double> data(av.data().begin() + offset, av.data().begin() + offset + n);
  return a.tape().record(Tensor(std::move(shape), std::move(data)), {a},
                         [offset](const PullbackArgs& p) {
                           Tensor g(p.inputs[0]->shape());
                           std::copy(p.grad.data().begin(), p.grad.data().end(),
                                     g.data().begin() + offset);
                           return std::vector<Tensor>{std::move(g)};
                         });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows of nothing");
  const std::size_t cols = parts[0].value().dim(1);
  std::size_t rows = 0;
  std::vector<double> data;
  for (const auto& v : parts) {
    const Tensor& t = v.value();
    if (t.rank() != 2 || t.dim(1) != cols) throw ShapeError("concat_rows: column mismatch");
    rows += t.dim(0);
    data.insert(data.end(), t.data().begin(), t.data().end());
  }
  return parts[0].tape().record(
      Tensor({rows, cols}, std::move(data)), parts, [](const PullbackArgs& p) {
        std::vector<Tensor> g(p.inputs.size());
        std::size_t offset = 0;
        for (std::size_t i = 0; i < p.inputs.size(); ++i) {
          const std::size_t n = p.inputs[i]->size();
          if (p.needs[i]) {
            g[i] = Tensor(p.inputs[i]->shape(),
                          std::vector<double>(p.grad.data().begin() + offset,
                                              p.grad.data().begin() + offset + n));
          }
          offset += n;
        }
        return g;
      });
}

Var relu(Var a) {
  Tensor out = a.value();
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return a.tape().record(std::move(out), {a}, [](const PullbackArgs& p) {
    Tensor g = p.grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!(p.output[i] > 0.0)) g[i] = 0.0;
    }
    return std::vector<Tensor>{std::move(g)};
  });
}

Var im2col(Var x, std::size_t k, std::size_t stride, std::size_t pad) {
  return x.tape().record(scn::im2col(x.value(), k, stride, pad), {x},
                         [k, stride, pad](const PullbackArgs& p) {
                           return std::vector<Tensor>{
                               col2im(p.grad, p.inputs[0]->shape(), k, stride, pad)};
                         });
}

Var fold_columns(Var y, std::size_t batch, std::size_t out_h, std::size_t out_w) {
  const Tensor& yv = y.value();
  const std::size_t per = out_h * out_w;
  if (yv.rank() != 2 || yv.dim(1) != batch * per) {
    throw ShapeError("fold_columns: " + shape_str(yv.shape()) + " vs batch " +
                     std::to_string(batch) + " of " + std::to_string(per));
  }
  const std::size_t channels = yv.dim(0);
  Tensor out({batch, channels, out_h, out_w});
  for (std::size_t o = 0; o < channels; ++o)
    for (std::size_t b = 0; b < batch; ++b)
      std::copy_n(yv.ptr() + o * batch * per + b * per, per,
                  out.ptr() + (b * channels + o) * per);
  return y.tape().record(std::move(out), {y}, [batch, channels, per](const PullbackArgs& p) {
    Tensor g(p.inputs[0]->shape());
    for (std::size_t o = 0; o < channels; ++o)
      for (std::size_t b = 0; b < batch; ++b)
        std::copy_n(p.grad.ptr() + (b * channels + o) * per, per,
                    g.ptr() + o * batch * per + b * per);
    return std::vector<Tensor>{std::move(g)};
  });
}

Var add_channel_bias(Var x, Var bias) {
  const Tensor& xv = x.value();
  if (xv.rank() != 4 || bias.value().size() != xv.dim(1)) {
    throw ShapeError("add_channel_bias: " + shape_str(xv.shape()) + " with bias " +
                     shape_str(bias.shape()));
  }
  const std::size_t batch = xv.dim(0), channels = xv.dim(1), per = xv.dim(2) * xv.dim(3);
  Tensor out = xv;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c) {
      double* p = out.ptr() + (b * channels + c) * per;
      const double bv = bias.value()[c];
      for (std::size_t i = 0; i < per; ++i) p[i] += bv;
    }
  return x.tape().record(std::move(out), {x, bias},
                         [batch, channels, per](const PullbackArgs& p) {
                           std::vector<Tensor> g(2);
                           if (p.needs[0]) g[0] = p.grad;
                           if (p.needs[1]) {
                             Tensor gb(p.inputs[1]->shape());
                             for (std::size_t b = 0; b < batch; ++b)
                               for (std::size_t c = 0; c < channels; ++c) {
                                 const double* q = p.grad.ptr() + (b * channels + c) * per;
                                 double acc = 0.0;
                                 for (std::size_t i = 0; i < per; ++i) acc += q[i];
                                 gb[c] += acc;
                               }
                             g[1] = std::move(gb);
                           }
                           return g;
                         });
}

Var conv2d(Var x, Var kernel, std::size_t k, std::size_t stride, std::size_t pad) {
  const Tensor& xv = x.value();
  if (xv.rank() != 4) throw ShapeError("conv2d expects (B,C,H,W), got " + shape_str(xv.shape()));
  const std::size_t d = xv.dim(1) * k * k;
  if (kernel.value().rank() != 2 || kernel.value().dim(1) != d) {
    throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) + " needs " +
                     std::to_string(d) + " columns");
  }
  const std::size_t oh = conv_out_size(xv.dim(2), k, stride, pad);
  const std::size_t ow = conv_out_size(xv.dim(3), k, stride, pad);
  Var cols = im2col(x, k, stride, pad);
  return fold_columns(matmul(kernel, cols), xv.dim(0), oh, ow);
}

}  // namespace ad

}  // namespace scn
