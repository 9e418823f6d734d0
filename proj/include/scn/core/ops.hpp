#ifndef SCN_CORE_OPS_HPP
#define SCN_CORE_OPS_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "scn/core/autodiff.hpp"
#include "scn/core/tensor.hpp"

namespace scn {

// ---------------------------------------------------------------------------
// Plain kernels on tensors.

/// a (m x k) times b (k x n). Either side may be read transposed.
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a = false,
              bool transpose_b = false);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scaled(const Tensor& a, double s);
/// In-place a += s * b.
void axpy(Tensor& a, const Tensor& b, double s = 1.0);
double dot(const Tensor& a, const Tensor& b);
double frobenius_norm(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Output spatial extent of a k-window sliding with `stride` over `in`
/// padded by `pad` on each side. Throws ShapeError when non-positive.
std::size_t conv_out_size(std::size_t in, std::size_t k, std::size_t stride,
                          std::size_t pad);

/// Unfolds (C,H,W) or (B,C,H,W) into a (C*k*k) x (B*Ho*Wo) column matrix.
/// Row (ch*k + ky)*k + kx, column b*Ho*Wo + oy*Wo + ox. Zero padding.
Tensor im2col(const Tensor& x, std::size_t k, std::size_t stride, std::size_t pad);

/// Adjoint of im2col: scatters-and-adds columns back into `image_shape`.
Tensor col2im(const Tensor& cols, const Shape& image_shape, std::size_t k,
              std::size_t stride, std::size_t pad);

// ---------------------------------------------------------------------------
// Differentiable ops recorded on the tape of their first argument.

namespace ad {

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
/// a * s where s holds exactly one element.
Var mul_scalar(Var a, Var s);
/// s^p for a one-element s > 0.
Var scalar_pow(Var s, double p);
Var frobenius_norm(Var a);
/// alpha * I + beta * a for square a.
Var affine_identity(Var a, double alpha, double beta);
Var sum(Var a);
/// Sum of a elementwise-multiplied by a fixed weight tensor.
Var weighted_sum(Var a, const Tensor& w);
Var reshape(Var a, Shape shape);
/// Contiguous window [offset, offset + size(shape)) of the flat data.
Var slice(Var a, std::size_t offset, Shape shape);
/// Stacks 2-D tensors with equal column counts on top of each other.
Var concat_rows(const std::vector<Var>& parts);
Var relu(Var a);

Var im2col(Var x, std::size_t k, std::size_t stride, std::size_t pad);
/// Regroups a (O, B*Ho*Wo) product back into (B, O, Ho, Wo).
Var fold_columns(Var y, std::size_t batch, std::size_t out_h, std::size_t out_w);
/// Adds bias[o] to every element of channel o of a (B, O, H, W) tensor.
Var add_channel_bias(Var x, Var bias);

/// Convolution of (B,C,H,W) with kernel (O, C*k*k) via im2col + matmul.
Var conv2d(Var x, Var kernel, std::size_t k, std::size_t stride, std::size_t pad);

}  // namespace ad

}  // namespace scn

#endif  // SCN_CORE_OPS_HPP
