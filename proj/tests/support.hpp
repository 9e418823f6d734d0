#ifndef SCN_TESTS_SUPPORT_HPP
#define SCN_TESTS_SUPPORT_HPP

#include <cmath>
#include <vector>

#include "scn/core/ops.hpp"
#include "scn/core/random.hpp"
#include "scn/core/tensor.hpp"

namespace scn::testing {

inline Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor out({a.dim(0), b.dim(1)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < b.dim(1); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.dim(1); ++k) acc += a.at(i, k) * b.at(k, j);
      out.at(i, j) = acc;
    }
  return out;
}

// Orthonormal columns by Gram-Schmidt, applied twice.
inline Tensor orthonormal(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor q = rng.normal_tensor({rows, cols});
  for (int pass = 0; pass < 2; ++pass)
    for (std::size_t j = 0; j < cols; ++j) {
      for (std::size_t i = 0; i < j; ++i) {
        double p = 0.0;
        for (std::size_t r = 0; r < rows; ++r) p += q.at(r, i) * q.at(r, j);
        for (std::size_t r = 0; r < rows; ++r) q.at(r, j) -= p * q.at(r, i);
      }
      double n = 0.0;
      for (std::size_t r = 0; r < rows; ++r) n += q.at(r, j) * q.at(r, j);
      n = std::sqrt(n);
      for (std::size_t r = 0; r < rows; ++r) q.at(r, j) /= n;
    }
  return q;
}

// Q diag(lambda) Q^T, eigenvalues spread log-uniformly over [1, cond].
inline Tensor random_spd(std::size_t n, double cond, Rng& rng) {
  const Tensor q = orthonormal(n, n, rng);
  Tensor qd = q;
  for (std::size_t j = 0; j < n; ++j) {
    const double lambda = n == 1 ? 1.0 : std::pow(cond, static_cast<double>(j) / (n - 1));
    for (std::size_t i = 0; i < n; ++i) qd.at(i, j) *= lambda;
  }
  Tensor a = naive_matmul(qd, transpose(q));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) a.at(i, j) = a.at(j, i) = 0.5 * (a.at(i, j) + a.at(j, i));
  return a;
}

// Direct sliding-window convolution of (C,H,W) with kernel (O, C*k*k) -> (O,Ho,Wo).
inline Tensor direct_conv(const Tensor& x, const Tensor& kernel, std::size_t k, std::size_t stride,
                          std::size_t pad) {
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2), o = kernel.dim(0);
  const std::size_t ho = (h + 2 * pad - k) / stride + 1, wo = (w + 2 * pad - k) / stride + 1;
  Tensor out({o, ho, wo});
  for (std::size_t oc = 0; oc < o; ++oc)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double acc = 0.0;
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
              const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
              acc += kernel.at(oc, (ch * k + ky) * k + kx) * x[(ch * h + iy) * w + ix];
            }
        out[(oc * ho + oy) * wo + ox] = acc;
      }
  return out;
}

inline double vec_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double e : v) s += e * e;
  return std::sqrt(s);
}

}  // namespace scn::testing

#endif  // SCN_TESTS_SUPPORT_HPP
