#include "scn/subspace/eigen_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "scn/core/errors.hpp"
#include "scn/core/ops.hpp"

namespace scn::subspace {

namespace {

double off_diagonal_mass(const Tensor& a) {
  const std::size_t n = a.dim(0);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) acc += a.at(i, j) * a.at(i, j);
  return std::sqrt(acc);
}

}  // namespace

EigenDecomposition sym_eig_oracle(const Tensor& input) {
  if (input.rank() != 2 || input.dim(0) != input.dim(1)) {
    throw ShapeError("sym_eig_oracle needs a square matrix, got " + shape_str(input.shape()));
  }
  const std::size_t n = input.dim(0);
  Tensor a = input;
  Tensor v = Tensor::identity(n);
  const double threshold = 1e-12 * std::max(1.0, frobenius_norm(input));

  bool converged = false;
  for (int sweep = 0; sweep <= kJacobiMaxSweeps; ++sweep) {
    if (off_diagonal_mass(a) < threshold) {
      converged = true;
      break;
    }
    if (sweep == kJacobiMaxSweeps) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a.at(p, q);
        if (apq == 0.0) continue;
        const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a.at(k, p), akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a.at(p, k), aqk = a.at(q, k);
          a.at(p, k) = c * apk - s * aqk;
          a.at(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v.at(k, p), vkq = v.at(k, q);
          v.at(k, p) = c * vkp - s * vkq;
          v.at(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (!converged) throw NumericError("Jacobi eigensolver did not converge in 100 sweeps");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a.at(i, i) > a.at(j, j); });
  EigenDecomposition out{Tensor({n}), Tensor({n, n})};
  for (std::size_t j = 0; j < n; ++j) {
    out.eigenvalues[j] = a.at(order[j], order[j]);
    for (std::size_t i = 0; i < n; ++i) out.eigenvectors.at(i, j) = v.at(i, order[j]);
  }
  return out;
}

Tensor eig_reconstruct(const EigenDecomposition& e, double power) {
  const std::size_t n = e.eigenvalues.size();
  Tensor scaled_vecs = e.eigenvectors;
  for (std::size_t j = 0; j < n; ++j) {
    const double f = power == 1.0 ? e.eigenvalues[j] : std::pow(e.eigenvalues[j], power);
    for (std::size_t i = 0; i < n; ++i) scaled_vecs.at(i, j) *= f;
  }
  return matmul(scaled_vecs, e.eigenvectors, false, true);
}

}  // namespace scn::subspace
