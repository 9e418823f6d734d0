#include "scn/subspace/projector.hpp"

#include <algorithm>
#include <cmath>

#include "scn/core/errors.hpp"
#include "scn/core/ops.hpp"
#include "scn/subspace/eigen_oracle.hpp"

namespace scn::subspace {

WeightMatrix::WeightMatrix(Tensor entries) : entries_(std::move(entries)) {
  if (entries_.rank() != 2) {
    throw ShapeError("weight matrix must be 2-D, got " + shape_str(entries_.shape()));
  }
  if (entries_.dim(1) == 0 || entries_.dim(1) > entries_.dim(0)) {
    throw ShapeError("weight matrix needs 0 < c <= d, got " + shape_str(entries_.shape()));
  }
}

WeightMatrix WeightMatrix::random(std::size_t d, std::size_t c, Rng& rng) {
  return WeightMatrix(rng.normal_tensor({d, c}, 1.0 / std::sqrt(static_cast<double>(d))));
}

void check_spd(const Tensor& a) {
  if (a.rank() != 2 || a.dim(0) != a.dim(1)) {
    throw NumericError("expected a square matrix, got " + shape_str(a.shape()));
  }
  const std::size_t n = a.dim(0);
  double biggest = 1.0;
  for (double v : a.data()) biggest = std::max(biggest, std::abs(v));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(a.at(i, j) - a.at(j, i)) > 1e-10 * biggest) {
        throw NumericError("matrix is not symmetric");
      }

  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, a.at(i, i));
  const double tol = kRankTolFactor * max_diag;
  if (!(max_diag > 0.0)) throw DegenerateBasisError("degenerate subspace basis: zero Gram matrix");

  // Cholesky of A - tol*I succeeds iff the smallest eigenvalue exceeds tol.
  Tensor l({n, n});
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a.at(j, j) - tol;
    for (std::size_t k = 0; k < j; ++k) diag -= l.at(j, k) * l.at(j, k);
    if (!(diag > 0.0)) {
      throw DegenerateBasisError("degenerate subspace basis: eigenvalue below rank tolerance");
    }
    l.at(j, j) = std::sqrt(diag);
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = a.at(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= l.at(i, k) * l.at(j, k);
      l.at(i, j) = v / l.at(j, j);
    }
  }
}

namespace {

struct Iterate {
  ad::Var y;
  ad::Var z;
  ad::Var scale;
};

Iterate run_newton_schulz(ad::Var a, int iters) {
  if (iters < 0) throw InvalidArgument("iteration count must be non-negative");
  check_spd(a.value());
  ad::Tape& tape = a.tape();
  const std::size_t n = a.value().dim(0);

  ad::Var s = ad::frobenius_norm(a);
  ad::Var y = ad::mul_scalar(a, ad::scalar_pow(s, -1.0));
  ad::Var z = tape.constant(Tensor::identity(n));
  for (int k = 0; k < iters; ++k) {
    ad::Var t = ad::affine_identity(ad::matmul(z, y), 3.0, -1.0);
    ad::Var y_next = ad::scale(ad::matmul(y, t), 0.5);
    z = ad::scale(ad::matmul(t, z), 0.5);
    y = y_next;
  }
  return {y, z, s};
}

}  // namespace

namespace ad_ops {

ad::Var gram(ad::Var w) { return ad::matmul(ad::transpose(w), w); }

RootVars inv_sqrt(ad::Var a, int iters) {
  Iterate it = run_newton_schulz(a, iters);
  return {ad::mul_scalar(it.y, ad::scalar_pow(it.scale, 0.5)),
          ad::mul_scalar(it.z, ad::scalar_pow(it.scale, -0.5))};
}

ProjectorVars capsule_projector(ad::Var w, int iters, bool with_pd) {
  if (w.value().rank() != 2 || w.value().dim(1) > w.value().dim(0)) {
    throw ShapeError("capsule_projector: bad weight shape " + shape_str(w.shape()));
  }
  RootVars roots = inv_sqrt(gram(w), iters);
  ProjectorVars out;
  out.gram_inv_sqrt = roots.inv_sqrt;
  out.pc = ad::matmul(roots.inv_sqrt, ad::transpose(w));
  if (with_pd) out.pd = ad::matmul(w, roots.inv_sqrt);
  return out;
}

}  // namespace ad_ops

Tensor gram(const WeightMatrix& w) { return matmul(w.entries(), w.entries(), true, false); }

NewtonSchulzState newton_schulz(const Tensor& a, int iters) {
  ad::Tape tape;
  Iterate it = run_newton_schulz(tape.constant(a), iters);
  return {it.y.value(), it.z.value(), it.scale.value().item(), iters};
}

MatrixRoots inv_sqrt(const Tensor& a, int iters) {
  ad::Tape tape;
  ad_ops::RootVars r = ad_ops::inv_sqrt(tape.constant(a), iters);
  return {r.sqrt.value(), r.inv_sqrt.value()};
}

ProjectorPair capsule_projector(const WeightMatrix& w, int iters) {
  ad::Tape tape;
  ad_ops::ProjectorVars p = ad_ops::capsule_projector(tape.constant(w.entries()), iters);
  return {p.pc.value(), p.pd.value(), p.gram_inv_sqrt.value()};
}

Tensor orthogonal_projection(const WeightMatrix& w, const Tensor& x) {
  if (x.size() != w.d()) {
    throw ShapeError("orthogonal_projection: x has " + std::to_string(x.size()) +
                     " entries, basis has d = " + std::to_string(w.d()));
  }
  const Tensor g = gram(w);
  const EigenDecomposition eig = sym_eig_oracle(g);
  double max_diag = 0.0;
  for (std::size_t i = 0; i < g.dim(0); ++i) max_diag = std::max(max_diag, g.at(i, i));
  const double smallest = eig.eigenvalues[eig.eigenvalues.size() - 1];
  if (!(smallest > kRankTolFactor * max_diag)) {
    throw DegenerateBasisError("orthogonal_projection: singular Gram matrix");
  }
  const Tensor g_inv = eig_reconstruct(eig, -1.0);
  const Tensor xc = x.reshaped({w.d(), 1});
  const Tensor coeffs = matmul(g_inv, matmul(w.entries(), xc, true, false));
  return matmul(w.entries(), coeffs).reshaped(x.shape());
}

}  // namespace scn::subspace
