#ifndef SCN_SUBSPACE_EIGEN_ORACLE_HPP
#define SCN_SUBSPACE_EIGEN_ORACLE_HPP

#include "scn/core/tensor.hpp"

namespace scn::subspace {

struct EigenDecomposition {
  Tensor eigenvalues;   // (c), descending
  Tensor eigenvectors;  // (c x c), column j pairs with eigenvalues[j]
};

inline constexpr int kJacobiMaxSweeps = 100;

/// Cyclic Jacobi rotations until the off-diagonal Frobenius mass drops
/// below 1e-12 * max(1, ||A||_F). Throws NumericError after 100 sweeps.
EigenDecomposition sym_eig_oracle(const Tensor& a);

/// U diag(f(lambda)) U^T for a decomposition.
Tensor eig_reconstruct(const EigenDecomposition& e, double power = 1.0);

}  // namespace scn::subspace

#endif  // SCN_SUBSPACE_EIGEN_ORACLE_HPP
