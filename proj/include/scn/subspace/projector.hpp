#ifndef SCN_SUBSPACE_PROJECTOR_HPP
#define SCN_SUBSPACE_PROJECTOR_HPP

#include <cstddef>

#include "scn/core/autodiff.hpp"
#include "scn/core/random.hpp"
#include "scn/core/tensor.hpp"

namespace scn::subspace {

inline constexpr int kDefaultNewtonSchulzIters = 20;

/// Relative rank tolerance: an SPD matrix whose smallest eigenvalue falls
/// below kRankTolFactor * (largest diagonal entry) is treated as degenerate.
inline constexpr double kRankTolFactor = 1e-10;

/// The d x c basis W whose column span is one capsule subspace.
class WeightMatrix {
 public:
  /// Requires a 2-D tensor with cols <= rows.
  explicit WeightMatrix(Tensor entries);

  /// Entries i.i.d. N(0, 1/d).
  static WeightMatrix random(std::size_t d, std::size_t c, Rng& rng);

  std::size_t d() const { return entries_.dim(0); }
  std::size_t c() const { return entries_.dim(1); }
  const Tensor& entries() const { return entries_; }

 private:
  Tensor entries_;
};

/// Pc (c x d) maps inputs into capsule coordinates; Pd (d x c) maps back.
/// Pd * Pc is the orthogonal projector onto span(W).
struct ProjectorPair {
  Tensor pc;
  Tensor pd;
  Tensor gram_inv_sqrt;
};

/// Coupled Newton-Schulz iterate after `iters` steps on A / scale.
struct NewtonSchulzState {
  Tensor y;
  Tensor z;
  double scale = 1.0;
  int iters = 0;
};

struct MatrixRoots {
  Tensor sqrt;
  Tensor inv_sqrt;
};

/// W^T W.
Tensor gram(const WeightMatrix& w);

/// Runs the iteration Y <- Y(3I - ZY)/2, Z <- (3I - ZY)Z/2 from Y0 = A/s,
/// Z0 = I with s = ||A||_F. Validates symmetry and rank first.
NewtonSchulzState newton_schulz(const Tensor& a, int iters = kDefaultNewtonSchulzIters);

/// A^{1/2} and A^{-1/2} from the rescaled Newton-Schulz state.
MatrixRoots inv_sqrt(const Tensor& a, int iters = kDefaultNewtonSchulzIters);

/// Pc = (W^T W)^{-1/2} W^T and Pd = W (W^T W)^{-1/2}.
ProjectorPair capsule_projector(const WeightMatrix& w, int iters = kDefaultNewtonSchulzIters);

/// W (W^T W)^{-1} W^T x, using an inverse built from the eigen oracle.
/// Reference path for tests and verification only.
Tensor orthogonal_projection(const WeightMatrix& w, const Tensor& x);

/// Throws NumericError unless a is square and symmetric within 1e-10
/// (relative to its largest entry), and DegenerateBasisError unless its
/// smallest eigenvalue is at least the rank tolerance.
void check_spd(const Tensor& a);

// ---------------------------------------------------------------------------
// Tape versions. Gradients flow through the unrolled iteration.

namespace ad_ops {

struct RootVars {
  ad::Var sqrt;
  ad::Var inv_sqrt;
};

struct ProjectorVars {
  ad::Var pc;
  ad::Var pd;
  ad::Var gram_inv_sqrt;
};

ad::Var gram(ad::Var w);
RootVars inv_sqrt(ad::Var a, int iters = kDefaultNewtonSchulzIters);
/// Builds Pc only (Pd is skipped unless `with_pd`).
ProjectorVars capsule_projector(ad::Var w, int iters = kDefaultNewtonSchulzIters,
                                bool with_pd = true);

}  // namespace ad_ops

}  // namespace scn::subspace

#endif  // SCN_SUBSPACE_PROJECTOR_HPP
