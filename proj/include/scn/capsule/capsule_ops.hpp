#ifndef SCN_CAPSULE_CAPSULE_OPS_HPP
#define SCN_CAPSULE_CAPSULE_OPS_HPP

#include <cstddef>
#include <vector>

#include "scn/core/autodiff.hpp"
#include "scn/subspace/projector.hpp"

// Differentiable capsule ops. Capsule fields are (B, n, c, H, W) tensors:
// batch, capsule type, capsule dimension, then space.
namespace scn::capsule::ops {

/// v = max(|u| - b_t^2, 0) u / |u| per capsule, with one b per type (shape (n)).
/// The output is exactly zero when |u| <= b_t^2, and the gradient there is zero.
ad::Var sparking(ad::Var u, ad::Var b);

/// v = |u|^2 / (1 + |u|^2) * u / |u|; zero (with zero gradient) at u = 0.
ad::Var squashing(ad::Var u);

/// Euclidean norm over the capsule dimension: (B,n,c,H,W) -> (B,n,H,W).
ad::Var capsule_norms(ad::Var u);

/// Componentwise window mean over (B,C,H,W) or (B,n,c,H,W). The window
/// must tile the field exactly: (H - k) % stride == 0 and likewise for W.
ad::Var mean_pool(ad::Var x, std::size_t k, std::size_t stride);

/// Bilinear 2x upsampling (half-pixel centers, edge clamped) of a 4-D or 5-D field.
ad::Var upsample_bilinear2x(ad::Var x);

/// Stacks the Pc of every weight into one (n*c) x d kernel.
ad::Var sc_kernel(const std::vector<ad::Var>& weights, int iters);

/// Capsules u_t = Pc_t x for a (B, d) or (B, ...) input, as (B, n, c, 1, 1).
ad::Var sc_fc(ad::Var x, ad::Var kernel, std::size_t types);

/// Subspace capsule convolution with a precomputed (n*c) x (C*k*k) kernel.
/// Input (B,C,H,W) or a capsule field; output (B, n, c, Ho, Wo).
ad::Var sc_conv(ad::Var x, ad::Var kernel, std::size_t types, std::size_t k,
                std::size_t stride, std::size_t pad);

}  // namespace scn::capsule::ops

#endif  // SCN_CAPSULE_CAPSULE_OPS_HPP
