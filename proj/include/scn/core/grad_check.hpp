#ifndef SCN_CORE_GRAD_CHECK_HPP
#define SCN_CORE_GRAD_CHECK_HPP

#include <functional>

#include "scn/core/autodiff.hpp"
#include "scn/core/tensor.hpp"

namespace scn {

/// Scalar function built on a tape from a single input variable.
using ScalarFn = std::function<ad::Var(ad::Tape&, ad::Var)>;

/// Max over coordinates of |analytic - central difference| / max(1, |central difference|).
/// Throws NumericError if f is non-finite at any probe.
double grad_check(const ScalarFn& f, const Tensor& x, double eps = 1e-5);

/// Central-difference gradient of f at x.
Tensor numeric_gradient(const ScalarFn& f, const Tensor& x, double eps = 1e-5);

/// Gradient of f at x from one backward pass.
Tensor analytic_gradient(const ScalarFn& f, const Tensor& x);

}  // namespace scn

#endif  // SCN_CORE_GRAD_CHECK_HPP
