#include "scn/core/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "scn/core/errors.hpp"

namespace scn {

namespace {

double eval(const ScalarFn& f, const Tensor& x) {
  ad::Tape tape;
  const double v = f(tape, tape.constant(x)).value().item();
  if (!std::isfinite(v)) throw NumericError("grad_check: function is not finite");
  return v;
}

}  // namespace

Tensor analytic_gradient(const ScalarFn& f, const Tensor& x) {
  ad::Tape tape;
  ad::Var xv = tape.variable(x);
  ad::Var y = f(tape, xv);
  if (!std::isfinite(y.value().item())) throw NumericError("grad_check: function is not finite");
  tape.backward(y);
  return tape.grad(xv);
}

Tensor numeric_gradient(const ScalarFn& f, const Tensor& x, double eps) {
  Tensor g(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double hi = eval(f, probe);
    probe[i] = orig - eps;
    const double lo = eval(f, probe);
    probe[i] = orig;
    g[i] = (hi - lo) / (2.0 * eps);
  }
  return g;
}

double grad_check(const ScalarFn& f, const Tensor& x, double eps) {
  const Tensor analytic = analytic_gradient(f, x);
  const Tensor numeric = numeric_gradient(f, x, eps);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double err = std::abs(analytic[i] - numeric[i]) / std::max(1.0, std::abs(numeric[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace scn
