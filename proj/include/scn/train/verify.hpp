#ifndef SCN_TRAIN_VERIFY_HPP
#define SCN_TRAIN_VERIFY_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "scn/core/grad_check.hpp"
#include "scn/core/random.hpp"
#include "scn/subspace/projector.hpp"

namespace scn::train {

struct VerifyOptions {
  int newton_schulz_iters = subspace::kDefaultNewtonSchulzIters;
  /// Replaces every floating-point tolerance (bounds such as |squash(u)| < 1 are unaffected).
  std::optional<double> tolerance;
  std::uint64_t seed = 20240611;
};

struct PropertyResult {
  std::string name;
  std::size_t samples = 0;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct VerificationReport {
  std::vector<PropertyResult> properties;

  bool all_passed() const;
  const PropertyResult* find(const std::string& name) const;
  std::string format() const;
};

/// A scalar function and the point at which to check its gradient.
struct GradInstance {
  ScalarFn f;
  Tensor x;
};

/// Random instance generator for one differentiable primitive.
struct GradCase {
  std::string name;
  std::function<GradInstance(Rng&)> make;
};

/// One case per primitive op on the tape (core, capsule and loss ops).
std::vector<GradCase> primitive_gradient_cases();

/// sc_conv(8,2,3,3) -> sparking -> sc_fc(10,4) -> softmax-over-norms loss
/// on a small random batch, as a function of every weight matrix packed
/// into one flat vector. Instances with a capsule norm within `margin` of
/// the sparking threshold are resampled.
GradInstance two_layer_scn_instance(Rng& rng, double margin);

/// Runs every invariant suite (tensor core, subspace algebra, capsule layers)
/// at its stated tolerance. Failures are report entries, never exceptions.
VerificationReport run_verification_suite(const VerifyOptions& options = {});

}  // namespace scn::train

#endif  // SCN_TRAIN_VERIFY_HPP
