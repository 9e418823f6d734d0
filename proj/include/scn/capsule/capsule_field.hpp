#ifndef SCN_CAPSULE_CAPSULE_FIELD_HPP
#define SCN_CAPSULE_CAPSULE_FIELD_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "scn/core/tensor.hpp"
#include "scn/subspace/projector.hpp"

namespace scn::capsule {

/// A batch of capsules laid out as (batch, type n, dimension c, height, width).
class CapsuleField {
 public:
  explicit CapsuleField(Tensor values);

  std::size_t batch() const { return values_.dim(0); }
  std::size_t types() const { return values_.dim(1); }
  std::size_t dim() const { return values_.dim(2); }
  std::size_t height() const { return values_.dim(3); }
  std::size_t width() const { return values_.dim(4); }

  const Tensor& values() const { return values_; }

  /// Copy of the capsule vector at (b, t, y, x).
  std::vector<double> capsule(std::size_t b, std::size_t t, std::size_t y = 0,
                              std::size_t x = 0) const;

 private:
  Tensor values_;
};

/// Learnable sparking thresholds: b (one per capsule type), threshold b^2.
struct SparkingParams {
  Tensor b;

  /// b^2 = 0.25 for every type.
  static SparkingParams initial(std::size_t types);
  double threshold(std::size_t type) const { return b[type] * b[type]; }
};

inline constexpr double kInitialSparkingB = 0.5;

using subspace::WeightMatrix;

CapsuleField sc_fc_forward(const Tensor& x, std::span<const WeightMatrix> weights,
                           int iters = subspace::kDefaultNewtonSchulzIters);
CapsuleField sc_conv_forward(const Tensor& x, std::span<const WeightMatrix> weights,
                             std::size_t k, std::size_t stride, std::size_t pad,
                             int iters = subspace::kDefaultNewtonSchulzIters);
CapsuleField sparking(const CapsuleField& u, const SparkingParams& params);
CapsuleField squashing(const CapsuleField& u);
CapsuleField sc_mean_pool(const CapsuleField& f, std::size_t window, std::size_t stride);
/// (batch, n, h, w) norms over the capsule dimension.
Tensor capsule_norms(const CapsuleField& f);

struct CapsuleSelection {
  std::vector<std::size_t> index;  // per batch element
  Tensor vectors;                  // (batch, c)
};

/// Per batch element, the type with the largest norm (lowest index on ties).
/// Requires a 1x1 spatial field.
CapsuleSelection capsule_select(const CapsuleField& f);

}  // namespace scn::capsule

#endif  // SCN_CAPSULE_CAPSULE_FIELD_HPP
