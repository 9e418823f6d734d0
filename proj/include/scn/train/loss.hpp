#ifndef SCN_TRAIN_LOSS_HPP
#define SCN_TRAIN_LOSS_HPP

#include <span>

#include "scn/core/autodiff.hpp"
#include "scn/core/tensor.hpp"

namespace scn::train {

/// Batch-mean cross-entropy of softmax over capsule norms (B, n).
/// Throws InvalidArgument for a label outside [0, n).
ad::Var norm_softmax_loss(ad::Var norms, std::span<const int> labels);
double norm_softmax_loss(const Tensor& norms, std::span<const int> labels);

}  // namespace scn::train

#endif  // SCN_TRAIN_LOSS_HPP
