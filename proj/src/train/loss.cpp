#include "scn/train/loss.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "scn/core/errors.hpp"

namespace scn::train {

namespace {

// Row-wise softmax probabilities and the mean negative log-likelihood.
double softmax_nll(const Tensor& logits, std::span<const int> labels, Tensor* probs) {
  const std::size_t batch = logits.dim(0);
  const std::size_t n = logits.size() / std::max<std::size_t>(batch, 1);
  if (labels.size() != batch) {
    throw ShapeError("loss: " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(batch));
  }
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const int label = labels[b];
    if (label < 0 || static_cast<std::size_t>(label) >= n) {
      throw InvalidArgument("label " + std::to_string(label) + " out of range [0, " +
                            std::to_string(n) + ")");
    }
    const double* row = logits.ptr() + b * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t t = 0; t < n; ++t) z += std::exp(row[t] - mx);
    const double log_z = mx + std::log(z);
    total += log_z - row[label];
    if (probs) {
      for (std::size_t t = 0; t < n; ++t) (*probs)[b * n + t] = std::exp(row[t] - log_z);
    }
  }
  return batch ? total / static_cast<double>(batch) : 0.0;
}

}  // namespace

double norm_softmax_loss(const Tensor& norms, std::span<const int> labels) {
  return softmax_nll(norms, labels, nullptr);
}

ad::Var norm_softmax_loss(ad::Var norms, std::span<const int> labels) {
  Tensor probs(norms.shape());
  const double loss = softmax_nll(norms.value(), labels, &probs);
  std::vector<int> owned(labels.begin(), labels.end());
  return norms.tape().record(
      Tensor::scalar(loss), {norms},
      [probs = std::move(probs), owned = std::move(owned)](const ad::PullbackArgs& p) {
        const std::size_t batch = owned.size();
        const std::size_t n = probs.size() / std::max<std::size_t>(batch, 1);
        Tensor g = probs;
        for (std::size_t b = 0; b < batch; ++b) g[b * n + owned[b]] -= 1.0;
        const double scale = p.grad.item() / static_cast<double>(std::max<std::size_t>(batch, 1));
        for (auto& v : g.data()) v *= scale;
        return std::vector<Tensor>{std::move(g)};
      });
}

}  // namespace scn::train
