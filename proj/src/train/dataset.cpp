#include "scn/train/dataset.hpp"

#include <algorithm>

#include "scn/core/errors.hpp"

namespace scn::train {

void Dataset::validate() const {
  if (images.rank() != 4) {
    throw ShapeError("dataset images must be (count, C, H, W), got " + shape_str(images.shape()));
  }
  if (images.dim(0) != labels.size()) {
    throw ShapeError("dataset has " + std::to_string(images.dim(0)) + " images but " +
                     std::to_string(labels.size()) + " labels");
  }
}

Tensor Dataset::gather(std::span<const std::size_t> indices) const {
  const std::size_t per = images.size() / std::max<std::size_t>(images.dim(0), 1);
  Tensor out({indices.size(), images.dim(1), images.dim(2), images.dim(3)});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(images.ptr() + indices[i] * per, per, out.ptr() + i * per);
  }
  return out;
}

std::vector<int> Dataset::gather_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) out[i] = labels.at(indices[i]);
  return out;
}

Dataset Dataset::head(std::size_t count) const {
  if (count == 0 || count >= size()) return *this;
  const std::size_t per = images.size() / images.dim(0);
  Dataset out;
  out.images = Tensor({count, images.dim(1), images.dim(2), images.dim(3)},
                      std::vector<double>(images.data().begin(),
                                          images.data().begin() + count * per));
  out.labels.assign(labels.begin(), labels.begin() + count);
  out.split = split;
  return out;
}

}  // namespace scn::train
