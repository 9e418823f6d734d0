#ifndef SCN_TRAIN_DATASET_HPP
#define SCN_TRAIN_DATASET_HPP

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "scn/core/tensor.hpp"

namespace scn::train {

/// Labelled images (count, C, H, W) with class ids.
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  std::string split;

  std::size_t size() const { return labels.size(); }
  /// Throws ShapeError when image and label counts disagree.
  void validate() const;
  /// Gathers the listed examples into a (B, C, H, W) batch.
  Tensor gather(std::span<const std::size_t> indices) const;
  std::vector<int> gather_labels(std::span<const std::size_t> indices) const;
  /// First `count` examples (all when count is 0 or larger than the set).
  Dataset head(std::size_t count) const;
};

}  // namespace scn::train

#endif  // SCN_TRAIN_DATASET_HPP
