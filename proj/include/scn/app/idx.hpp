#ifndef SCN_APP_IDX_HPP
#define SCN_APP_IDX_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scn/train/dataset.hpp"

namespace scn::app {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

struct IdxImages {
  std::size_t count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;
};

/// Parses a big-endian IDX image file. Throws IoError on bad magic or truncation.
IdxImages read_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);

void write_idx_images(const std::filesystem::path& path, const IdxImages& images);
void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels);

/// Images as (count, 1, rows, cols) scaled by 1/255, with their labels.
train::Dataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path, std::string split = "");

/// The standard file pair for "train" or "t10k" inside `dir`.
train::Dataset load_mnist_split(const std::filesystem::path& dir, const std::string& split);

}  // namespace scn::app

#endif  // SCN_APP_IDX_HPP
