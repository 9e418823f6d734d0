#include "scn/app/idx.hpp"

#include <fstream>
#include <iterator>

#include "scn/core/errors.hpp"

namespace scn::app {

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<std::uint8_t>& bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b, 4);
}

// Validates magic and header length, returns the header size in bytes.
std::size_t check_header(const std::vector<std::uint8_t>& bytes, std::uint32_t magic,
                         std::size_t dims, const std::filesystem::path& path) {
  if (bytes.size() < 4) throw IoError(path.string() + ": truncated header");
  if (be32(bytes, 0) != magic) throw IoError(path.string() + ": bad magic");
  const std::size_t header = 4 + 4 * dims;
  if (bytes.size() < header) throw IoError(path.string() + ": truncated header");
  return header;
}

}  // namespace

IdxImages read_idx_images(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const std::size_t header = check_header(bytes, kIdxImageMagic, 3, path);
  IdxImages out;
  out.count = be32(bytes, 4);
  out.rows = be32(bytes, 8);
  out.cols = be32(bytes, 12);
  const std::size_t expected = out.count * out.rows * out.cols;
  if (bytes.size() - header < expected) throw IoError(path.string() + ": truncated file");
  out.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header),
                    bytes.begin() + static_cast<std::ptrdiff_t>(header + expected));
  return out;
}

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const std::size_t header = check_header(bytes, kIdxLabelMagic, 1, path);
  const std::size_t count = be32(bytes, 4);
  if (bytes.size() - header < count) throw IoError(path.string() + ": truncated file");
  return {bytes.begin() + static_cast<std::ptrdiff_t>(header),
          bytes.begin() + static_cast<std::ptrdiff_t>(header + count)};
}

void write_idx_images(const std::filesystem::path& path, const IdxImages& images) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  put_be32(out, kIdxImageMagic);
  put_be32(out, static_cast<std::uint32_t>(images.count));
  put_be32(out, static_cast<std::uint32_t>(images.rows));
  put_be32(out, static_cast<std::uint32_t>(images.cols));
  out.write(reinterpret_cast<const char*>(images.pixels.data()),
            static_cast<std::streamsize>(images.pixels.size()));
}

void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  put_be32(out, kIdxLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size()));
}

train::Dataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path, std::string split) {
  const IdxImages images = read_idx_images(images_path);
  const auto labels = read_idx_labels(labels_path);
  if (images.count != labels.size()) {
    throw IoError("count mismatch: " + std::to_string(images.count) + " images vs " +
                  std::to_string(labels.size()) + " labels");
  }
  train::Dataset ds;
  ds.split = std::move(split);
  ds.images = Tensor({images.count, 1, images.rows, images.cols});
  auto px = ds.images.data();
  for (std::size_t i = 0; i < images.pixels.size(); ++i) px[i] = images.pixels[i] / 255.0;
  ds.labels.assign(labels.begin(), labels.end());
  return ds;
}

train::Dataset load_mnist_split(const std::filesystem::path& dir, const std::string& split) {
  return load_idx(dir / (split + "-images-idx3-ubyte"), dir / (split + "-labels-idx1-ubyte"), split);
}

}  // namespace scn::app
