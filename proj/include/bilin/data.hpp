#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "bilin/errors.hpp"
#include "bilin/matrix.hpp"

namespace bilin {

struct Dataset {
  Matrix images;            // n x input_dim, pixel values in [0, 1]
  std::vector<int> labels;  // class indices
  std::string split_tag;

  std::size_t size() const { return labels.size(); }

  Dataset subset(std::size_t count) const {
    Dataset out;
    count = std::min(count, size());
    out.images = Matrix(count, images.cols());
    for (std::size_t i = 0; i < count; ++i)
      std::copy(images.row(i), images.row(i) + images.cols(), out.images.row(i));
    out.labels.assign(labels.begin(), labels.begin() + count);
    out.split_tag = split_tag;
    return out;
  }
};

namespace detail {

inline std::uint32_t read_be_u32(std::istream& in, const std::string& path) {
  unsigned char buf[4];
  if (!in.read(reinterpret_cast<char*>(buf), 4))
    throw FormatError("IDX file truncated: " + path);
  return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
         (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

}  // namespace detail

// Big-endian IDX container (the MNIST family layout): magic 0x00000803 for
// n x rows x cols ubyte images, 0x00000801 for n ubyte labels. Pixels are
// scaled by 1/255.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                        std::string split_tag = {}) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw FormatError("cannot open IDX images file: " + images_path);
  if (detail::read_be_u32(img, images_path) != 0x00000803u)
    throw FormatError("bad IDX magic for images: " + images_path);
  const std::uint32_t n = detail::read_be_u32(img, images_path);
  const std::uint32_t rows = detail::read_be_u32(img, images_path);
  const std::uint32_t cols = detail::read_be_u32(img, images_path);
  const std::size_t dim = std::size_t(rows) * cols;

  Dataset out;
  out.split_tag = std::move(split_tag);
  out.images = Matrix(n, dim);
  std::vector<unsigned char> rowbuf(dim);
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!img.read(reinterpret_cast<char*>(rowbuf.data()), std::streamsize(dim)))
      throw FormatError("IDX images truncated: " + images_path);
    double* dst = out.images.row(i);
    for (std::size_t j = 0; j < dim; ++j) dst[j] = double(rowbuf[j]) / 255.0;
  }

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw FormatError("cannot open IDX labels file: " + labels_path);
  if (detail::read_be_u32(lab, labels_path) != 0x00000801u)
    throw FormatError("bad IDX magic for labels: " + labels_path);
  const std::uint32_t nl = detail::read_be_u32(lab, labels_path);
  if (nl != n)
    throw FormatError("IDX image/label counts differ: " + images_path + " vs " + labels_path);
  out.labels.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    char c;
    if (!lab.get(c)) throw FormatError("IDX labels truncated: " + labels_path);
    out.labels[i] = int(static_cast<unsigned char>(c));
  }
  return out;
}

// Standard file names under a data directory.
inline Dataset load_mnist_split(const std::string& data_dir, bool train) {
  const std::string prefix = data_dir + "/" + (train ? "train" : "t10k");
  return load_idx(prefix + "-images-idx3-ubyte", prefix + "-labels-idx1-ubyte",
                  train ? "train" : "test");
}

}  // namespace bilin
