// Copyright 2026 The eigennet Authors
// SPDX-License-Identifier: Apache-2.0

// Dataset ingestion (MNIST IDX, CIFAR-10 binary), a synthetic Gaussian-blob
// generator, and seeded mini-batching with affine normalization.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "eigennet/errors.hpp"
#include "eigennet/tensor.hpp"

namespace eigennet {

/// Per-channel (v / 255 - mean) / std. A single entry applies to every
/// channel.
struct Normalization {
  std::vector<double> mean{0.0};
  std::vector<double> stddev{1.0};

  double apply(std::uint8_t v, std::size_t channel) const {
    const std::size_t c = mean.size() == 1 ? 0 : channel;
    return (static_cast<double>(v) / 255.0 - mean[c]) / stddev[c];
  }
  double invert(double normalized, std::size_t channel) const {
    const std::size_t c = mean.size() == 1 ? 0 : channel;
    return (normalized * stddev[c] + mean[c]) * 255.0;
  }
};

inline Normalization mnist_normalization() { return {{0.1307}, {0.3081}}; }
inline Normalization cifar10_normalization() {
  return {{0.4914, 0.4822, 0.4465}, {0.2470, 0.2435, 0.2616}};
}
inline Normalization synth_normalization() { return {{0.5}, {0.25}}; }

struct Dataset {
  std::string name;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t classes = 0;
  std::vector<std::uint8_t> pixels;  // N x C x H x W
  std::vector<ClassIndex> labels;
  Normalization normalization;

  std::size_t size() const { return labels.size(); }
  std::size_t sample_size() const { return channels * height * width; }

  void validate() const {
    if (labels.empty()) throw DatasetSizeError(name + ": dataset is empty");
    if (channels == 0 || height == 0 || width == 0) {
      throw FormatError(name + ": zero image extent");
    }
    if (pixels.size() != labels.size() * sample_size()) {
      throw LengthError(name + ": pixel buffer does not match geometry");
    }
    for (ClassIndex label : labels) {
      if (label >= classes) {
        throw FormatError(name + ": label " + std::to_string(label) +
                          " exceeds class count " + std::to_string(classes));
      }
    }
  }
};

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

inline std::uint32_t read_be32(std::span<const std::uint8_t> bytes,
                               std::size_t offset,
                               const std::filesystem::path& path) {
  if (bytes.size() < offset + 4) {
    throw LengthError(path.string() + ": truncated IDX header");
  }
  return (std::uint32_t{bytes[offset]} << 24) |
         (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) |
         std::uint32_t{bytes[offset + 3]};
}

inline void append_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline std::string hex32(std::uint32_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s = "0x";
  for (int shift = 28; shift >= 0; shift -= 4) s += kDigits[(v >> shift) & 0xf];
  return s;
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr std::size_t kCifarRecordBytes = 3073;

/// MNIST-style IDX image and label files.
inline Dataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path) {
  const auto images = detail::read_file(images_path);
  const auto labels = detail::read_file(labels_path);

  const std::uint32_t image_magic = detail::read_be32(images, 0, images_path);
  if (image_magic != kIdxImageMagic) {
    throw FormatError(images_path.string() + ": expected image magic " +
                      detail::hex32(kIdxImageMagic) + ", found " +
                      detail::hex32(image_magic));
  }
  const std::uint32_t label_magic = detail::read_be32(labels, 0, labels_path);
  if (label_magic != kIdxLabelMagic) {
    throw FormatError(labels_path.string() + ": expected label magic " +
                      detail::hex32(kIdxLabelMagic) + ", found " +
                      detail::hex32(label_magic));
  }

  const std::size_t count = detail::read_be32(images, 4, images_path);
  const std::size_t rows = detail::read_be32(images, 8, images_path);
  const std::size_t cols = detail::read_be32(images, 12, images_path);
  const std::size_t label_count = detail::read_be32(labels, 4, labels_path);
  if (count != label_count) {
    throw FormatError("IDX image count " + std::to_string(count) +
                      " differs from label count " +
                      std::to_string(label_count));
  }
  const std::size_t image_bytes = count * rows * cols;
  if (images.size() < 16 + image_bytes) {
    throw LengthError(images_path.string() + ": expected " +
                      std::to_string(image_bytes) + " pixel bytes, found " +
                      std::to_string(images.size() - 16));
  }
  if (labels.size() < 8 + count) {
    throw LengthError(labels_path.string() + ": expected " +
                      std::to_string(count) + " label bytes, found " +
                      std::to_string(labels.size() - 8));
  }

  Dataset ds;
  ds.name = "mnist";
  ds.channels = 1;
  ds.height = rows;
  ds.width = cols;
  ds.classes = 10;
  ds.normalization = mnist_normalization();
  ds.pixels.assign(images.begin() + 16,
                   images.begin() + 16 + static_cast<std::ptrdiff_t>(image_bytes));
  ds.labels.assign(labels.begin() + 8,
                   labels.begin() + 8 + static_cast<std::ptrdiff_t>(count));
  ds.validate();
  return ds;
}

inline void write_idx(const Dataset& ds,
                      const std::filesystem::path& images_path,
                      const std::filesystem::path& labels_path) {
  if (ds.channels != 1) throw FormatError("IDX images are single-channel");
  std::vector<std::uint8_t> images;
  images.reserve(16 + ds.pixels.size());
  detail::append_be32(images, kIdxImageMagic);
  detail::append_be32(images, static_cast<std::uint32_t>(ds.size()));
  detail::append_be32(images, static_cast<std::uint32_t>(ds.height));
  detail::append_be32(images, static_cast<std::uint32_t>(ds.width));
  images.insert(images.end(), ds.pixels.begin(), ds.pixels.end());

  std::vector<std::uint8_t> labels;
  labels.reserve(8 + ds.size());
  detail::append_be32(labels, kIdxLabelMagic);
  detail::append_be32(labels, static_cast<std::uint32_t>(ds.size()));
  for (ClassIndex label : ds.labels) {
    labels.push_back(static_cast<std::uint8_t>(label));
  }
  detail::write_file(images_path, images);
  detail::write_file(labels_path, labels);
}

/// Concatenated CIFAR-10 binary batch files: 1 label byte + 3x32x32 pixels.
inline Dataset load_cifar10_bin(std::span<const std::filesystem::path> paths) {
  Dataset ds;
  ds.name = "cifar10";
  ds.channels = 3;
  ds.height = 32;
  ds.width = 32;
  ds.classes = 10;
  ds.normalization = cifar10_normalization();
  for (const auto& path : paths) {
    const auto bytes = detail::read_file(path);
    if (bytes.empty()) throw DatasetSizeError(path.string() + ": empty file");
    if (bytes.size() % kCifarRecordBytes != 0) {
      throw FormatError(path.string() + ": size " +
                        std::to_string(bytes.size()) +
                        " is not a multiple of " +
                        std::to_string(kCifarRecordBytes));
    }
    const std::size_t records = bytes.size() / kCifarRecordBytes;
    ds.labels.reserve(ds.labels.size() + records);
    ds.pixels.reserve(ds.pixels.size() + records * (kCifarRecordBytes - 1));
    for (std::size_t r = 0; r < records; ++r) {
      const auto* rec = bytes.data() + r * kCifarRecordBytes;
      ds.labels.push_back(rec[0]);
      ds.pixels.insert(ds.pixels.end(), rec + 1, rec + kCifarRecordBytes);
    }
  }
  ds.validate();
  return ds;
}

inline void write_cifar10_bin(const Dataset& ds,
                              const std::filesystem::path& path) {
  if (ds.sample_size() != kCifarRecordBytes - 1) {
    throw FormatError("CIFAR-10 records hold 3x32x32 images");
  }
  std::vector<std::uint8_t> bytes;
  bytes.reserve(ds.size() * kCifarRecordBytes);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    bytes.push_back(static_cast<std::uint8_t>(ds.labels[i]));
    const auto* px = ds.pixels.data() + i * ds.sample_size();
    bytes.insert(bytes.end(), px, px + ds.sample_size());
  }
  detail::write_file(path, bytes);
}

/// Standard file names under a data directory.
inline Dataset load_mnist_dir(const std::filesystem::path& dir, bool train) {
  const std::string prefix = train ? "train" : "t10k";
  return load_idx(dir / (prefix + "-images-idx3-ubyte"),
                  dir / (prefix + "-labels-idx1-ubyte"));
}

inline Dataset load_cifar10_dir(const std::filesystem::path& dir, bool train) {
  std::vector<std::filesystem::path> files;
  if (train) {
    for (int i = 1; i <= 5; ++i) {
      files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
    }
  } else {
    files.push_back(dir / "test_batch.bin");
  }
  return load_cifar10_bin(files);
}

/// Seeded Gaussian clusters, one per class, stored as 8-bit features
/// (dims x 1 x 1). Centers are redrawn until the nearest pair is at least
/// `separation` standard deviations apart.
inline Dataset synth_blobs(std::size_t classes, std::size_t dims,
                           std::size_t per_class, double separation,
                           std::uint64_t seed) {
  if (!(separation > 0.0)) throw ConfigError("separation must be > 0");
  if (classes == 0 || dims == 0 || per_class == 0) {
    throw ConfigError("synth_blobs needs classes, dims and per_class > 0");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> place(48.0, 208.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // The spread of the placement box bounds the achievable gap; aim the
  // cluster width so that the nearest-center gap is separation * sigma.
  std::vector<double> centers(classes * dims);
  double min_gap = 0.0;
  const double wanted_gap = 40.0;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    for (double& c : centers) c = place(rng);
    min_gap = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < classes; ++a) {
      for (std::size_t b = a + 1; b < classes; ++b) {
        double sq = 0.0;
        for (std::size_t d = 0; d < dims; ++d) {
          const double diff = centers[a * dims + d] - centers[b * dims + d];
          sq += diff * diff;
        }
        min_gap = std::min(min_gap, std::sqrt(sq));
      }
    }
    if (classes == 1 || min_gap >= wanted_gap) break;
  }
  const double sigma =
      classes == 1 ? 8.0 : std::max(min_gap / separation, 1e-3);

  Dataset ds;
  ds.name = "synth";
  ds.channels = dims;
  ds.height = 1;
  ds.width = 1;
  ds.classes = classes;
  ds.normalization = synth_normalization();
  ds.pixels.reserve(classes * per_class * dims);
  ds.labels.reserve(classes * per_class);
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t c = 0; c < classes; ++c) {
      for (std::size_t d = 0; d < dims; ++d) {
        const double v = centers[c * dims + d] + sigma * gauss(rng);
        ds.pixels.push_back(
            static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)));
      }
      ds.labels.push_back(static_cast<ClassIndex>(c));
    }
  }
  return ds;
}

/// First `count` samples (all of them when count >= size).
inline Dataset take(const Dataset& ds, std::size_t count) {
  Dataset out = ds;
  count = std::min(count, ds.size());
  out.labels.resize(count);
  out.pixels.resize(count * ds.sample_size());
  return out;
}

struct Batch {
  Tensor x;  // b x C x H x W
  std::vector<ClassIndex> y;
};

/// Normalized b x C x H x W tensor for the given sample indices.
inline Batch gather_batch(const Dataset& ds, std::span<const std::size_t> indices,
                          const Normalization& norm) {
  const std::size_t sample = ds.sample_size();
  const std::size_t area = ds.height * ds.width;
  std::vector<double> values(indices.size() * sample);
  std::vector<ClassIndex> labels(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t idx = indices[i];
    const auto* px = ds.pixels.data() + idx * sample;
    for (std::size_t k = 0; k < sample; ++k) {
      values[i * sample + k] = norm.apply(px[k], k / area);
    }
    labels[i] = ds.labels[idx];
  }
  return {Tensor({indices.size(), ds.channels, ds.height, ds.width},
                 std::move(values)),
          std::move(labels)};
}

/// Seeded mini-batch stream; each epoch draws a fresh permutation and ends
/// with a short batch when the size does not divide evenly.
class BatchStream {
 public:
  BatchStream(const Dataset& ds, std::size_t batch_size,
              std::uint64_t shuffle_seed,
              std::optional<Normalization> normalization = std::nullopt,
              bool shuffle = true)
      : ds_(&ds),
        batch_size_(batch_size),
        seed_(shuffle_seed),
        norm_(normalization.value_or(ds.normalization)),
        shuffle_(shuffle) {
    if (ds.size() == 0) throw DatasetSizeError("cannot batch an empty dataset");
    if (batch_size == 0 || batch_size > ds.size()) {
      throw ConfigError("batch size " + std::to_string(batch_size) +
                        " must lie in [1, " + std::to_string(ds.size()) + "]");
    }
    start_epoch(0);
  }

  void start_epoch(std::size_t epoch) {
    order_.resize(ds_->size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (shuffle_) {
      std::mt19937_64 rng(seed_ + 0x9e3779b97f4a7c15ULL * (epoch + 1));
      std::shuffle(order_.begin(), order_.end(), rng);
    }
    cursor_ = 0;
  }

  std::optional<Batch> next() {
    if (cursor_ >= order_.size()) return std::nullopt;
    const std::size_t count = std::min(batch_size_, order_.size() - cursor_);
    Batch batch = gather_batch(
        *ds_, std::span<const std::size_t>(order_).subspan(cursor_, count),
        norm_);
    cursor_ += count;
    return batch;
  }

  std::size_t batches_per_epoch() const {
    return (ds_->size() + batch_size_ - 1) / batch_size_;
  }
  std::span<const std::size_t> order() const { return order_; }

 private:
  const Dataset* ds_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  Normalization norm_;
  bool shuffle_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

inline BatchStream batch_iter(
    const Dataset& ds, std::size_t batch_size, std::uint64_t shuffle_seed,
    std::optional<Normalization> normalization = std::nullopt) {
  return BatchStream(ds, batch_size, shuffle_seed, std::move(normalization));
}

}  // namespace eigennet
