// Copyright (c) 2026 The densedrop Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "densedrop/errors.hpp"
#include "densedrop/rng.hpp"
#include "densedrop/tensor.hpp"

namespace densedrop {

inline constexpr std::size_t kImageSide = 32;
inline constexpr std::size_t kImageChannels = 3;
inline constexpr std::size_t kImageBytes = kImageChannels * kImageSide * kImageSide;  // 3072

enum class CifarVariant { C10, C100 };
enum class Split { Train, Test };

inline std::string to_string(CifarVariant v) { return v == CifarVariant::C10 ? "c10" : "c100"; }

inline CifarVariant parse_cifar_variant(std::string_view s) {
  if (s == "c10") return CifarVariant::C10;
  if (s == "c100") return CifarVariant::C100;
  throw ConfigError("unknown dataset variant '" + std::string(s) + "' (expected c10|c100)");
}

inline int class_count(CifarVariant v) { return v == CifarVariant::C10 ? 10 : 100; }

/// Label bytes per record: CIFAR-100 stores (coarse, fine).
inline std::size_t label_bytes(CifarVariant v) { return v == CifarVariant::C10 ? 1 : 2; }
inline std::size_t record_bytes(CifarVariant v) { return label_bytes(v) + kImageBytes; }

/// Images as raw bytes, one 3x32x32 planar (RRR..GGG..BBB) record after another.
struct Dataset {
  std::vector<std::uint8_t> images;
  std::vector<int> labels;
  std::vector<int> coarse_labels;  // CIFAR-100 only
  Split split = Split::Train;
  int classes = 10;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const std::uint8_t> image(std::size_t i) const {
    return {images.data() + i * kImageBytes, kImageBytes};
  }
};

/// Parses one binary archive. With `expected_records`, the byte length must
/// match exactly.
inline void read_cifar_file(const std::filesystem::path& path, CifarVariant variant, Dataset& into,
                            std::optional<std::size_t> expected_records = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptArchiveError("cannot open CIFAR archive " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  const std::size_t rec = record_bytes(variant);
  if (expected_records) {
    if (bytes.size() != *expected_records * rec)
      throw CorruptArchiveError("corrupt CIFAR archive " + path.string() + ": expected " +
                                std::to_string(*expected_records * rec) + " bytes, got " +
                                std::to_string(bytes.size()));
  } else if (bytes.empty() || bytes.size() % rec != 0) {
    throw CorruptArchiveError("corrupt CIFAR archive " + path.string() + ": " +
                              std::to_string(bytes.size()) + " bytes is not a multiple of the " +
                              std::to_string(rec) + "-byte record");
  }
  const int classes = class_count(variant);
  const std::size_t count = bytes.size() / rec;
  into.images.reserve(into.images.size() + count * kImageBytes);
  for (std::size_t r = 0; r < count; ++r) {
    const std::uint8_t* p = bytes.data() + r * rec;
    const int label = p[label_bytes(variant) - 1];
    if (label >= classes)
      throw CorruptArchiveError("corrupt CIFAR archive " + path.string() + ": record " +
                                std::to_string(r) + " has label " + std::to_string(label));
    if (variant == CifarVariant::C100) into.coarse_labels.push_back(p[0]);
    into.labels.push_back(label);
    into.images.insert(into.images.end(), p + label_bytes(variant), p + rec);
  }
}

/// Loads a full split from a directory holding the standard binary release
/// (data_batch_{1..5}.bin / test_batch.bin, or train.bin / test.bin).
inline Dataset load_cifar(const std::filesystem::path& dir, CifarVariant variant, Split split) {
  Dataset ds;
  ds.split = split;
  ds.classes = class_count(variant);
  auto locate = [&dir](const std::string& name, const char* subdir) {
    auto direct = dir / name;
    if (std::filesystem::exists(direct)) return direct;
    auto nested = dir / subdir / name;
    if (std::filesystem::exists(nested)) return nested;
    throw CorruptArchiveError("CIFAR archive " + direct.string() + " not found");
  };
  if (variant == CifarVariant::C10) {
    constexpr const char* sub = "cifar-10-batches-bin";
    if (split == Split::Train) {
      for (int b = 1; b <= 5; ++b)
        read_cifar_file(locate("data_batch_" + std::to_string(b) + ".bin", sub), variant, ds, 10000);
    } else {
      read_cifar_file(locate("test_batch.bin", sub), variant, ds, 10000);
    }
  } else {
    constexpr const char* sub = "cifar-100-binary";
    read_cifar_file(locate(split == Split::Train ? "train.bin" : "test.bin", sub), variant, ds,
                    split == Split::Train ? 50000 : 10000);
  }
  return ds;
}

/// Record `i` in the on-disk byte layout.
inline std::vector<std::uint8_t> serialize_record(const Dataset& ds, std::size_t i,
                                                  CifarVariant variant) {
  std::vector<std::uint8_t> out;
  out.reserve(record_bytes(variant));
  if (variant == CifarVariant::C100) out.push_back(static_cast<std::uint8_t>(ds.coarse_labels.at(i)));
  out.push_back(static_cast<std::uint8_t>(ds.labels.at(i)));
  auto img = ds.image(i);
  out.insert(out.end(), img.begin(), img.end());
  return out;
}

/// Deterministic CIFAR-shaped data for offline smoke runs: each class is a
/// fixed random low-frequency colour pattern, each sample adds pixel noise
/// and a random shift.
inline Dataset make_synthetic(std::size_t count, int classes, std::uint64_t seed, Split split) {
  Dataset ds;
  ds.split = split;
  ds.classes = classes;
  const CounterRng root(seed, 0x5157);
  constexpr std::size_t grid = 4;  // coarse template cells per side
  std::vector<std::array<double, kImageChannels * grid * grid>> templates(classes);
  for (int c = 0; c < classes; ++c) {
    CounterRng r = root.derive(1, static_cast<std::uint64_t>(c));
    for (auto& v : templates[c]) v = 40.0 + 175.0 * r.uniform();
  }
  CounterRng r = root.derive(2, split == Split::Train ? 0 : 1);
  ds.images.resize(count * kImageBytes);
  for (std::size_t i = 0; i < count; ++i) {
    const int label = static_cast<int>(i % static_cast<std::size_t>(classes));
    ds.labels.push_back(label);
    const auto sy = static_cast<std::ptrdiff_t>(r.below(5)) - 2;
    const auto sx = static_cast<std::ptrdiff_t>(r.below(5)) - 2;
    std::uint8_t* img = ds.images.data() + i * kImageBytes;
    for (std::size_t ch = 0; ch < kImageChannels; ++ch)
      for (std::size_t y = 0; y < kImageSide; ++y)
        for (std::size_t x = 0; x < kImageSide; ++x) {
          const auto ty = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(
                              static_cast<std::ptrdiff_t>(y) + sy, 0, kImageSide - 1)) / (kImageSide / grid);
          const auto tx = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(
                              static_cast<std::ptrdiff_t>(x) + sx, 0, kImageSide - 1)) / (kImageSide / grid);
          const double v = templates[label][(ch * grid + ty) * grid + tx] + 60.0 * (r.uniform() - 0.5);
          img[(ch * kImageSide + y) * kImageSide + x] =
              static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
  }
  return ds;
}

/// Per-channel mean and standard deviation of pixel/255.
struct ChannelStats {
  std::array<double, kImageChannels> mean{0.0, 0.0, 0.0};
  std::array<double, kImageChannels> stddev{1.0, 1.0, 1.0};
};

inline ChannelStats compute_channel_stats(const Dataset& train) {
  ChannelStats s;
  const std::size_t plane = kImageSide * kImageSide;
  for (std::size_t c = 0; c < kImageChannels; ++c) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < train.size(); ++i) {
      const std::uint8_t* p = train.images.data() + i * kImageBytes + c * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        const double v = p[k] / 255.0;
        sum += v;
        sq += v * v;
      }
    }
    const double m = static_cast<double>(train.size() * plane);
    s.mean[c] = sum / m;
    s.stddev[c] = std::sqrt(std::max(sq / m - s.mean[c] * s.mean[c], 1e-12));
  }
  return s;
}

struct AugmentPolicy {
  double flip_probability = 0.5;
  std::size_t pad = 4;
  ChannelStats stats;
};

/// Mirror a planar 3x32x32 image left-right.
inline std::vector<std::uint8_t> hflip(std::span<const std::uint8_t> image) {
  std::vector<std::uint8_t> out(image.size());
  for (std::size_t c = 0; c < kImageChannels; ++c)
    for (std::size_t y = 0; y < kImageSide; ++y)
      for (std::size_t x = 0; x < kImageSide; ++x)
        out[(c * kImageSide + y) * kImageSide + x] =
            image[(c * kImageSide + y) * kImageSide + (kImageSide - 1 - x)];
  return out;
}

/// Normalized image without augmentation (test path).
template <class T>
void normalize_into(std::span<const std::uint8_t> image, const ChannelStats& stats, T* out) {
  const std::size_t plane = kImageSide * kImageSide;
  for (std::size_t c = 0; c < kImageChannels; ++c)
    for (std::size_t k = 0; k < plane; ++k)
      out[c * plane + k] = static_cast<T>((image[c * plane + k] / 255.0 - stats.mean[c]) / stats.stddev[c]);
}

/// Normalize, optionally flip, then take the 32x32 window at (dy, dx) of the
/// image zero-padded by `policy.pad` on every side. Zero after normalization
/// is the channel mean.
template <class T>
void augment_with(std::span<const std::uint8_t> image, const AugmentPolicy& policy, bool flip,
                  std::size_t dy, std::size_t dx, T* out) {
  const auto side = static_cast<std::ptrdiff_t>(kImageSide);
  const auto pad = static_cast<std::ptrdiff_t>(policy.pad);
  for (std::size_t c = 0; c < kImageChannels; ++c) {
    const double mean = policy.stats.mean[c], sd = policy.stats.stddev[c];
    for (std::ptrdiff_t y = 0; y < side; ++y)
      for (std::ptrdiff_t x = 0; x < side; ++x) {
        const std::ptrdiff_t sy = y + static_cast<std::ptrdiff_t>(dy) - pad;
        std::ptrdiff_t sx = x + static_cast<std::ptrdiff_t>(dx) - pad;
        T v{0};
        if (sy >= 0 && sy < side && sx >= 0 && sx < side) {
          if (flip) sx = side - 1 - sx;
          v = static_cast<T>((image[(c * kImageSide + sy) * kImageSide + sx] / 255.0 - mean) / sd);
        }
        out[(c * kImageSide + y) * kImageSide + x] = v;
      }
  }
}

/// Random flip with probability policy.flip_probability and a uniform crop
/// offset in [0, 2*pad] on each axis. Consumes three draws.
template <class T>
void augment(std::span<const std::uint8_t> image, const AugmentPolicy& policy, CounterRng& rng,
             T* out) {
  const bool flip = rng.bernoulli(policy.flip_probability);
  const std::size_t dy = rng.below(2 * policy.pad + 1);
  const std::size_t dx = rng.below(2 * policy.pad + 1);
  augment_with(image, policy, flip, dy, dx, out);
}

/// Full batches plus one trailing partial batch, if any.
inline std::size_t batch_count(std::size_t samples, std::size_t batch_size) {
  return (samples + batch_size - 1) / batch_size;
}

/// `size` indices with exactly size/classes per class, chosen by `rng`.
inline std::vector<std::size_t> stratified_subset(const Dataset& ds, std::size_t size,
                                                  const CounterRng& rng) {
  if (size > ds.size())
    throw InputError("subset of " + std::to_string(size) + " requested from a dataset of " +
                     std::to_string(ds.size()));
  const auto classes = static_cast<std::size_t>(ds.classes);
  if (size % classes != 0)
    throw InputError("stratified subset size " + std::to_string(size) +
                     " is not a multiple of the class count " + std::to_string(classes));
  const std::size_t per_class = size / classes;
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);
  std::vector<std::size_t> out;
  out.reserve(size);
  for (std::size_t c = 0; c < classes; ++c) {
    auto& idx = by_class[c];
    if (idx.size() < per_class)
      throw InputError("class " + std::to_string(c) + " has only " + std::to_string(idx.size()) +
                       " samples, subset needs " + std::to_string(per_class));
    CounterRng r = rng.derive(c);
    for (std::size_t i = 0; i < per_class; ++i)  // partial Fisher-Yates
      std::swap(idx[i], idx[i + r.below(idx.size() - i)]);
    out.insert(out.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(per_class));
  }
  std::sort(out.begin(), out.end());
  return out;
}

template <class T>
struct Batch {
  Tensor<T> images;  // N x 3 x 32 x 32
  std::vector<int> labels;
};

/// Epoch-ordered mini-batches over a dataset (or a fixed subset of it).
/// Training streams shuffle and augment; test streams only normalize.
template <class T>
class BatchStream {
 public:
  BatchStream(const Dataset& ds, std::size_t batch_size, CounterRng rng, AugmentPolicy policy,
              bool train, std::size_t subset_size = 0,
              std::optional<CounterRng> subset_rng = std::nullopt)
      : ds_(&ds), batch_size_(batch_size), rng_(rng), policy_(policy), train_(train) {
    if (batch_size == 0) throw InputError("batch size must be at least 1");
    if (subset_size > 0) {
      indices_ = stratified_subset(ds, subset_size, subset_rng.value_or(rng.derive(0xD5)));
    } else {
      indices_.resize(ds.size());
      for (std::size_t i = 0; i < ds.size(); ++i) indices_[i] = i;
    }
    order_ = indices_;
  }

  std::size_t samples() const noexcept { return indices_.size(); }
  std::size_t batches_per_epoch() const noexcept { return batch_count(indices_.size(), batch_size_); }
  const std::vector<std::size_t>& indices() const noexcept { return indices_; }
  const std::vector<std::size_t>& epoch_order() const noexcept { return order_; }

  /// Resets the cursor; training streams reshuffle with the epoch's own stream.
  void start_epoch(std::size_t epoch) {
    epoch_ = epoch;
    cursor_ = 0;
    order_ = indices_;
    if (train_) {
      CounterRng r = rng_.derive(1, epoch);
      for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[r.below(i)]);
    }
  }

  /// Fills `out` with the next batch; false once the epoch is exhausted.
  bool next(Batch<T>& out) {
    if (cursor_ >= order_.size()) return false;
    const std::size_t n = std::min(batch_size_, order_.size() - cursor_);
    out.images = Tensor<T>({n, kImageChannels, kImageSide, kImageSide});
    out.labels.resize(n);
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t idx = order_[cursor_ + s];
      T* dst = out.images.data() + s * kImageBytes;
      out.labels[s] = ds_->labels[idx];
      if (train_) {
        CounterRng r = rng_.derive(2, epoch_, cursor_ + s);
        augment(ds_->image(idx), policy_, r, dst);
      } else {
        normalize_into(ds_->image(idx), policy_.stats, dst);
      }
    }
    cursor_ += n;
    return true;
  }

 private:
  const Dataset* ds_;
  std::size_t batch_size_;
  CounterRng rng_;
  AugmentPolicy policy_;
  bool train_;
  std::vector<std::size_t> indices_;
  std::vector<std::size_t> order_;
  std::size_t epoch_ = 0;
  std::size_t cursor_ = 0;
};

}  // namespace densedrop
