// Copyright (c) 2026 The densedrop Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "densedrop/autograd.hpp"
#include "densedrop/errors.hpp"
#include "densedrop/ops.hpp"
#include "densedrop/rng.hpp"
#include "densedrop/tensor.hpp"

namespace densedrop {

/// The unit that survives or dies as a whole.
enum class Granularity { UnitWise, ChannelWise, LayerWise };

/// Where masks sit inside a dense block.
///   Standard:   one mask on each layer output, shared by all later consumers.
///   PreDropout: an independent mask on every (source, consumer) pair, applied
///               to the consumer's concatenated input.
enum class DropoutMode { None, Standard, PreDropout };

inline std::string to_string(Granularity g) {
  switch (g) {
    case Granularity::UnitWise: return "unit";
    case Granularity::ChannelWise: return "channel";
    case Granularity::LayerWise: return "layer";
  }
  return "?";
}

inline std::string to_string(DropoutMode m) {
  switch (m) {
    case DropoutMode::None: return "none";
    case DropoutMode::Standard: return "standard";
    case DropoutMode::PreDropout: return "pre";
  }
  return "?";
}

inline Granularity parse_granularity(std::string_view s) {
  if (s == "unit") return Granularity::UnitWise;
  if (s == "channel") return Granularity::ChannelWise;
  if (s == "layer") return Granularity::LayerWise;
  throw ConfigError("unknown granularity '" + std::string(s) + "' (expected unit|channel|layer)");
}

inline DropoutMode parse_dropout_mode(std::string_view s) {
  if (s == "none") return DropoutMode::None;
  if (s == "standard") return DropoutMode::Standard;
  if (s == "pre") return DropoutMode::PreDropout;
  throw ConfigError("unknown dropout mode '" + std::string(s) + "' (expected none|standard|pre)");
}

/// Channels [begin, end) of a concatenation that came from source layer `source`.
struct Segment {
  std::size_t source = 0;
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t channels() const noexcept { return end - begin; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

/// Segments must tile [0, channels) in order with strictly increasing
/// sources. Throws ShapeError otherwise.
inline void validate_segments(std::span<const Segment> segments, std::size_t channels) {
  if (segments.empty()) throw ShapeError("segment list is empty");
  std::size_t next = 0;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const auto& seg = segments[s];
    if (seg.begin != next || seg.end <= seg.begin)
      throw ShapeError("segment " + std::to_string(s) + " [" + std::to_string(seg.begin) + ", " +
                       std::to_string(seg.end) + ") is not contiguous with the previous one");
    if (s > 0 && seg.source <= segments[s - 1].source)
      throw ShapeError("segment sources must strictly increase");
    next = seg.end;
  }
  if (next != channels)
    throw ShapeError("segments cover " + std::to_string(next) + " channels, tensor has " +
                     std::to_string(channels));
}

/// A concatenated tensor together with the provenance of its channel ranges.
template <class T>
struct SegmentedInput {
  Var<T> tensor;
  std::vector<Segment> segments;
};

/// Where the bits of a mask came from, enough to replay it.
struct RngRecord {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::uint64_t first_draw = 0;
  std::uint64_t draws = 0;
};

/// One sampled realisation of a Bernoulli mask with inverted scaling:
/// survivors hold 1/p of their segment, the rest hold 0.
template <class T>
struct MaskTensor {
  Tensor<T> values;
  Granularity granularity = Granularity::UnitWise;
  std::vector<Segment> segments;
  std::vector<double> probs;  // one per segment
  RngRecord rng;
};

namespace detail {
inline void validate_probs(std::span<const double> probs, std::size_t segments) {
  if (probs.size() != segments)
    throw InputError("expected " + std::to_string(segments) + " survival probabilities, got " +
                     std::to_string(probs.size()));
  for (double p : probs) {
    if (p == 0.0)
      throw InputError("survival probability 0 is not allowed (inverted scaling divides by p)");
    if (!(p > 0.0 && p <= 1.0))
      throw InputError("survival probability must lie in (0, 1], got " + std::to_string(p));
  }
}
}  // namespace detail

/// Draws one mask for an NCHW `shape` whose channels are partitioned by
/// `segments`. Draw order is fixed: samples outer, then segments, channels and
/// pixels as the granularity requires.
template <class T>
MaskTensor<T> sample_mask(const Shape& shape, std::span<const Segment> segments,
                          std::span<const double> probs, Granularity granularity,
                          CounterRng& rng) {
  const auto d = dims4(shape, "sample_mask");
  validate_segments(segments, d.c);
  detail::validate_probs(probs, segments.size());

  MaskTensor<T> mask;
  mask.granularity = granularity;
  mask.segments.assign(segments.begin(), segments.end());
  mask.probs.assign(probs.begin(), probs.end());
  mask.rng = {rng.seed(), rng.stream(), rng.counter(), 0};
  mask.values = Tensor<T>(shape);

  const std::size_t plane = d.plane();
  T* out = mask.values.data();
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t s = 0; s < segments.size(); ++s) {
      const double p = probs[s];
      const T keep = static_cast<T>(T{1} / static_cast<T>(p));
      const auto& seg = segments[s];
      T* base = out + (n * d.c + seg.begin) * plane;
      const std::size_t span = seg.channels() * plane;
      switch (granularity) {
        case Granularity::UnitWise:
          for (std::size_t i = 0; i < span; ++i) base[i] = rng.bernoulli(p) ? keep : T{0};
          break;
        case Granularity::ChannelWise:
          for (std::size_t c = 0; c < seg.channels(); ++c) {
            const T v = rng.bernoulli(p) ? keep : T{0};
            std::fill_n(base + c * plane, plane, v);
          }
          break;
        case Granularity::LayerWise:
          std::fill_n(base, span, rng.bernoulli(p) ? keep : T{0});
          break;
      }
    }
  }
  mask.rng.draws = rng.counter() - mask.rng.first_draw;
  return mask;
}

/// Train mode multiplies by the mask (and scales gradients the same way);
/// eval mode is the identity.
template <class T>
Var<T> apply_mask(const Var<T>& input, const MaskTensor<T>& mask, Mode mode) {
  if (input->value.shape() != mask.values.shape())
    throw ShapeError("apply_mask: input " + to_string(input->value.shape()) + " vs mask " +
                     to_string(mask.values.shape()));
  if (mode == Mode::Eval) return input;
  return scale_by(input, mask.values, "dropout");
}

/// Shape, segment structure and probabilities of one mask consumer.
struct ConsumerSpec {
  Shape shape;
  std::vector<Segment> segments;
  std::vector<double> probs;
};

/// Masks for consumers 0..m-1. Consumer c draws from its own child stream of
/// `rng`, so masks of distinct consumers never share random bits.
template <class T>
std::vector<MaskTensor<T>> mask_family(std::span<const ConsumerSpec> consumers,
                                       Granularity granularity, const CounterRng& rng) {
  std::vector<MaskTensor<T>> out;
  out.reserve(consumers.size());
  for (std::size_t c = 0; c < consumers.size(); ++c) {
    const auto& spec = consumers[c];
    if (c > 0) {
      // Shared sources must keep their channel extents across consumers.
      const auto& prev = consumers[c - 1].segments;
      for (std::size_t s = 0; s < std::min(prev.size(), spec.segments.size()); ++s)
        if (prev[s].source == spec.segments[s].source &&
            prev[s].channels() != spec.segments[s].channels())
          throw ShapeError("mask_family: consumers disagree on the width of source " +
                           std::to_string(prev[s].source));
    }
    CounterRng stream = rng.derive(c);
    out.push_back(sample_mask<T>(spec.shape, spec.segments, spec.probs, granularity, stream));
  }
  return out;
}

}  // namespace densedrop
