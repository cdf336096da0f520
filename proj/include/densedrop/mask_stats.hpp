// Copyright (c) 2026 The densedrop Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "densedrop/dropout.hpp"
#include "densedrop/rng.hpp"

namespace densedrop {

/// Monte-Carlo survival rate of one granularity unit.
struct SurvivalEstimate {
  double p = 0.0;
  std::size_t trials = 0;  // Bernoulli units observed
  double frequency = 0.0;
  double sigma = 0.0;      // binomial standard deviation of the frequency
  bool within_3sigma() const { return std::abs(frequency - p) <= 3.0 * sigma + 1e-15; }
};

/// Two-consumer statistics of a mask family.
struct IndependenceEstimate {
  double p = 0.0;
  std::size_t trials = 0;
  double correlation = 0.0;       // Pearson, corresponding entries
  double drop_then_survive = 0.0; // fraction dropped by consumer 1, kept by consumer 2
  double expected = 0.0;          // (1 - p) * p
  double sigma = 0.0;
};

namespace detail {
/// One representative value per Bernoulli unit of a mask.
template <class T>
std::vector<bool> unit_survival(const MaskTensor<T>& m) {
  const auto d = dims4(m.values.shape(), "unit_survival");
  std::vector<bool> out;
  for (std::size_t n = 0; n < d.n; ++n)
    for (const auto& seg : m.segments) {
      const T* base = m.values.data() + (n * d.c + seg.begin) * d.plane();
      switch (m.granularity) {
        case Granularity::UnitWise:
          for (std::size_t i = 0; i < seg.channels() * d.plane(); ++i) out.push_back(base[i] != T{0});
          break;
        case Granularity::ChannelWise:
          for (std::size_t c = 0; c < seg.channels(); ++c) out.push_back(base[c * d.plane()] != T{0});
          break;
        case Granularity::LayerWise:
          out.push_back(base[0] != T{0});
          break;
      }
    }
  return out;
}
}  // namespace detail

/// Samples `draws` masks of shape 1x4x2x2 (two 2-channel segments, both at
/// probability p) and counts surviving units.
inline SurvivalEstimate survival_frequency(Granularity g, double p, std::size_t draws,
                                           CounterRng rng) {
  const std::vector<Segment> segs{{0, 0, 2}, {1, 2, 4}};
  const std::vector<double> probs{p, p};
  std::size_t kept = 0, trials = 0;
  for (std::size_t i = 0; i < draws; ++i) {
    const auto m = sample_mask<double>({1, 4, 2, 2}, segs, probs, g, rng);
    for (bool b : detail::unit_survival(m)) {
      kept += b;
      ++trials;
    }
  }
  SurvivalEstimate e;
  e.p = p;
  e.trials = trials;
  e.frequency = static_cast<double>(kept) / static_cast<double>(trials);
  e.sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
  return e;
}

/// Draws `draws` two-consumer families over the same 1x4x2x2 source layout
/// and measures how the two consumers' masks relate.
inline IndependenceEstimate consumer_independence(Granularity g, double p, std::size_t draws,
                                                  const CounterRng& rng) {
  const std::vector<Segment> segs{{0, 0, 2}, {1, 2, 4}};
  const std::vector<ConsumerSpec> consumers(2, ConsumerSpec{{1, 4, 2, 2}, segs, {p, p}});
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  std::size_t n = 0, drop_keep = 0;
  for (std::size_t i = 0; i < draws; ++i) {
    const auto fam = mask_family<double>(consumers, g, rng.derive(i));
    const auto a = detail::unit_survival(fam[0]);
    const auto b = detail::unit_survival(fam[1]);
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double x = a[k], y = b[k];
      sa += x;
      sb += y;
      saa += x * x;
      sbb += y * y;
      sab += x * y;
      drop_keep += (!a[k] && b[k]);
      ++n;
    }
  }
  IndependenceEstimate e;
  e.p = p;
  e.trials = n;
  const double nn = static_cast<double>(n);
  const double cov = sab / nn - (sa / nn) * (sb / nn);
  const double va = saa / nn - (sa / nn) * (sa / nn);
  const double vb = sbb / nn - (sb / nn) * (sb / nn);
  e.correlation = (va > 0 && vb > 0) ? cov / std::sqrt(va * vb) : 0.0;
  e.drop_then_survive = static_cast<double>(drop_keep) / nn;
  e.expected = (1.0 - p) * p;
  e.sigma = std::sqrt(e.expected * (1.0 - e.expected) / nn);
  return e;
}

}  // namespace densedrop
