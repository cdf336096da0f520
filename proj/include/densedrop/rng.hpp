// Copyright (c) 2026 The densedrop Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace densedrop {

namespace detail {
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}
}  // namespace detail

/// Counter-based generator: the n-th draw of a stream is a pure function of
/// (seed, stream, n). Streams derived with different keys never share draws,
/// and the bit pattern is identical on every platform.
class CounterRng {
 public:
  constexpr CounterRng() = default;
  constexpr explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : seed_(seed), stream_(stream) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }
  /// Number of draws consumed so far.
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept {
    const std::uint64_t key = detail::splitmix64(seed_ ^ detail::splitmix64(stream_));
    return detail::splitmix64(key ^ detail::splitmix64(counter_++ + 0x632BE59BD9B4E019ull));
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) noexcept {
    // Lemire's multiply-shift; bias is below 2^-64 * bound and irrelevant here.
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// Standard normal via Box-Muller; consumes two draws.
  double normal() noexcept {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Child stream keyed by up to three integers, e.g. (block, consumer, step).
  CounterRng derive(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const noexcept {
    std::uint64_t s = detail::splitmix64(stream_ ^ 0xA0761D6478BD642Full);
    s = detail::splitmix64(s ^ a);
    s = detail::splitmix64(s ^ (b + 0xE7037ED1A0B428DBull));
    s = detail::splitmix64(s ^ (c + 0x8EBC6AF09C88C6E3ull));
    return CounterRng(seed_, s);
  }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace densedrop
