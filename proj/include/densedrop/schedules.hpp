// Copyright (c) 2026 The densedrop Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "densedrop/errors.hpp"

namespace densedrop {

/// Survival-probability rule for the masks inside one dense block.
struct ScheduleKind {
  enum class Kind { Uniform, V1, V2, V3 };
  Kind kind = Kind::Uniform;
  double uniform_p = 0.5;  // only read for Uniform

  static ScheduleKind uniform(double p) {
    if (!(p > 0.0 && p <= 1.0))
      throw InputError("uniform schedule: survival probability must lie in (0, 1], got " +
                       std::to_string(p));
    return {Kind::Uniform, p};
  }
  static ScheduleKind v1() { return {Kind::V1, 0.5}; }
  static ScheduleKind v2() { return {Kind::V2, 0.5}; }
  static ScheduleKind v3() { return {Kind::V3, 0.5}; }

  friend bool operator==(const ScheduleKind&, const ScheduleKind&) = default;
};

inline std::string to_string(ScheduleKind::Kind k) {
  switch (k) {
    case ScheduleKind::Kind::Uniform: return "uniform";
    case ScheduleKind::Kind::V1: return "v1";
    case ScheduleKind::Kind::V2: return "v2";
    case ScheduleKind::Kind::V3: return "v3";
  }
  return "?";
}

inline ScheduleKind::Kind parse_schedule_kind(std::string_view s) {
  if (s == "uniform") return ScheduleKind::Kind::Uniform;
  if (s == "v1") return ScheduleKind::Kind::V1;
  if (s == "v2") return ScheduleKind::Kind::V2;
  if (s == "v3") return ScheduleKind::Kind::V3;
  throw ConfigError("unknown schedule '" + std::string(s) + "' (expected uniform|v1|v2|v3)");
}

/// p(i, j) for sources 0 <= i < j and consumers 1 <= j <= n+1. Consumer n+1
/// is the block output that feeds the next transition (or the classifier).
class ScheduleMatrix {
 public:
  ScheduleMatrix(std::size_t n, std::vector<double> dense) : n_(n), p_(std::move(dense)) {}

  std::size_t layers() const noexcept { return n_; }
  std::size_t consumers() const noexcept { return n_ + 1; }

  double operator()(std::size_t i, std::size_t j) const {
    if (j < 1 || j > n_ + 1 || i >= j)
      throw InputError("schedule entry (" + std::to_string(i) + ", " + std::to_string(j) +
                       ") outside 0 <= i < j <= " + std::to_string(n_ + 1));
    return p_[i * (n_ + 2) + j];
  }

  /// Survival probabilities of every source segment seen by consumer j.
  std::vector<double> consumer_probs(std::size_t j) const {
    std::vector<double> out;
    out.reserve(j);
    for (std::size_t i = 0; i < j; ++i) out.push_back((*this)(i, j));
    return out;
  }

 private:
  std::size_t n_;
  std::vector<double> p_;  // (n+2) x (n+2), row = source, col = consumer
};

inline ScheduleMatrix build_schedule(const ScheduleKind& kind, std::size_t n) {
  if (n == 0) throw InputError("build_schedule: a dense block needs at least one layer");
  if (kind.kind == ScheduleKind::Kind::Uniform && !(kind.uniform_p > 0.0 && kind.uniform_p <= 1.0))
    throw InputError("build_schedule: uniform survival probability must lie in (0, 1]");
  const std::size_t w = n + 2;
  const double nn = static_cast<double>(n);
  std::vector<double> p(w * w, 0.0);
  for (std::size_t j = 1; j <= n + 1; ++j)
    for (std::size_t i = 0; i < j; ++i) {
      double v = 0.0;
      switch (kind.kind) {
        case ScheduleKind::Kind::Uniform: v = kind.uniform_p; break;
        case ScheduleKind::Kind::V1: v = 1.0 - 0.5 * static_cast<double>(j - 1) / nn; break;
        case ScheduleKind::Kind::V2: v = 0.5 + 0.5 * static_cast<double>(j - 1) / nn; break;
        // Constant decrement of 0.5/n per unit of distance beyond the adjacent
        // source; written as 0.5*d/n so the endpoints come out exact.
        case ScheduleKind::Kind::V3: v = 1.0 - 0.5 * static_cast<double>(j - i - 1) / nn; break;
      }
      p[i * w + j] = v;
    }
  return ScheduleMatrix(n, std::move(p));
}

}  // namespace densedrop
