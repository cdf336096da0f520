// Copyright (c) 2026 The densedrop Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace densedrop {

/// Two tensor shapes that an operation needs to agree do not.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A caller-supplied value is outside the accepted domain (probabilities,
/// labels, batch sizes, ...).
struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// NaN/Inf produced or consumed where finite values are required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Misuse of the autograd API (non-scalar backward root, cyclic graph).
struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

/// A dataset or checkpoint archive does not have the expected layout.
struct CorruptArchiveError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace densedrop
