// Copyright (c) 2026 The densedrop Authors
// SPDX-License-Identifier: Apache-2.0
//
// Hand composition of one dense block from naive ops, for the two dropout
// placements:
//   pre-dropout   x_j = H_j([m_{0,j} * x_0, ..., m_{j-1,j} * x_{j-1}]),
//                 W   = [m_{0,n+1} * x_0, ..., m_{n,n+1} * x_n]
//   standard      x_j = m_j * H_j([x_0, ..., x_{j-1}]),  W = [x_0, ..., x_n]
// Masks are given per (source, consumer) pair, so the composition never
// relies on the library's segment bookkeeping.

#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "reference.hpp"

namespace oracle {

struct BnWeights {
  std::vector<double> gamma, beta;
};

/// H_j: BN-ReLU-conv3x3 or BN-ReLU-conv1x1-BN-ReLU-conv3x3, train-mode BN.
struct LayerWeights {
  BnWeights bn1;
  Arr conv1;
  std::optional<BnWeights> bn2;
  Arr conv2;

  Arr apply(const Arr& x) const {
    Arr h = relu(batchnorm_train(x, bn1.gamma, bn1.beta));
    if (!bn2) return conv(h, conv1, 1, 1);
    h = conv(h, conv1, 1, 0);
    h = relu(batchnorm_train(h, bn2->gamma, bn2->beta));
    return conv(h, conv2, 1, 1);
  }
};

/// masks[j-1][i] multiplies source i at consumer j (j = 1..n+1).
inline Arr pre_dropout_block(const Arr& x0, const std::vector<LayerWeights>& layers,
                             const std::vector<std::vector<Arr>>& masks) {
  std::vector<Arr> xs{x0};
  const std::size_t n = layers.size();
  for (std::size_t j = 1; j <= n + 1; ++j) {
    std::vector<Arr> dropped;
    for (std::size_t i = 0; i < j; ++i) dropped.push_back(hadamard(xs[i], masks[j - 1][i]));
    Arr in = concat(dropped);
    if (j == n + 1) return in;
    xs.push_back(layers[j - 1].apply(in));
  }
  return {};
}

/// masks[j-1] multiplies the output of layer j.
inline Arr standard_dropout_block(const Arr& x0, const std::vector<LayerWeights>& layers,
                                  const std::vector<Arr>& masks) {
  std::vector<Arr> xs{x0};
  for (std::size_t j = 1; j <= layers.size(); ++j)
    xs.push_back(hadamard(layers[j - 1].apply(concat(xs)), masks[j - 1]));
  return concat(xs);
}

}  // namespace oracle
