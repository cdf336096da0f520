// Copyright (c) 2026 The densedrop Authors
// SPDX-License-Identifier: Apache-2.0
//
// Glue between library types and the plain arrays of the oracles.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <functional>
#include <iterator>
#include <string>
#include <vector>

#include "densedrop/densedrop.hpp"
#include "oracles/block_reference.hpp"
#include "oracles/reference.hpp"

namespace support {

namespace dd = densedrop;

template <class T>
oracle::Arr to_arr(const dd::Tensor<T>& t) {
  const auto& s = t.shape();
  oracle::Arr a(s.at(0), s.size() > 1 ? s[1] : 1, s.size() > 2 ? s[2] : 1, s.size() > 3 ? s[3] : 1);
  for (std::size_t i = 0; i < t.size(); ++i) a.v[i] = static_cast<double>(t[i]);
  return a;
}

template <class T>
dd::Tensor<T> to_tensor(const oracle::Arr& a) {
  dd::Tensor<T> t({a.n, a.c, a.h, a.w});
  for (std::size_t i = 0; i < a.v.size(); ++i) t[i] = static_cast<T>(a.v[i]);
  return t;
}

template <class T>
std::vector<double> to_vec(const dd::Tensor<T>& t) {
  return {t.values().begin(), t.values().end()};
}

template <class T>
oracle::LayerWeights weights_of(const dd::CompositeLayer<T>& l) {
  oracle::LayerWeights w;
  w.bn1 = {to_vec(l.bn1.gamma->value), to_vec(l.bn1.beta->value)};
  w.conv1 = to_arr(l.conv1->value);
  if (l.bn2) {
    w.bn2 = oracle::BnWeights{to_vec(l.bn2->gamma->value), to_vec(l.bn2->beta->value)};
    w.conv2 = to_arr(l.conv2->value);
  }
  return w;
}

/// Uniform-ish values in [-1, 1] from a counter stream.
inline oracle::Arr random_arr(std::size_t n, std::size_t c, std::size_t h, std::size_t w,
                              std::uint64_t seed) {
  dd::CounterRng rng(seed, 0xA11);
  oracle::Arr a(n, c, h, w);
  for (auto& v : a.v) v = 2.0 * rng.uniform() - 1.0;
  return a;
}

/// Channel-wise inverted mask: each (sample, channel) keeps with probability p.
inline oracle::Arr channel_mask(std::size_t n, std::size_t c, std::size_t h, std::size_t w, double p,
                                std::uint64_t seed) {
  dd::CounterRng rng(seed, 0xB22);
  oracle::Arr m(n, c, h, w);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double v = rng.uniform() < p ? 1.0 / p : 0.0;
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) m(s, ch, i, j) = v;
    }
  return m;
}

/// Wraps an explicit mask array as a MaskTensor the engine can consume.
template <class T>
dd::MaskTensor<T> as_mask(const oracle::Arr& a) {
  dd::MaskTensor<T> m;
  m.values = to_tensor<T>(a);
  return m;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = a.size() == b.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

/// Largest relative disagreement between reverse-mode gradients of `loss`
/// and central differences, over every scalar of every leaf.
inline double grad_rel_error(std::vector<dd::Var<double>> leaves,
                             const std::function<dd::Var<double>()>& loss, double h = 1e-6) {
  dd::ParameterList<double> params;
  for (std::size_t i = 0; i < leaves.size(); ++i) params.push_back({"leaf" + std::to_string(i), leaves[i], false});
  const auto grads = dd::backward(loss(), params);
  const std::function<double()> f = [&] { return loss()->value[0]; };
  double worst = 0.0;
  for (std::size_t p = 0; p < leaves.size(); ++p)
    for (std::size_t i = 0; i < leaves[p]->value.size(); ++i) {
      const double num = oracle::central_difference(f, leaves[p]->value[i], h);
      const double ana = grads[p][i];
      const double scale = std::max({std::abs(num), std::abs(ana), 1e-8});
      worst = std::max(worst, std::abs(num - ana) / scale);
    }
  return worst;
}

/// Random trainable leaf in [-1, 1].
inline dd::Var<double> random_leaf(dd::Shape shape, std::uint64_t seed) {
  dd::CounterRng rng(seed, 0xC33);
  dd::Tensor<double> t(shape);
  for (auto& v : t.values()) v = 2.0 * rng.uniform() - 1.0;
  return dd::leaf(std::move(t));
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace support
