// Copyright (c) 2026 The densedrop Authors
// SPDX-License-Identifier: Apache-2.0
//
// Slow, obviously-correct reference implementations used to check the
// library. Nothing here calls into densedrop's ops; tensors are plain
// double arrays with explicit NCHW extents.

#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace oracle {

struct Arr {
  std::size_t n = 0, c = 0, h = 1, w = 1;
  std::vector<double> v;

  Arr() = default;
  Arr(std::size_t n_, std::size_t c_, std::size_t h_, std::size_t w_, double fill = 0.0)
      : n(n_), c(c_), h(h_), w(w_), v(n_ * c_ * h_ * w_, fill) {}

  double& operator()(std::size_t a, std::size_t b, std::size_t y, std::size_t x) {
    return v[((a * c + b) * h + y) * w + x];
  }
  double operator()(std::size_t a, std::size_t b, std::size_t y, std::size_t x) const {
    return v[((a * c + b) * h + y) * w + x];
  }
};

/// Direct six-loop cross-correlation. `wt` is [O, C, K, K] stored as Arr(O, C, K, K).
inline Arr conv(const Arr& x, const Arr& wt, std::size_t stride, std::size_t pad) {
  assert(x.c == wt.c);
  const std::size_t k = wt.h;
  const std::size_t ho = (x.h + 2 * pad - k) / stride + 1;
  const std::size_t wo = (x.w + 2 * pad - k) / stride + 1;
  Arr y(x.n, wt.n, ho, wo);
  for (std::size_t s = 0; s < x.n; ++s)
    for (std::size_t o = 0; o < wt.n; ++o)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          double acc = 0.0;
          for (std::size_t ci = 0; ci < x.c; ++ci)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < wt.w; ++kx) {
                const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(x.h) || ix >= static_cast<long>(x.w))
                  continue;
                acc += x(s, ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) *
                       wt(o, ci, ky, kx);
              }
          y(s, o, oy, ox) = acc;
        }
  return y;
}

/// Batch-statistics normalization (biased variance) followed by the affine map.
inline Arr batchnorm_train(const Arr& x, const std::vector<double>& gamma,
                           const std::vector<double>& beta, double eps = 1e-5) {
  Arr y = x;
  const double m = static_cast<double>(x.n * x.h * x.w);
  for (std::size_t ch = 0; ch < x.c; ++ch) {
    double mean = 0.0;
    for (std::size_t s = 0; s < x.n; ++s)
      for (std::size_t i = 0; i < x.h; ++i)
        for (std::size_t j = 0; j < x.w; ++j) mean += x(s, ch, i, j);
    mean /= m;
    double var = 0.0;
    for (std::size_t s = 0; s < x.n; ++s)
      for (std::size_t i = 0; i < x.h; ++i)
        for (std::size_t j = 0; j < x.w; ++j) var += (x(s, ch, i, j) - mean) * (x(s, ch, i, j) - mean);
    var /= m;
    for (std::size_t s = 0; s < x.n; ++s)
      for (std::size_t i = 0; i < x.h; ++i)
        for (std::size_t j = 0; j < x.w; ++j)
          y(s, ch, i, j) = gamma[ch] * (x(s, ch, i, j) - mean) / std::sqrt(var + eps) + beta[ch];
  }
  return y;
}

inline Arr batchnorm_eval(const Arr& x, const std::vector<double>& gamma, const std::vector<double>& beta,
                          const std::vector<double>& mean, const std::vector<double>& var,
                          double eps = 1e-5) {
  Arr y = x;
  for (std::size_t s = 0; s < x.n; ++s)
    for (std::size_t ch = 0; ch < x.c; ++ch)
      for (std::size_t i = 0; i < x.h; ++i)
        for (std::size_t j = 0; j < x.w; ++j)
          y(s, ch, i, j) = gamma[ch] * (x(s, ch, i, j) - mean[ch]) / std::sqrt(var[ch] + eps) + beta[ch];
  return y;
}

inline Arr relu(Arr x) {
  for (auto& e : x.v) e = e > 0.0 ? e : 0.0;
  return x;
}

inline Arr hadamard(Arr x, const Arr& m) {
  assert(x.v.size() == m.v.size());
  for (std::size_t i = 0; i < x.v.size(); ++i) x.v[i] *= m.v[i];
  return x;
}

inline Arr concat(const std::vector<Arr>& parts) {
  std::size_t c = 0;
  for (const auto& p : parts) c += p.c;
  Arr y(parts[0].n, c, parts[0].h, parts[0].w);
  for (std::size_t s = 0; s < y.n; ++s) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      for (std::size_t ch = 0; ch < p.c; ++ch)
        for (std::size_t i = 0; i < p.h; ++i)
          for (std::size_t j = 0; j < p.w; ++j) y(s, off + ch, i, j) = p(s, ch, i, j);
      off += p.c;
    }
  }
  return y;
}

/// Channels [begin, end) of x.
inline Arr slice(const Arr& x, std::size_t begin, std::size_t end) {
  Arr y(x.n, end - begin, x.h, x.w);
  for (std::size_t s = 0; s < x.n; ++s)
    for (std::size_t ch = begin; ch < end; ++ch)
      for (std::size_t i = 0; i < x.h; ++i)
        for (std::size_t j = 0; j < x.w; ++j) y(s, ch - begin, i, j) = x(s, ch, i, j);
  return y;
}

/// Mean cross-entropy of row-major logits [n, classes].
inline double cross_entropy(const std::vector<double>& logits, std::size_t classes,
                            const std::vector<int>& labels) {
  double total = 0.0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    double mx = logits[r * classes];
    for (std::size_t k = 1; k < classes; ++k) mx = std::max(mx, logits[r * classes + k]);
    double z = 0.0;
    for (std::size_t k = 0; k < classes; ++k) z += std::exp(logits[r * classes + k] - mx);
    total += std::log(z) + mx - logits[r * classes + static_cast<std::size_t>(labels[r])];
  }
  return total / static_cast<double>(labels.size());
}

/// Central difference of f along one coordinate of `x`.
inline double central_difference(const std::function<double()>& f, double& x, double h) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * h);
}

/// Trainable scalars of a DenseNet, tallied layer by layer from the
/// architecture description alone: 3x3 stem, three dense blocks of n
/// composite layers, two compressing transitions, BN head and classifier.
inline std::size_t analytic_param_count(bool bc, std::size_t depth, std::size_t k,
                                        std::size_t classes) {
  const std::size_t n = bc ? (depth - 4) / 6 : (depth - 4) / 3;
  std::size_t ch = bc ? 2 * k : 16;
  std::size_t total = 3 * 3 * 3 * ch;  // stem conv, no bias
  for (int block = 0; block < 3; ++block) {
    for (std::size_t layer = 0; layer < n; ++layer) {
      total += 2 * ch;  // BN gamma, beta
      if (bc) {
        total += ch * 4 * k;      // 1x1 bottleneck
        total += 2 * 4 * k;       // BN
        total += 4 * k * k * 9;   // 3x3
      } else {
        total += ch * k * 9;
      }
      ch += k;
    }
    if (block < 2) {
      const std::size_t out = bc ? ch / 2 : ch;
      total += 2 * ch + ch * out;
      ch = out;
    }
  }
  total += 2 * ch;                   // final BN
  total += ch * classes + classes;   // classifier
  return total;
}

}  // namespace oracle
