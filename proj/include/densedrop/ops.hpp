// Copyright (c) 2026 The densedrop Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "densedrop/autograd.hpp"
#include "densedrop/errors.hpp"
#include "densedrop/tensor.hpp"

namespace densedrop {

enum class Mode { Train, Eval };

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

struct ConvGeometry {
  std::size_t c, h, w, kh, kw, stride, pad, ho, wo;
  std::size_t rows() const noexcept { return c * kh * kw; }
  std::size_t cols() const noexcept { return ho * wo; }
  bool is_pointwise() const noexcept { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

/// Output columns [lo, hi) whose input column ox*stride + kx - pad is inside [0, w).
inline std::pair<std::size_t, std::size_t> valid_columns(const ConvGeometry& g, std::size_t kx) {
  std::size_t lo = 0, hi = g.wo;
  while (lo < hi && lo * g.stride + kx < g.pad) ++lo;
  while (hi > lo && (hi - 1) * g.stride + kx >= g.pad + g.w) --hi;
  return {lo, hi};
}

/// Unfolds one CHW image into a (C*kh*kw) x (Ho*Wo) patch matrix.
template <class T>
void im2col(const T* img, const ConvGeometry& g, T* col) {
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t ky = 0; ky < g.kh; ++ky)
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        T* row = col + ((c * g.kh + ky) * g.kw + kx) * g.cols();
        const auto [lo, hi] = valid_columns(g, kx);
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          T* dst = row + oy * g.wo;
          const std::size_t iy = oy * g.stride + ky;
          if (iy < g.pad || iy >= g.pad + g.h) {
            std::fill_n(dst, g.wo, T{0});
            continue;
          }
          const T* src = img + (c * g.h + (iy - g.pad)) * g.w;
          std::fill_n(dst, lo, T{0});
          if (g.stride == 1) {
            std::copy(src + lo + kx - g.pad, src + hi + kx - g.pad, dst + lo);
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] = src[ox * g.stride + kx - g.pad];
          }
          std::fill(dst + hi, dst + g.wo, T{0});
        }
      }
}

/// Adjoint of im2col: scatters patch gradients back onto the image.
template <class T>
void col2im_add(const T* col, const ConvGeometry& g, T* img) {
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t ky = 0; ky < g.kh; ++ky)
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const T* row = col + ((c * g.kh + ky) * g.kw + kx) * g.cols();
        const auto [lo, hi] = valid_columns(g, kx);
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const std::size_t iy = oy * g.stride + ky;
          if (iy < g.pad || iy >= g.pad + g.h) continue;
          T* dst = img + (c * g.h + (iy - g.pad)) * g.w;
          const T* src = row + oy * g.wo;
          for (std::size_t ox = lo; ox < hi; ++ox) dst[ox * g.stride + kx - g.pad] += src[ox];
        }
      }
}

}  // namespace detail

/// 2-d cross-correlation, NCHW input, [out, in, kh, kw] weight, no bias.
template <class T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, std::size_t stride = 1,
              std::size_t padding = 0) {
  const auto& xs = input->value.shape();
  const auto& ws = weight->value.shape();
  if (xs.size() != 4 || ws.size() != 4 || xs[1] != ws[1] || stride == 0)
    throw ShapeError("conv2d: input " + to_string(xs) + " incompatible with weight " +
                     to_string(ws));
  if (xs[2] + 2 * padding < ws[2] || xs[3] + 2 * padding < ws[3])
    throw ShapeError("conv2d: kernel " + to_string(ws) + " larger than padded input " +
                     to_string(xs));
  const std::size_t n = xs[0], oc = ws[0];
  detail::ConvGeometry g{xs[1], xs[2], xs[3], ws[2], ws[3], stride, padding, 0, 0};
  g.ho = (g.h + 2 * padding - g.kh) / stride + 1;
  g.wo = (g.w + 2 * padding - g.kw) / stride + 1;

  Tensor<T> out({n, oc, g.ho, g.wo});
  const detail::ConstMatMap<T> wm(weight->value.data(), oc, g.rows());
  std::vector<T> col(g.is_pointwise() ? 0 : g.rows() * g.cols());
  for (std::size_t s = 0; s < n; ++s) {
    const T* img = input->value.data() + s * g.c * g.h * g.w;
    const T* src = img;
    if (!g.is_pointwise()) {
      detail::im2col(img, g, col.data());
      src = col.data();
    }
    detail::MatMap<T> om(out.data() + s * oc * g.cols(), oc, g.cols());
    om.noalias() = wm * detail::ConstMatMap<T>(src, g.rows(), g.cols());
  }

  return make_node<T>("conv2d", std::move(out), {input, weight}, [g, n, oc](Node<T>& self) {
    auto& x = *self.inputs[0];
    auto& w = *self.inputs[1];
    const detail::ConstMatMap<T> wm(w.value.data(), oc, g.rows());
    std::vector<T> col(g.rows() * g.cols());
    detail::RowMat<T> dw = detail::RowMat<T>::Zero(oc, g.rows());
    for (std::size_t s = 0; s < n; ++s) {
      const detail::ConstMatMap<T> dout(self.grad.data() + s * oc * g.cols(), oc, g.cols());
      const T* img = x.value.data() + s * g.c * g.h * g.w;
      if (w.requires_grad) {
        const T* src = img;
        if (!g.is_pointwise()) {
          detail::im2col(img, g, col.data());
          src = col.data();
        }
        dw.noalias() += dout * detail::ConstMatMap<T>(src, g.rows(), g.cols()).transpose();
      }
      if (x.requires_grad) {
        T* dimg = x.grad_buffer().data() + s * g.c * g.h * g.w;
        if (g.is_pointwise()) {
          detail::MatMap<T>(dimg, g.rows(), g.cols()).noalias() += wm.transpose() * dout;
        } else {
          detail::MatMap<T>(col.data(), g.rows(), g.cols()).noalias() = wm.transpose() * dout;
          detail::col2im_add(col.data(), g, dimg);
        }
      }
    }
    if (w.requires_grad) {
      auto& gw = w.grad_buffer();
      detail::MatMap<T>(gw.data(), oc, g.rows()) += dw;
    }
  });
}

/// Per-channel affine parameters plus running statistics of one BN layer.
template <class T>
struct BatchNormState {
  Var<T> gamma;
  Var<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double epsilon = 1e-5;
  double momentum = 0.1;

  explicit BatchNormState(std::size_t channels = 1)
      : gamma(leaf(Tensor<T>({channels}, T{1}))),
        beta(leaf(Tensor<T>({channels}, T{0}))),
        running_mean({channels}, T{0}),
        running_var({channels}, T{1}) {}

  std::size_t channels() const { return gamma->value.size(); }

  void validate() const {
    const std::size_t c = channels();
    if (beta->value.size() != c || running_mean.size() != c || running_var.size() != c)
      throw ShapeError("batchnorm: parameter/statistic lengths disagree with channel count " +
                       std::to_string(c));
    for (std::size_t i = 0; i < c; ++i)
      if (!(running_var[i] > T{0}))
        throw NumericError("batchnorm: running variance must be strictly positive");
  }
};

/// Batch normalization over (N, H, W) per channel. Train mode normalizes
/// with batch statistics and updates the running averages in `state`.
template <class T>
Var<T> batchnorm(const Var<T>& input, BatchNormState<T>& state, Mode mode) {
  const auto d = dims4(input->value.shape(), "batchnorm");
  if (d.c != state.channels())
    throw ShapeError("batchnorm: input " + to_string(input->value.shape()) + " has " +
                     std::to_string(d.c) + " channels, state has " +
                     std::to_string(state.channels()));
  state.validate();
  const std::size_t plane = d.plane();
  const std::size_t m = d.n * plane;
  if (mode == Mode::Train && m < 2)
    throw InputError("batchnorm: train mode needs at least 2 values per channel (N*H*W = " +
                     std::to_string(m) + ")");

  const T* x = input->value.data();
  const T* gamma = state.gamma->value.data();
  const T* beta = state.beta->value.data();
  Tensor<T> out(input->value.shape());
  std::vector<T> mean(d.c), invstd(d.c);

  for (std::size_t c = 0; c < d.c; ++c) {
    if (mode == Mode::Train) {
      double sum = 0.0;
      for (std::size_t s = 0; s < d.n; ++s) {
        const T* p = x + (s * d.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      }
      const double mu = sum / static_cast<double>(m);
      double sq = 0.0;
      for (std::size_t s = 0; s < d.n; ++s) {
        const T* p = x + (s * d.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double dv = p[i] - mu;
          sq += dv * dv;
        }
      }
      const double var = sq / static_cast<double>(m);
      mean[c] = static_cast<T>(mu);
      invstd[c] = static_cast<T>(1.0 / std::sqrt(var + state.epsilon));
      const double unbiased = sq / static_cast<double>(m - 1);
      state.running_mean[c] = static_cast<T>((1.0 - state.momentum) * state.running_mean[c] +
                                             state.momentum * mu);
      state.running_var[c] = static_cast<T>((1.0 - state.momentum) * state.running_var[c] +
                                            state.momentum * unbiased);
    } else {
      mean[c] = state.running_mean[c];
      invstd[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(state.running_var[c]) +
                                                 state.epsilon));
    }
    for (std::size_t s = 0; s < d.n; ++s) {
      const T* p = x + (s * d.c + c) * plane;
      T* q = out.data() + (s * d.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) q[i] = gamma[c] * (p[i] - mean[c]) * invstd[c] + beta[c];
    }
  }

  return make_node<T>(
      "batchnorm", std::move(out), {input, state.gamma, state.beta},
      [d, mode, mean = std::move(mean), invstd = std::move(invstd)](Node<T>& self) {
        auto& xin = *self.inputs[0];
        auto& gm = *self.inputs[1];
        auto& bt = *self.inputs[2];
        const std::size_t plane = d.plane();
        const T mcount = static_cast<T>(d.n * plane);
        const T* x = xin.value.data();
        const T* dy = self.grad.data();
        for (std::size_t c = 0; c < d.c; ++c) {
          T sum_dy{0}, sum_dy_xhat{0};
          for (std::size_t s = 0; s < d.n; ++s) {
            const std::size_t off = (s * d.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              sum_dy += dy[off + i];
              sum_dy_xhat += dy[off + i] * (x[off + i] - mean[c]) * invstd[c];
            }
          }
          if (gm.requires_grad) gm.grad_buffer()[c] += sum_dy_xhat;
          if (bt.requires_grad) bt.grad_buffer()[c] += sum_dy;
          if (!xin.requires_grad) continue;
          const T g = gm.value[c];
          T* dx = xin.grad_buffer().data();
          for (std::size_t s = 0; s < d.n; ++s) {
            const std::size_t off = (s * d.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              if (mode == Mode::Train) {
                const T xhat = (x[off + i] - mean[c]) * invstd[c];
                dx[off + i] += g * invstd[c] / mcount *
                               (mcount * dy[off + i] - sum_dy - xhat * sum_dy_xhat);
              } else {
                dx[off + i] += g * invstd[c] * dy[off + i];
              }
            }
          }
        }
      });
}

/// max(0, x); the subgradient at exactly 0 is 0.
template <class T>
Var<T> relu(const Var<T>& input) {
  Tensor<T> out(input->value.shape());
  const T* x = input->value.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > T{0} ? x[i] : T{0};
  return make_node<T>("relu", std::move(out), {input}, [](Node<T>& self) {
    auto& in = *self.inputs[0];
    T* dx = in.grad_buffer().data();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (in.value[i] > T{0}) dx[i] += self.grad[i];
  });
}

/// Channel-wise concatenation, earliest input first.
template <class T>
Var<T> concat(const std::vector<Var<T>>& inputs) {
  if (inputs.empty()) throw ShapeError("concat: no inputs");
  const auto first = dims4(inputs.front()->value.shape(), "concat");
  std::size_t channels = 0;
  for (const auto& in : inputs) {
    const auto d = dims4(in->value.shape(), "concat");
    if (d.n != first.n || d.h != first.h || d.w != first.w)
      throw ShapeError("concat: " + to_string(in->value.shape()) + " does not match " +
                       to_string(inputs.front()->value.shape()) + " in N, H, W");
    channels += d.c;
  }
  if (inputs.size() == 1) {
    // Identity, but still a distinct node so graph ownership stays uniform.
    return make_node<T>("concat", inputs.front()->value, inputs, [](Node<T>& self) {
      self.inputs[0]->grad_buffer() += self.grad;
    });
  }
  const std::size_t plane = first.plane();
  Tensor<T> out({first.n, channels, first.h, first.w});
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& in : inputs) {
    offsets.push_back(off);
    const std::size_t c = in->value.dim(1);
    for (std::size_t s = 0; s < first.n; ++s)
      std::copy_n(in->value.data() + s * c * plane, c * plane,
                  out.data() + (s * channels + off) * plane);
    off += c;
  }
  return make_node<T>("concat", std::move(out), inputs,
                      [plane, channels, offsets = std::move(offsets), n = first.n](Node<T>& self) {
                        for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                          auto& in = *self.inputs[k];
                          if (!in.requires_grad) continue;
                          const std::size_t c = in.value.dim(1);
                          T* dst = in.grad_buffer().data();
                          for (std::size_t s = 0; s < n; ++s) {
                            const T* src = self.grad.data() + (s * channels + offsets[k]) * plane;
                            for (std::size_t i = 0; i < c * plane; ++i) dst[s * c * plane + i] += src[i];
                          }
                        }
                      });
}

/// Channels [begin, end) of an NCHW tensor.
template <class T>
Var<T> slice_channels(const Var<T>& input, std::size_t begin, std::size_t end) {
  const auto d = dims4(input->value.shape(), "slice_channels");
  if (begin >= end || end > d.c)
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") outside " + to_string(input->value.shape()));
  const std::size_t c = end - begin, plane = d.plane();
  Tensor<T> out({d.n, c, d.h, d.w});
  for (std::size_t s = 0; s < d.n; ++s)
    std::copy_n(input->value.data() + (s * d.c + begin) * plane, c * plane,
                out.data() + s * c * plane);
  return make_node<T>("slice_channels", std::move(out), {input}, [d, begin, c](Node<T>& self) {
    T* dx = self.inputs[0]->grad_buffer().data();
    const std::size_t plane = d.plane();
    for (std::size_t s = 0; s < d.n; ++s)
      for (std::size_t i = 0; i < c * plane; ++i)
        dx[(s * d.c + begin) * plane + i] += self.grad[s * c * plane + i];
  });
}

/// Elementwise product of two same-shaped tensors.
template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  Tensor<T>::require_same_shape(a->value, b->value, "mul");
  Tensor<T> out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
  return make_node<T>("mul", std::move(out), {a, b}, [](Node<T>& self) {
    auto& x = *self.inputs[0];
    auto& y = *self.inputs[1];
    if (x.requires_grad) {
      T* g = x.grad_buffer().data();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * y.value[i];
    }
    if (y.requires_grad) {
      T* g = y.grad_buffer().data();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * x.value[i];
    }
  });
}

/// Elementwise product with a fixed (non-differentiable) tensor.
template <class T>
Var<T> scale_by(const Var<T>& input, const Tensor<T>& factor, const char* op = "scale_by") {
  Tensor<T>::require_same_shape(input->value, factor, op);
  Tensor<T> out(input->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = input->value[i] * factor[i];
  return make_node<T>(op, std::move(out), {input}, [factor](Node<T>& self) {
    T* g = self.inputs[0]->grad_buffer().data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * factor[i];
  });
}

/// Sum of all elements as a scalar.
template <class T>
Var<T> sum(const Var<T>& input) {
  T acc{0};
  for (T v : input->value.values()) acc += v;
  return make_node<T>("sum", Tensor<T>::scalar(acc), {input}, [](Node<T>& self) {
    const T g = self.grad[0];
    for (auto& v : self.inputs[0]->grad_buffer().values()) v += g;
  });
}

/// 2x2 average pooling, stride 2.
template <class T>
Var<T> avgpool2x2(const Var<T>& input) {
  const auto d = dims4(input->value.shape(), "avgpool2x2");
  if (d.h % 2 || d.w % 2)
    throw ShapeError("avgpool2x2: spatial extent must be even, got " +
                     to_string(input->value.shape()));
  const std::size_t ho = d.h / 2, wo = d.w / 2;
  Tensor<T> out({d.n, d.c, ho, wo});
  for (std::size_t s = 0; s < d.n; ++s)
    for (std::size_t c = 0; c < d.c; ++c)
      for (std::size_t y = 0; y < ho; ++y)
        for (std::size_t x = 0; x < wo; ++x) {
          const auto& v = input->value;
          out.at(s, c, y, x) = (v.at(s, c, 2 * y, 2 * x) + v.at(s, c, 2 * y, 2 * x + 1) +
                                v.at(s, c, 2 * y + 1, 2 * x) + v.at(s, c, 2 * y + 1, 2 * x + 1)) /
                               T{4};
        }
  return make_node<T>("avgpool2x2", std::move(out), {input}, [d, ho, wo](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t s = 0; s < d.n; ++s)
      for (std::size_t c = 0; c < d.c; ++c)
        for (std::size_t y = 0; y < ho; ++y)
          for (std::size_t x = 0; x < wo; ++x) {
            const T q = self.grad.at(s, c, y, x) / T{4};
            g.at(s, c, 2 * y, 2 * x) += q;
            g.at(s, c, 2 * y, 2 * x + 1) += q;
            g.at(s, c, 2 * y + 1, 2 * x) += q;
            g.at(s, c, 2 * y + 1, 2 * x + 1) += q;
          }
  });
}

/// Mean over H and W: NCHW -> [N, C].
template <class T>
Var<T> global_avgpool(const Var<T>& input) {
  const auto d = dims4(input->value.shape(), "global_avgpool");
  const std::size_t plane = d.plane();
  Tensor<T> out({d.n, d.c});
  for (std::size_t i = 0; i < d.n * d.c; ++i) {
    T acc{0};
    for (std::size_t k = 0; k < plane; ++k) acc += input->value[i * plane + k];
    out[i] = acc / static_cast<T>(plane);
  }
  return make_node<T>("global_avgpool", std::move(out), {input}, [d, plane](Node<T>& self) {
    T* g = self.inputs[0]->grad_buffer().data();
    for (std::size_t i = 0; i < d.n * d.c; ++i) {
      const T q = self.grad[i] / static_cast<T>(plane);
      for (std::size_t k = 0; k < plane; ++k) g[i * plane + k] += q;
    }
  });
}

/// y = x W^T + b with x [N, F], W [O, F], b [O].
template <class T>
Var<T> linear(const Var<T>& input, const Var<T>& weight, const Var<T>& bias) {
  const auto& xs = input->value.shape();
  const auto& ws = weight->value.shape();
  if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[1] || bias->value.shape() != Shape{ws[0]})
    throw ShapeError("linear: input " + to_string(xs) + ", weight " + to_string(ws) + ", bias " +
                     to_string(bias->value.shape()) + " are incompatible");
  const std::size_t n = xs[0], f = xs[1], o = ws[0];
  Tensor<T> out({n, o});
  detail::MatMap<T> om(out.data(), n, o);
  om.noalias() = detail::ConstMatMap<T>(input->value.data(), n, f) *
                 detail::ConstMatMap<T>(weight->value.data(), o, f).transpose();
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t j = 0; j < o; ++j) out[s * o + j] += bias->value[j];
  return make_node<T>("linear", std::move(out), {input, weight, bias}, [n, f, o](Node<T>& self) {
    auto& x = *self.inputs[0];
    auto& w = *self.inputs[1];
    auto& b = *self.inputs[2];
    const detail::ConstMatMap<T> dy(self.grad.data(), n, o);
    if (x.requires_grad)
      detail::MatMap<T>(x.grad_buffer().data(), n, f).noalias() +=
          dy * detail::ConstMatMap<T>(w.value.data(), o, f);
    if (w.requires_grad)
      detail::MatMap<T>(w.grad_buffer().data(), o, f).noalias() +=
          dy.transpose() * detail::ConstMatMap<T>(x.value.data(), n, f);
    if (b.requires_grad) {
      T* db = b.grad_buffer().data();
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t j = 0; j < o; ++j) db[j] += self.grad[s * o + j];
    }
  });
}

/// Mean softmax cross-entropy over the batch; logits [N, C].
template <class T>
Var<T> softmax_cross_entropy(const Var<T>& logits, std::span<const int> labels) {
  const auto& ls = logits->value.shape();
  if (ls.size() != 2 || ls[0] != labels.size())
    throw ShapeError("softmax_cross_entropy: logits " + to_string(ls) + " vs " +
                     std::to_string(labels.size()) + " labels");
  const std::size_t n = ls[0], c = ls[1];
  Tensor<T> probs({n, c});
  double loss = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    const int y = labels[s];
    if (y < 0 || static_cast<std::size_t>(y) >= c)
      throw InputError("softmax_cross_entropy: label " + std::to_string(y) + " outside [0, " +
                       std::to_string(c) + ")");
    const T* z = logits->value.data() + s * c;
    const T zmax = *std::max_element(z, z + c);
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) denom += std::exp(static_cast<double>(z[j] - zmax));
    for (std::size_t j = 0; j < c; ++j)
      probs[s * c + j] = static_cast<T>(std::exp(static_cast<double>(z[j] - zmax)) / denom);
    loss += std::log(denom) - static_cast<double>(z[y] - zmax);
  }
  std::vector<int> ys(labels.begin(), labels.end());
  return make_node<T>("softmax_cross_entropy", Tensor<T>::scalar(static_cast<T>(loss / n)),
                      {logits}, [probs = std::move(probs), ys = std::move(ys), n, c](Node<T>& self) {
                        const T g = self.grad[0] / static_cast<T>(n);
                        T* dz = self.inputs[0]->grad_buffer().data();
                        for (std::size_t s = 0; s < n; ++s)
                          for (std::size_t j = 0; j < c; ++j)
                            dz[s * c + j] += g * (probs[s * c + j] -
                                                  (static_cast<int>(j) == ys[s] ? T{1} : T{0}));
                      });
}

/// Index of the largest logit per row (first one on ties).
template <class T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t s = 0; s < n; ++s) {
    const T* z = logits.data() + s * c;
    out[s] = static_cast<int>(std::max_element(z, z + c) - z);
  }
  return out;
}

}  // namespace densedrop
