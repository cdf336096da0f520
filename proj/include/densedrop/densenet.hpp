// Copyright (c) 2026 The densedrop Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "densedrop/autograd.hpp"
#include "densedrop/dropout.hpp"
#include "densedrop/errors.hpp"
#include "densedrop/ops.hpp"
#include "densedrop/rng.hpp"
#include "densedrop/schedules.hpp"
#include "densedrop/tensor.hpp"

namespace densedrop {

enum class Variant { Plain, BC };

inline std::string to_string(Variant v) { return v == Variant::BC ? "bc" : "plain"; }

inline Variant parse_variant(std::string_view s) {
  if (s == "bc") return Variant::BC;
  if (s == "plain") return Variant::Plain;
  throw ConfigError("unknown model variant '" + std::string(s) + "' (expected plain|bc)");
}

struct ModelConfig {
  Variant variant = Variant::BC;
  int depth = 100;
  int growth_rate = 12;
  int classes = 10;
  DropoutMode dropout = DropoutMode::None;
  Granularity granularity = Granularity::ChannelWise;
  ScheduleKind schedule = ScheduleKind::uniform(0.5);

  /// Composite layers per dense block. Plain: depth = 3n+4, BC: depth = 6n+4.
  std::size_t layers_per_block() const {
    const int per = variant == Variant::BC ? 6 : 3;
    if (depth < per + 4 || (depth - 4) % per != 0) {
      const int lo = std::max(1, (depth - 4) / per);
      const int a = per * lo + 4, b = per * (lo + 1) + 4;
      const int closest = (depth - a <= b - depth) ? a : b;
      throw ConfigError("depth " + std::to_string(depth) + " is not valid for DenseNet" +
                        (variant == Variant::BC ? "-BC (needs 6n+4)" : " (needs 3n+4)") +
                        "; closest valid depth is " + std::to_string(closest));
    }
    return static_cast<std::size_t>((depth - 4) / per);
  }

  /// Transition compression factor.
  double compression() const { return variant == Variant::BC ? 0.5 : 1.0; }

  std::size_t stem_channels() const {
    return variant == Variant::BC ? static_cast<std::size_t>(2 * growth_rate) : 16;
  }

  void validate() const {
    layers_per_block();
    if (growth_rate < 1) throw ConfigError("growth rate must be positive");
    if (classes != 10 && classes != 100) throw ConfigError("class count must be 10 or 100");
    if (schedule.kind == ScheduleKind::Kind::Uniform &&
        !(schedule.uniform_p > 0.0 && schedule.uniform_p <= 1.0))
      throw ConfigError("dropout.uniform_p must lie in (0, 1]");
  }
};

/// Supplies the masks one dense block needs for one forward pass.
template <class T>
class MaskSource {
 public:
  virtual ~MaskSource() = default;
  virtual std::vector<MaskTensor<T>> block_masks(std::size_t block,
                                                 std::span<const ConsumerSpec> consumers,
                                                 Granularity granularity) = 0;
};

/// Fresh masks every forward pass, from streams keyed by (step, block) and
/// then by consumer.
template <class T>
class SampledMasks final : public MaskSource<T> {
 public:
  explicit SampledMasks(CounterRng root) : root_(root) {}

  /// Call once per training step before the forward pass.
  void begin_step() { ++step_; }
  std::uint64_t step() const noexcept { return step_; }
  /// Total Bernoulli draws consumed since construction.
  std::uint64_t draws() const noexcept { return draws_; }

  std::vector<MaskTensor<T>> block_masks(std::size_t block, std::span<const ConsumerSpec> consumers,
                                         Granularity granularity) override {
    auto masks = mask_family<T>(consumers, granularity, root_.derive(step_, block));
    for (const auto& m : masks) draws_ += m.rng.draws;
    return masks;
  }

 private:
  CounterRng root_;
  std::uint64_t step_ = 0;
  std::uint64_t draws_ = 0;
};

/// Hands out caller-provided masks, for probing the wiring.
template <class T>
class FixedMasks final : public MaskSource<T> {
 public:
  void set(std::size_t block, std::vector<MaskTensor<T>> masks) { masks_[block] = std::move(masks); }

  std::vector<MaskTensor<T>> block_masks(std::size_t block, std::span<const ConsumerSpec> consumers,
                                         Granularity) override {
    auto it = masks_.find(block);
    if (it == masks_.end() || it->second.size() != consumers.size())
      throw UsageError("FixedMasks: block " + std::to_string(block) + " needs " +
                       std::to_string(consumers.size()) + " masks");
    for (std::size_t c = 0; c < consumers.size(); ++c)
      if (it->second[c].values.shape() != consumers[c].shape)
        throw ShapeError("FixedMasks: mask " + std::to_string(c) + " of block " +
                         std::to_string(block) + " has shape " +
                         to_string(it->second[c].values.shape()) + ", consumer needs " +
                         to_string(consumers[c].shape));
    return it->second;
  }

 private:
  std::map<std::size_t, std::vector<MaskTensor<T>>> masks_;
};

namespace detail {

template <class T>
Var<T> he_normal(Shape shape, CounterRng rng) {
  const std::size_t fan_in = shape[1] * shape[2] * shape[3];
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  Tensor<T> w(std::move(shape));
  for (auto& v : w.values()) v = static_cast<T>(rng.normal() * stddev);
  return leaf(std::move(w));
}

template <class T>
Var<T> uniform_fan_in(Shape shape, std::size_t fan_in, CounterRng rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor<T> w(std::move(shape));
  for (auto& v : w.values()) v = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
  return leaf(std::move(w));
}

}  // namespace detail

/// BN-ReLU-conv3x3 (plain) or BN-ReLU-conv1x1(4k)-BN-ReLU-conv3x3 (BC).
template <class T>
struct CompositeLayer {
  BatchNormState<T> bn1;
  Var<T> conv1;
  std::optional<BatchNormState<T>> bn2;
  Var<T> conv2;

  CompositeLayer(Variant variant, std::size_t in_channels, std::size_t k, const CounterRng& rng)
      : bn1(in_channels) {
    if (variant == Variant::BC) {
      conv1 = detail::he_normal<T>({4 * k, in_channels, 1, 1}, rng.derive(1));
      bn2.emplace(4 * k);
      conv2 = detail::he_normal<T>({k, 4 * k, 3, 3}, rng.derive(2));
    } else {
      conv1 = detail::he_normal<T>({k, in_channels, 3, 3}, rng.derive(1));
    }
  }

  std::size_t out_channels() const { return (conv2 ? conv2 : conv1)->value.dim(0); }

  Var<T> forward(const Var<T>& x, Mode mode) {
    auto h = conv2d(relu(batchnorm(x, bn1, mode)), conv1, 1, conv2 ? 0 : 1);
    if (conv2) h = conv2d(relu(batchnorm(h, *bn2, mode)), conv2, 1, 1);
    return h;
  }
};

/// One dense block plus the dropout wiring around it.
template <class T>
class DenseBlock {
 public:
  DenseBlock(Variant variant, std::size_t in_channels, std::size_t layers, std::size_t k,
             DropoutMode dropout, Granularity granularity, const ScheduleKind& schedule,
             CounterRng rng)
      : in_channels_(in_channels),
        k_(k),
        dropout_(dropout),
        granularity_(granularity),
        schedule_(build_schedule(schedule, layers)) {
    for (std::size_t j = 1; j <= layers; ++j)
      layers_.emplace_back(variant, input_channels(j), k, rng.derive(j));
  }

  std::size_t layers() const noexcept { return layers_.size(); }
  std::size_t growth_rate() const noexcept { return k_; }
  std::size_t in_channels() const noexcept { return in_channels_; }
  std::size_t out_channels() const noexcept { return in_channels_ + layers_.size() * k_; }
  /// Width of the concatenation fed to layer j (1-based); j = n+1 is the block output.
  std::size_t input_channels(std::size_t j) const noexcept { return in_channels_ + (j - 1) * k_; }
  DropoutMode dropout() const noexcept { return dropout_; }
  Granularity granularity() const noexcept { return granularity_; }
  const ScheduleMatrix& schedule() const noexcept { return schedule_; }
  std::vector<CompositeLayer<T>>& composite_layers() noexcept { return layers_; }
  const std::vector<CompositeLayer<T>>& composite_layers() const noexcept { return layers_; }

  /// Segment layout of consumer j's input: source 0 is the block input, then
  /// one k-wide segment per earlier layer.
  std::vector<Segment> consumer_segments(std::size_t j) const {
    std::vector<Segment> segs{{0, 0, in_channels_}};
    for (std::size_t i = 1; i < j; ++i) segs.push_back({i, input_channels(i), input_channels(i + 1)});
    return segs;
  }

  /// Mask sites for a batch of `n` images at `h` x `w`. PreDropout: consumers
  /// 1..n+1 over their full inputs. Standard: layer outputs 1..n, with layer
  /// i's output using p(i, i+1).
  std::vector<ConsumerSpec> mask_sites(std::size_t batch, std::size_t h, std::size_t w) const {
    std::vector<ConsumerSpec> sites;
    if (dropout_ == DropoutMode::PreDropout) {
      for (std::size_t j = 1; j <= layers() + 1; ++j)
        sites.push_back({{batch, input_channels(j), h, w}, consumer_segments(j),
                         schedule_.consumer_probs(j)});
    } else if (dropout_ == DropoutMode::Standard) {
      for (std::size_t i = 1; i <= layers(); ++i)
        sites.push_back({{batch, k_, h, w}, {{i, 0, k_}}, {schedule_(i, i + 1)}});
    }
    return sites;
  }

  /// Block output W. In train mode with dropout, masks come from `masks`.
  Var<T> forward(const Var<T>& x0, Mode mode, MaskSource<T>* masks, std::size_t block_index = 0) {
    const auto d = dims4(x0->value.shape(), "dense block");
    if (d.c != in_channels_)
      throw ShapeError("dense block expects " + std::to_string(in_channels_) +
                       " input channels, got " + to_string(x0->value.shape()));
    const bool masked = mode == Mode::Train && dropout_ != DropoutMode::None;
    std::vector<MaskTensor<T>> block_masks;
    if (masked) {
      if (!masks) throw UsageError("dense block: train-mode dropout needs a mask source");
      auto sites = mask_sites(d.n, d.h, d.w);
      block_masks = masks->block_masks(block_index, sites, granularity_);
    }

    std::vector<Var<T>> features{x0};
    for (std::size_t j = 1; j <= layers(); ++j) {
      auto input = concat(features);
      if (input->value.dim(1) != input_channels(j))
        throw std::logic_error("dense block: layer " + std::to_string(j) + " sees " +
                               std::to_string(input->value.dim(1)) + " channels, expected " +
                               std::to_string(input_channels(j)));
      if (masked && dropout_ == DropoutMode::PreDropout)
        input = apply_mask(input, block_masks[j - 1], mode);
      auto out = layers_[j - 1].forward(input, mode);
      if (masked && dropout_ == DropoutMode::Standard) out = apply_mask(out, block_masks[j - 1], mode);
      features.push_back(std::move(out));
    }
    auto w = concat(features);
    if (masked && dropout_ == DropoutMode::PreDropout)
      w = apply_mask(w, block_masks[layers()], mode);
    return w;
  }

 private:
  std::size_t in_channels_;
  std::size_t k_;
  DropoutMode dropout_;
  Granularity granularity_;
  ScheduleMatrix schedule_;
  std::vector<CompositeLayer<T>> layers_;
};

/// BN-ReLU-conv1x1 (with compression) then 2x2 average pooling.
template <class T>
struct Transition {
  BatchNormState<T> bn;
  Var<T> conv;

  Transition(std::size_t in_channels, std::size_t out_channels, CounterRng rng)
      : bn(in_channels), conv(detail::he_normal<T>({out_channels, in_channels, 1, 1}, rng)) {}

  Var<T> forward(const Var<T>& x, Mode mode) {
    return avgpool2x2(conv2d(relu(batchnorm(x, bn, mode)), conv, 1, 0));
  }
};

/// Named view of every persistent tensor of a model.
template <class T>
struct NamedTensor {
  std::string name;
  Tensor<T>* tensor;
  bool trainable;
};

/// Stem conv, three dense blocks joined by two transitions, BN-ReLU,
/// global average pooling and a linear classifier.
template <class T>
class DenseNet {
 public:
  static constexpr std::size_t kBlocks = 3;

  explicit DenseNet(const ModelConfig& config, std::uint64_t seed = 0) : config_(config) {
    config_.validate();
    const CounterRng rng(seed, 0x1D1E1F);
    const std::size_t n = config_.layers_per_block();
    const auto k = static_cast<std::size_t>(config_.growth_rate);
    std::size_t channels = config_.stem_channels();
    stem_ = detail::he_normal<T>({channels, 3, 3, 3}, rng.derive(100));
    for (std::size_t b = 0; b < kBlocks; ++b) {
      blocks_.emplace_back(config_.variant, channels, n, k, config_.dropout, config_.granularity,
                           config_.schedule, rng.derive(200 + b));
      channels = blocks_.back().out_channels();
      if (b + 1 < kBlocks) {
        const auto out = static_cast<std::size_t>(std::floor(config_.compression() * channels));
        transitions_.emplace_back(channels, out, rng.derive(300 + b));
        channels = out;
      }
    }
    head_bn_.emplace(channels);
    fc_w_ = detail::uniform_fan_in<T>({static_cast<std::size_t>(config_.classes), channels},
                                      channels, rng.derive(400));
    fc_b_ = detail::uniform_fan_in<T>({static_cast<std::size_t>(config_.classes)}, channels,
                                      rng.derive(401));
  }

  const ModelConfig& config() const noexcept { return config_; }
  std::vector<DenseBlock<T>>& blocks() noexcept { return blocks_; }
  const std::vector<DenseBlock<T>>& blocks() const noexcept { return blocks_; }

  /// Logits [N, classes] for an N x 3 x H x W batch (H, W divisible by 4).
  Var<T> forward(const Tensor<T>& batch, Mode mode, MaskSource<T>* masks = nullptr) {
    const auto d = dims4(batch.shape(), "DenseNet::forward");
    if (d.c != 3 || d.h % 4 || d.w % 4)
      throw ShapeError("DenseNet::forward: expected N x 3 x H x W with H, W divisible by 4, got " +
                       to_string(batch.shape()));
    auto h = conv2d(constant(batch), stem_, 1, 1);
    for (std::size_t b = 0; b < kBlocks; ++b) {
      h = blocks_[b].forward(h, mode, masks, b);
      if (b + 1 < kBlocks) h = transitions_[b].forward(h, mode);
    }
    h = global_avgpool(relu(batchnorm(h, *head_bn_, mode)));
    return linear(h, fc_w_, fc_b_);
  }

  /// Every persistent tensor with its checkpoint name, in a fixed order.
  std::vector<NamedTensor<T>> named_tensors() {
    std::vector<NamedTensor<T>> out;
    auto bn = [&out](const std::string& prefix, BatchNormState<T>& s) {
      out.push_back({prefix + ".gamma", &s.gamma->value, true});
      out.push_back({prefix + ".beta", &s.beta->value, true});
      out.push_back({prefix + ".running_mean", &s.running_mean, false});
      out.push_back({prefix + ".running_var", &s.running_var, false});
    };
    out.push_back({"stem.conv.weight", &stem_->value, true});
    for (std::size_t b = 0; b < kBlocks; ++b) {
      auto& layers = blocks_[b].composite_layers();
      for (std::size_t l = 0; l < layers.size(); ++l) {
        const std::string p = "block" + std::to_string(b + 1) + ".layer" + std::to_string(l + 1);
        bn(p + ".bn1", layers[l].bn1);
        out.push_back({p + ".conv1.weight", &layers[l].conv1->value, true});
        if (layers[l].bn2) {
          bn(p + ".bn2", *layers[l].bn2);
          out.push_back({p + ".conv2.weight", &layers[l].conv2->value, true});
        }
      }
      if (b + 1 < kBlocks) {
        const std::string p = "transition" + std::to_string(b + 1);
        bn(p + ".bn", transitions_[b].bn);
        out.push_back({p + ".conv.weight", &transitions_[b].conv->value, true});
      }
    }
    bn("head.bn", *head_bn_);
    out.push_back({"head.fc.weight", &fc_w_->value, true});
    out.push_back({"head.fc.bias", &fc_b_->value, true});
    return out;
  }

  /// Trainable tensors in checkpoint order. BN affine terms and the classifier
  /// bias are exempt from weight decay.
  ParameterList<T> parameters() {
    ParameterList<T> out;
    auto bn = [&out](const std::string& prefix, BatchNormState<T>& s) {
      out.push_back({prefix + ".gamma", s.gamma, false});
      out.push_back({prefix + ".beta", s.beta, false});
    };
    out.push_back({"stem.conv.weight", stem_, true});
    for (std::size_t b = 0; b < kBlocks; ++b) {
      auto& layers = blocks_[b].composite_layers();
      for (std::size_t l = 0; l < layers.size(); ++l) {
        const std::string p = "block" + std::to_string(b + 1) + ".layer" + std::to_string(l + 1);
        bn(p + ".bn1", layers[l].bn1);
        out.push_back({p + ".conv1.weight", layers[l].conv1, true});
        if (layers[l].bn2) {
          bn(p + ".bn2", *layers[l].bn2);
          out.push_back({p + ".conv2.weight", layers[l].conv2, true});
        }
      }
      if (b + 1 < kBlocks) {
        const std::string p = "transition" + std::to_string(b + 1);
        bn(p + ".bn", transitions_[b].bn);
        out.push_back({p + ".conv.weight", transitions_[b].conv, true});
      }
    }
    bn("head.bn", *head_bn_);
    out.push_back({"head.fc.weight", fc_w_, true});
    out.push_back({"head.fc.bias", fc_b_, false});
    return out;
  }

 private:
  ModelConfig config_;
  Var<T> stem_;
  std::vector<DenseBlock<T>> blocks_;
  std::vector<Transition<T>> transitions_;
  std::optional<BatchNormState<T>> head_bn_;
  Var<T> fc_w_;
  Var<T> fc_b_;
};

/// Trainable scalar count: conv weights, BN gamma/beta, classifier weight and bias.
template <class T>
std::size_t count_params(DenseNet<T>& model) {
  std::size_t total = 0;
  for (const auto& p : model.parameters()) total += p.value().size();
  return total;
}

/// One (source, consumer) mask the model samples in train mode.
struct MaskPlanEntry {
  std::size_t block;     // 1-based
  std::size_t consumer;  // PreDropout: j in 1..n+1; Standard: the masked layer i
  std::size_t source;
  std::size_t channels;
  double survival;
  Granularity granularity;
};

/// Every mask site of a configuration, without building the model.
inline std::vector<MaskPlanEntry> mask_plan(const ModelConfig& config) {
  config.validate();
  std::vector<MaskPlanEntry> plan;
  if (config.dropout == DropoutMode::None) return plan;
  const std::size_t n = config.layers_per_block();
  const auto k = static_cast<std::size_t>(config.growth_rate);
  const auto schedule = build_schedule(config.schedule, n);
  std::size_t channels = config.stem_channels();
  for (std::size_t b = 1; b <= DenseNet<float>::kBlocks; ++b) {
    if (config.dropout == DropoutMode::PreDropout) {
      for (std::size_t j = 1; j <= n + 1; ++j)
        for (std::size_t i = 0; i < j; ++i)
          plan.push_back({b, j, i, i == 0 ? channels : k, schedule(i, j), config.granularity});
    } else {
      for (std::size_t i = 1; i <= n; ++i)
        plan.push_back({b, i, i, k, schedule(i, i + 1), config.granularity});
    }
    channels += n * k;
    if (b < DenseNet<float>::kBlocks)
      channels = static_cast<std::size_t>(std::floor(config.compression() * channels));
  }
  return plan;
}

/// Human-readable rendering of mask_plan().
inline std::string mask_attachment_plan(const ModelConfig& config) {
  const auto plan = mask_plan(config);
  std::ostringstream os;
  os << "# mask plan: " << to_string(config.variant) << "-" << config.depth
     << " k=" << config.growth_rate << " mode=" << to_string(config.dropout)
     << " granularity=" << to_string(config.granularity)
     << " schedule=" << to_string(config.schedule.kind) << "\n";
  if (plan.empty()) {
    os << "(no masks)\n";
    return os.str();
  }
  const char* consumer_label = config.dropout == DropoutMode::PreDropout ? "consumer" : "layer";
  for (const auto& e : plan)
    os << "block " << e.block << " " << consumer_label << " " << e.consumer << " source "
       << e.source << " channels " << e.channels << " p " << e.survival << " "
       << to_string(e.granularity) << "\n";
  return os.str();
}

}  // namespace densedrop
