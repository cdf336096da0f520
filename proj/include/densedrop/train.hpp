// Copyright (c) 2026 The densedrop Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "densedrop/autograd.hpp"
#include "densedrop/checkpoint.hpp"
#include "densedrop/cifar.hpp"
#include "densedrop/config.hpp"
#include "densedrop/densenet.hpp"
#include "densedrop/errors.hpp"
#include "densedrop/ops.hpp"
#include "densedrop/rng.hpp"

namespace densedrop {

template <class T>
struct OptimizerState {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<Tensor<T>> buffers;  // lazily shaped like the parameters
};

/// SGD with heavy-ball momentum and L2 weight decay folded into the gradient:
///   buffer <- momentum * buffer + grad + wd * param
///   param  <- param - lr * buffer
/// Parameters flagged weight_decay = false skip the wd term.
template <class T>
void sgd_step(ParameterList<T>& params, const GradientMap<T>& grads, OptimizerState<T>& state) {
  if (grads.size() != params.size())
    throw ShapeError("sgd_step: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.size()) + " parameters");
  if (!(state.lr > 0.0)) throw InputError("sgd_step: learning rate must be positive");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>::require_same_shape(params[i].value(), grads[i], "sgd_step");
    if (!grads[i].all_finite())
      throw NumericError("sgd_step: non-finite gradient for parameter " + params[i].name);
  }
  if (state.buffers.size() != params.size()) {
    state.buffers.clear();
    for (const auto& p : params) state.buffers.emplace_back(p.value().shape());
  }
  const T lr = static_cast<T>(state.lr);
  const T mu = static_cast<T>(state.momentum);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T wd = params[i].weight_decay ? static_cast<T>(state.weight_decay) : T{0};
    auto& w = params[i].value();
    auto& buf = state.buffers[i];
    Tensor<T>::require_same_shape(w, buf, "sgd_step");
    for (std::size_t k = 0; k < w.size(); ++k) {
      buf[k] = mu * buf[k] + grads[i][k] + wd * w[k];
      w[k] -= lr * buf[k];
    }
  }
}

/// Step schedule: base rate, then /10 from epoch 0.5*T, then /100 from 0.75*T.
/// Epochs are 1-based and a boundary epoch already uses the reduced rate.
inline double lr_schedule(std::size_t epoch, std::size_t total_epochs, double base_lr) {
  if (epoch < 1 || epoch > total_epochs)
    throw InputError("lr_schedule: epoch " + std::to_string(epoch) + " outside [1, " +
                     std::to_string(total_epochs) + "]");
  if (4 * epoch >= 3 * total_epochs) return base_lr / 100.0;
  if (2 * epoch >= total_epochs) return base_lr / 10.0;
  return base_lr;
}

struct MetricRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_err = 0.0;  // percent
  double test_err = 0.0;   // percent
  double lr = 0.0;
  double seconds = 0.0;    // wall clock, kept out of metrics.jsonl
};

/// The deterministic part of a record as one JSON line.
inline std::string to_jsonl(const MetricRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["train_loss"] = r.train_loss;
  j["train_err"] = r.train_err;
  j["test_err"] = r.test_err;
  j["lr"] = r.lr;
  return j.dump();
}

inline std::vector<MetricRecord> read_metrics(const std::filesystem::path& run_dir) {
  std::ifstream in(run_dir / "metrics.jsonl");
  if (!in) throw InputError("no metrics.jsonl in " + run_dir.string());
  std::vector<MetricRecord> out;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    MetricRecord r;
    r.epoch = j.at("epoch").get<std::size_t>();
    r.train_loss = j.at("train_loss").get<double>();
    r.train_err = j.at("train_err").get<double>();
    r.test_err = j.at("test_err").get<double>();
    r.lr = j.at("lr").get<double>();
    out.push_back(r);
  }
  std::ifstream timing(run_dir / "timing.jsonl");
  for (std::string line; std::getline(timing, line);) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const auto e = j.at("epoch").get<std::size_t>();
    if (e >= 1 && e <= out.size()) out[e - 1].seconds = j.at("seconds").get<double>();
  }
  return out;
}

/// Per-epoch CSV for external plotting of training/test curves.
inline std::string metrics_csv(const std::vector<MetricRecord>& records) {
  std::ostringstream os;
  os << "epoch,train_loss,train_err,test_err,lr,seconds\n";
  os << std::setprecision(10);
  for (const auto& r : records)
    os << r.epoch << ',' << r.train_loss << ',' << r.train_err << ',' << r.test_err << ',' << r.lr
       << ',' << r.seconds << '\n';
  return os.str();
}

struct LoadedData {
  Dataset train;
  Dataset test;
  ChannelStats stats;  // from the training split only
};

inline LoadedData load_data(const DataConfig& cfg) {
  LoadedData d;
  const int classes = class_count(cfg.variant);
  if (cfg.source == "synthetic") {
    d.train = make_synthetic(cfg.synthetic_train, classes, cfg.seed, Split::Train);
    d.test = make_synthetic(cfg.synthetic_test, classes, cfg.seed, Split::Test);
  } else {
    d.train = load_cifar(cfg.dir, cfg.variant, Split::Train);
    d.test = load_cifar(cfg.dir, cfg.variant, Split::Test);
  }
  d.stats = compute_channel_stats(d.train);
  return d;
}

struct EvalResult {
  double loss = 0.0;
  double error = 0.0;  // percent
  std::size_t samples = 0;
};

/// Eval-mode pass over a batch stream; never samples masks.
template <class T>
EvalResult evaluate(DenseNet<T>& model, BatchStream<T>& stream) {
  EvalResult r;
  std::size_t wrong = 0;
  double loss_sum = 0.0;
  stream.start_epoch(0);
  Batch<T> batch;
  while (stream.next(batch)) {
    auto logits = model.forward(batch.images, Mode::Eval);
    auto loss = softmax_cross_entropy<T>(logits, batch.labels);
    const auto pred = argmax_rows(logits->value);
    for (std::size_t s = 0; s < pred.size(); ++s) wrong += pred[s] != batch.labels[s];
    loss_sum += static_cast<double>(loss->value[0]) * static_cast<double>(pred.size());
    r.samples += pred.size();
  }
  if (r.samples) {
    r.loss = loss_sum / static_cast<double>(r.samples);
    r.error = 100.0 * static_cast<double>(wrong) / static_cast<double>(r.samples);
  }
  return r;
}

/// Seed-stream tags, so each consumer of the master seed is independent.
namespace streams {
inline constexpr std::uint64_t kInit = 0x11;
inline constexpr std::uint64_t kMasks = 0x22;
inline constexpr std::uint64_t kBatches = 0x33;
inline constexpr std::uint64_t kSubset = 0x44;
}  // namespace streams

/// Checkpoint of a model plus the normalization statistics it was trained with.
template <class T>
Checkpoint make_checkpoint(const ExperimentConfig& cfg, DenseNet<T>& model, const ChannelStats& stats) {
  Checkpoint ck;
  ck.config_text = serialize_config(cfg);
  add_model(ck, model);
  Tensor<double> mean({kImageChannels}), sd({kImageChannels});
  for (std::size_t c = 0; c < kImageChannels; ++c) {
    mean[c] = stats.mean[c];
    sd[c] = stats.stddev[c];
  }
  ck.add("data.norm_mean", mean);
  ck.add("data.norm_std", sd);
  return ck;
}

inline ChannelStats checkpoint_stats(const Checkpoint& ck) {
  const auto* m = ck.find("data.norm_mean");
  const auto* s = ck.find("data.norm_std");
  if (!m || !s) throw CorruptArchiveError("checkpoint lacks normalization statistics");
  ChannelStats st;
  for (std::size_t c = 0; c < kImageChannels; ++c) {
    st.mean[c] = m->value[c];
    st.stddev[c] = s->value[c];
  }
  return st;
}

struct RunResult {
  std::vector<MetricRecord> records;
  std::filesystem::path out_dir;
  double final_train_err = 0.0;
  double final_test_err = 0.0;  // the headline number
};

/// Trains one configuration to completion. Writes into cfg.run.out:
///   config.ini      canonical config
///   metrics.jsonl   one record per epoch (epoch, train_loss, train_err, test_err, lr)
///   timing.jsonl    wall-clock seconds per epoch
///   checkpoints/    last_good.ckpt every epoch, epoch_<E>.ckpt before each
///                   LR drop, final.ckpt at the end
///   summary.json    final-epoch errors
/// A non-finite loss aborts with NumericError; checkpoints already written stay.
template <class T = float>
RunResult run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr,
                         const LoadedData* preloaded = nullptr) {
  cfg.validate();
  namespace fs = std::filesystem;
  const fs::path out = cfg.run.out;
  fs::create_directories(out / "checkpoints");
  {
    std::ofstream(out / "config.ini") << serialize_config(cfg);
  }

  std::optional<LoadedData> owned;
  if (!preloaded) owned = load_data(cfg.data);
  const LoadedData& data = preloaded ? *preloaded : *owned;

  const CounterRng master(cfg.run.seed);
  DenseNet<T> model(cfg.model, master.derive(streams::kInit).next_u64());
  auto params = model.parameters();
  SampledMasks<T> masks(master.derive(streams::kMasks));
  OptimizerState<T> opt{cfg.optim.lr, cfg.optim.momentum, cfg.optim.weight_decay, {}};

  AugmentPolicy policy;
  policy.stats = data.stats;
  const CounterRng subset_rng(cfg.data.seed, streams::kSubset);
  BatchStream<T> train(data.train, cfg.optim.batch_size, master.derive(streams::kBatches), policy,
                       true, cfg.data.subset_size, subset_rng.derive(0));
  BatchStream<T> test(data.test, cfg.optim.batch_size, master.derive(streams::kBatches), policy,
                      false, cfg.data.test_subset_size, subset_rng.derive(1));

  std::ofstream metrics(out / "metrics.jsonl", std::ios::trunc);
  std::ofstream timing(out / "timing.jsonl", std::ios::trunc);
  RunResult result;
  result.out_dir = out;

  for (std::size_t epoch = 1; epoch <= cfg.optim.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    opt.lr = lr_schedule(epoch, cfg.optim.epochs, cfg.optim.lr);
    train.start_epoch(epoch);
    Batch<T> batch;
    double loss_sum = 0.0;
    std::size_t wrong = 0, seen = 0, step = 0;
    while (train.next(batch)) {
      ++step;
      masks.begin_step();
      Var<T> loss;
      try {
        auto logits = model.forward(batch.images, Mode::Train, &masks);
        loss = softmax_cross_entropy<T>(logits, batch.labels);
        const auto pred = argmax_rows(logits->value);
        for (std::size_t s = 0; s < pred.size(); ++s) wrong += pred[s] != batch.labels[s];
        auto grads = backward(loss, params);
        sgd_step(params, grads, opt);
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + " step " +
                           std::to_string(step) + ": " + e.what() +
                           "; last good checkpoint kept in " + (out / "checkpoints").string());
      }
      loss_sum += static_cast<double>(loss->value[0]) * static_cast<double>(batch.labels.size());
      seen += batch.labels.size();
    }

    const auto draws_before = masks.draws();
    const auto eval = evaluate(model, test);
    if (masks.draws() != draws_before)
      throw std::logic_error("evaluation sampled dropout masks");

    MetricRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.train_err = 100.0 * static_cast<double>(wrong) / static_cast<double>(seen);
    rec.test_err = eval.error;
    rec.lr = opt.lr;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    metrics << to_jsonl(rec) << '\n' << std::flush;
    timing << nlohmann::ordered_json{{"epoch", rec.epoch}, {"seconds", rec.seconds}}.dump() << '\n'
           << std::flush;
    result.records.push_back(rec);
    if (log)
      *log << "epoch " << epoch << "/" << cfg.optim.epochs << "  loss " << rec.train_loss
           << "  train_err " << rec.train_err << "%  test_err " << rec.test_err << "%  lr "
           << rec.lr << "  (" << std::fixed << std::setprecision(1) << rec.seconds << "s)"
           << std::defaultfloat << std::setprecision(6) << std::endl;

    const auto ck = make_checkpoint(cfg, model, data.stats);
    save_checkpoint(out / "checkpoints" / "last_good.ckpt", ck);
    if (epoch < cfg.optim.epochs && lr_schedule(epoch + 1, cfg.optim.epochs, cfg.optim.lr) != opt.lr)
      save_checkpoint(out / "checkpoints" / ("epoch_" + std::to_string(epoch) + ".ckpt"), ck);
    if (epoch == cfg.optim.epochs) save_checkpoint(out / "checkpoints" / "final.ckpt", ck);
  }

  result.final_train_err = result.records.back().train_err;
  result.final_test_err = result.records.back().test_err;
  std::ofstream(out / "summary.json")
      << nlohmann::ordered_json{{"final_epoch", result.records.back().epoch},
                                {"final_train_err", result.final_train_err},
                                {"final_test_err", result.final_test_err}}
             .dump(2)
      << '\n';
  return result;
}

/// Evaluates a saved checkpoint on the test split found in `data_dir`.
template <class T = float>
EvalResult evaluate_checkpoint(const std::filesystem::path& checkpoint_path,
                               const std::optional<std::filesystem::path>& data_dir) {
  const auto ck = load_checkpoint(checkpoint_path);
  auto cfg = parse_config(ck.config_text);
  if (data_dir) cfg.data.dir = data_dir->string();
  DenseNet<T> model(cfg.model);
  restore_model(model, ck);
  AugmentPolicy policy;
  policy.stats = checkpoint_stats(ck);
  Dataset test = cfg.data.source == "synthetic"
                     ? make_synthetic(cfg.data.synthetic_test, cfg.model.classes, cfg.data.seed, Split::Test)
                     : load_cifar(cfg.data.dir, cfg.data.variant, Split::Test);
  BatchStream<T> stream(test, cfg.optim.batch_size, CounterRng(0), policy, false);
  return evaluate(model, stream);
}

/// One arm of an ablation: a label as it appears in the comparison table and
/// the config that produces it.
struct AblationArm {
  std::string label;
  ExperimentConfig config;
};

/// Configs for a named ablation. granularity: pre-dropout at uniform 0.5 with
/// unit/channel/layer masks. schedule: channel-wise pre-dropout with uniform
/// 0.5, v1, v2, v3. headline: per depth, no dropout / standard unit-wise
/// dropout at 0.5 / pre-dropout channel-wise with v3.
inline std::vector<AblationArm> ablation_configs(const std::string& suite, const ExperimentConfig& base,
                                                 const std::vector<int>& depths = {}) {
  std::vector<AblationArm> arms;
  const std::string root = base.run.out;
  auto arm = [&](std::string label, auto&& edit) {
    ExperimentConfig c = base;
    edit(c);
    std::string dir = label;
    for (auto& ch : dir)
      if (ch == ' ' || ch == '(' || ch == ')' || ch == '/') ch = '_';
    c.run.out = (std::filesystem::path(root) / suite / dir).string();
    c.validate();
    arms.push_back({std::move(label), std::move(c)});
  };
  if (suite == "granularity") {
    for (auto g : {Granularity::UnitWise, Granularity::LayerWise, Granularity::ChannelWise})
      arm(to_string(g) + "-wise", [g](ExperimentConfig& c) {
        c.model.dropout = DropoutMode::PreDropout;
        c.model.granularity = g;
        c.model.schedule = ScheduleKind::uniform(0.5);
      });
  } else if (suite == "schedule") {
    for (auto k : {ScheduleKind::uniform(0.5), ScheduleKind::v1(), ScheduleKind::v2(),
                   ScheduleKind::v3()})
      arm(k.kind == ScheduleKind::Kind::Uniform ? "channel uniform 0.5" : "channel " + to_string(k.kind),
          [k](ExperimentConfig& c) {
            c.model.dropout = DropoutMode::PreDropout;
            c.model.granularity = Granularity::ChannelWise;
            c.model.schedule = k;
          });
  } else if (suite == "headline") {
    const std::vector<int> ds = depths.empty() ? std::vector<int>{base.model.depth} : depths;
    for (int depth : ds) {
      const std::string tag = to_string(base.model.variant) + "-" + std::to_string(depth);
      arm(tag + " none", [depth](ExperimentConfig& c) {
        c.model.depth = depth;
        c.model.dropout = DropoutMode::None;
      });
      arm(tag + " standard", [depth](ExperimentConfig& c) {
        c.model.depth = depth;
        c.model.dropout = DropoutMode::Standard;
        c.model.granularity = Granularity::UnitWise;
        c.model.schedule = ScheduleKind::uniform(0.5);
      });
      arm(tag + " specialized", [depth](ExperimentConfig& c) {
        c.model.depth = depth;
        c.model.dropout = DropoutMode::PreDropout;
        c.model.granularity = Granularity::ChannelWise;
        c.model.schedule = ScheduleKind::v3();
      });
    }
  } else {
    throw ConfigError("unknown ablation suite '" + suite + "' (expected granularity|schedule|headline)");
  }
  return arms;
}

/// Markdown table of final-epoch errors, one row per arm.
inline std::string comparison_table(const std::string& suite, const std::vector<AblationArm>& arms,
                                    const std::vector<RunResult>& results) {
  std::ostringstream os;
  os << "| " << suite << " | params | final train err (%) | final test err (%) |\n";
  os << "|---|---|---|---|\n";
  os << std::fixed << std::setprecision(2);
  for (std::size_t i = 0; i < arms.size() && i < results.size(); ++i) {
    DenseNet<float> m(arms[i].config.model);
    os << "| " << arms[i].label << " | " << count_params(m) << " | " << results[i].final_train_err
       << " | " << results[i].final_test_err << " |\n";
  }
  return os.str();
}

/// Runs every arm of a suite with the base config's seed and writes
/// <out>/<suite>/comparison.md.
inline std::string ablation_suite(const std::string& suite, const ExperimentConfig& base,
                                  const std::vector<int>& depths = {}, std::ostream* log = nullptr) {
  const auto arms = ablation_configs(suite, base, depths);
  std::vector<RunResult> results;
  std::optional<LoadedData> data;
  for (const auto& a : arms) {
    if (log) *log << "== " << suite << ": " << a.label << " -> " << a.config.run.out << "\n";
    if (!data) data = load_data(a.config.data);
    results.push_back(run_experiment<float>(a.config, log, &*data));
  }
  const auto table = comparison_table(suite, arms, results);
  const auto dir = std::filesystem::path(base.run.out) / suite;
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "comparison.md") << table;
  return table;
}

}  // namespace densedrop
