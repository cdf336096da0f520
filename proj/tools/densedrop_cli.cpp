// Copyright (c) 2026 The densedrop Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: train, eval, count-params, mask-stats, ablate,
// plot-data.

#include <cstdint>
#include <exception>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "densedrop/densedrop.hpp"

namespace dd = densedrop;

namespace {

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              std::optional<std::string> out) {
  auto cfg = dd::load_config(config_path);
  if (seed) cfg.run.seed = *seed;
  if (out) cfg.run.out = *out;
  const auto result = dd::run_experiment<float>(cfg, &std::cout);
  std::cout << "final test error " << std::fixed << std::setprecision(2) << result.final_test_err
            << "% (train " << result.final_train_err << "%), outputs in " << result.out_dir.string()
            << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, std::optional<std::string> data_dir) {
  std::optional<std::filesystem::path> dir;
  if (data_dir) dir = *data_dir;
  const auto r = dd::evaluate_checkpoint<float>(checkpoint, dir);
  std::cout << "test samples " << r.samples << "\n"
            << "test loss " << std::setprecision(6) << r.loss << "\n"
            << "test error " << std::fixed << std::setprecision(2) << r.error << "%\n";
  return 0;
}

int cmd_count_params(const std::string& config_path, bool plan) {
  const auto cfg = dd::load_config(config_path);
  dd::DenseNet<float> model(cfg.model);
  const auto n = dd::count_params(model);
  std::cout << dd::to_string(cfg.model.variant) << "-" << cfg.model.depth
            << " k=" << cfg.model.growth_rate << " classes=" << cfg.model.classes << ": " << n
            << " parameters (" << std::fixed << std::setprecision(1) << n / 1e6 << "M)\n";
  if (plan) std::cout << dd::mask_attachment_plan(cfg.model);
  return 0;
}

int cmd_mask_stats(const std::string& config_path, std::size_t draws) {
  const auto cfg = dd::load_config(config_path);
  const dd::CounterRng rng(cfg.run.seed, 0x5747);
  std::set<double> probs{0.5, 0.75, 1.0};
  for (const auto& e : dd::mask_plan(cfg.model)) probs.insert(e.survival);
  std::cout << "granularity " << dd::to_string(cfg.model.granularity) << ", " << draws
            << " draws per estimate\n";
  std::cout << std::setprecision(6);
  for (double p : probs) {
    const auto s = dd::survival_frequency(cfg.model.granularity, p, draws, rng.derive(1));
    const auto ind = dd::consumer_independence(cfg.model.granularity, p, draws, rng.derive(2));
    std::cout << "p=" << p << "  survival " << s.frequency << " (3 sigma " << 3 * s.sigma << ", "
              << (s.within_3sigma() ? "ok" : "OUT") << ")  consumer correlation "
              << ind.correlation << "  dropped-then-kept " << ind.drop_then_survive
              << " (expected " << ind.expected << ")\n";
  }
  return 0;
}

int cmd_ablate(const std::string& suite, const std::string& config_path, std::vector<int> depths) {
  const auto cfg = dd::load_config(config_path);
  std::cout << dd::ablation_suite(suite, cfg, depths, &std::cout);
  return 0;
}

int cmd_plot_data(const std::string& run_dir) {
  std::cout << dd::metrics_csv(dd::read_metrics(run_dir));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DenseNet training with pre-dropout, channel-wise masks and survival schedules"};
  app.require_subcommand(1);

  std::string config, checkpoint, run_dir, suite;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out, data_dir;
  std::size_t draws = 100000;
  bool plan = false;
  std::vector<int> depths;

  auto* train = app.add_subcommand("train", "train one configuration");
  train->add_option("--config", config, "config file")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", seed, "override run.seed");
  train->add_option("--out", out, "override run.out");

  auto* eval = app.add_subcommand("eval", "test error of a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data_dir, "directory with the CIFAR binaries");

  auto* count = app.add_subcommand("count-params", "trainable parameter count of a config");
  count->add_option("--config", config, "config file")->required()->check(CLI::ExistingFile);
  count->add_flag("--plan", plan, "also print the mask attachment plan");

  auto* stats = app.add_subcommand("mask-stats", "Monte-Carlo mask survival/independence estimates");
  stats->add_option("--config", config, "config file")->required()->check(CLI::ExistingFile);
  stats->add_option("--draws", draws, "masks per estimate")->check(CLI::PositiveNumber);

  auto* ablate = app.add_subcommand("ablate", "run an ablation suite and print its table");
  ablate->add_option("--suite", suite, "granularity|schedule|headline")
      ->required()
      ->check(CLI::IsMember({"granularity", "schedule", "headline"}));
  ablate->add_option("--config", config, "base config file")->required()->check(CLI::ExistingFile);
  ablate->add_option("--depths", depths, "headline suite depths (default: config depth)")
      ->delimiter(',');

  auto* plot = app.add_subcommand("plot-data", "per-epoch CSV of a run directory");
  plot->add_option("--run", run_dir, "run directory")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(config, seed, out);
    if (*eval) return cmd_eval(checkpoint, data_dir);
    if (*count) return cmd_count_params(config, plan);
    if (*stats) return cmd_mask_stats(config, draws);
    if (*ablate) return cmd_ablate(suite, config, depths);
    if (*plot) return cmd_plot_data(run_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
