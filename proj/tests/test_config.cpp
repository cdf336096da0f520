// Copyright (c) 2026 The densedrop Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <string>

#include "densedrop/config.hpp"

namespace dd = densedrop;
using Catch::Matchers::ContainsSubstring;

TEST_CASE("empty config yields the documented defaults") {
  const auto c = dd::parse_config("");
  CHECK(c.model.variant == dd::Variant::BC);
  CHECK(c.model.depth == 100);
  CHECK(c.model.growth_rate == 12);
  CHECK(c.model.classes == 10);
  CHECK(c.model.dropout == dd::DropoutMode::None);
  CHECK(c.model.granularity == dd::Granularity::ChannelWise);
  CHECK(c.model.schedule == dd::ScheduleKind::uniform(0.5));
  CHECK(c.data.source == "cifar");
  CHECK(c.data.subset_size == 0);
  CHECK(c.optim.lr == 0.1);
  CHECK(c.optim.momentum == 0.9);
  CHECK(c.optim.weight_decay == 1e-4);
  CHECK(c.optim.batch_size == 64);
  CHECK(c.optim.epochs == 300);
  CHECK(c.run.seed == 0);
}

TEST_CASE("sections, comments and values") {
  const auto c = dd::parse_config(R"(
# desk preset
[model]
variant = bc
depth = 22
growth_rate = 8

[dropout]
; both comment styles work
mode = pre
granularity = layer
schedule = v3

[data]
variant = c100
subset_size = 5000

[optim]
lr = 0.05
epochs = 30

[run]
seed = 7
out = runs/x
)");
  CHECK(c.model.depth == 22);
  CHECK(c.model.growth_rate == 8);
  CHECK(c.model.dropout == dd::DropoutMode::PreDropout);
  CHECK(c.model.granularity == dd::Granularity::LayerWise);
  CHECK(c.model.schedule.kind == dd::ScheduleKind::Kind::V3);
  CHECK(c.model.classes == 100);
  CHECK(c.data.variant == dd::CifarVariant::C100);
  CHECK(c.data.subset_size == 5000);
  CHECK(c.optim.lr == 0.05);
  CHECK(c.optim.epochs == 30);
  CHECK(c.run.seed == 7);
  CHECK(c.run.out == "runs/x");
}

TEST_CASE("serialization round-trips every key") {
  auto c = dd::parse_config("[dropout]\nmode = standard\nschedule = uniform\nuniform_p = 0.3\n[optim]\nlr = 0.1\n");
  c.optim.weight_decay = 3.3e-5;
  const auto text = dd::serialize_config(c);
  for (const auto& key : dd::config_keys())
    CHECK_THAT(text, ContainsSubstring(key.substr(key.find('.') + 1) + " = "));
  const auto back = dd::parse_config(text);
  CHECK(dd::serialize_config(back) == text);
  CHECK(back.model.schedule.uniform_p == 0.3);
  CHECK(back.optim.weight_decay == 3.3e-5);
}

TEST_CASE("unknown keys and bad values are errors") {
  CHECK_THROWS_WITH(dd::parse_config("[model]\ndepht = 40\n"), ContainsSubstring("unknown key 'model.depht'"));
  CHECK_THROWS_WITH(dd::parse_config("[modle]\ndepth = 40\n"), ContainsSubstring("unknown key 'modle.depth'"));
  CHECK_THROWS_AS(dd::parse_config("depth = 40\n"), dd::ConfigError);
  CHECK_THROWS_AS(dd::parse_config("[model]\ndepth = forty\n"), dd::ConfigError);
  CHECK_THROWS_AS(dd::parse_config("[model]\ndepth = 40x\n"), dd::ConfigError);
  CHECK_THROWS_AS(dd::parse_config("[optim]\nepochs = -3\n"), dd::ConfigError);
  CHECK_THROWS_AS(dd::parse_config("[dropout]\nmode = sometimes\n"), dd::ConfigError);
  CHECK_THROWS_AS(dd::parse_config("[dropout]\nuniform_p = 0\n"), dd::ConfigError);
  CHECK_THROWS_AS(dd::parse_config("[optim]\nmomentum = 1.0\n"), dd::ConfigError);
  CHECK_THROWS_AS(dd::parse_config("[data]\nsource = imagenet\n"), dd::ConfigError);
  CHECK_THROWS_WITH(dd::parse_config("[model]\ndepth = 77\n"), ContainsSubstring("closest valid depth is 76"));
  CHECK_THROWS_AS(dd::parse_config("[model]\ndepth = 40\ndepth = 52\n"), dd::ConfigError);
}

TEST_CASE("config files") {
  const auto path = std::filesystem::temp_directory_path() / "densedrop-test-config.ini";
  {
    std::ofstream(path) << "[model]\nvariant = plain\ndepth = 40\n";
  }
  const auto c = dd::load_config(path);
  CHECK(c.model.variant == dd::Variant::Plain);
  CHECK(c.model.stem_channels() == 16);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(dd::load_config(path), dd::ConfigError);
}
