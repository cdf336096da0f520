// Copyright (c) 2026 The densedrop Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "densedrop/cifar.hpp"
#include "densedrop/densenet.hpp"
#include "densedrop/errors.hpp"

namespace densedrop {

struct DataConfig {
  std::string source = "cifar";  // cifar | synthetic
  std::string dir = "data";
  CifarVariant variant = CifarVariant::C10;
  std::size_t subset_size = 0;       // 0 = full training split
  std::size_t test_subset_size = 0;  // 0 = full test split
  std::uint64_t seed = 0;
  std::size_t synthetic_train = 2000;
  std::size_t synthetic_test = 500;
};

struct OptimConfig {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t batch_size = 64;
  std::size_t epochs = 300;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "runs/default";
};

/// Everything one training run depends on.
struct ExperimentConfig {
  ModelConfig model;
  DataConfig data;
  OptimConfig optim;
  RunConfig run;

  void validate() const {
    model.validate();
    if (model.classes != class_count(data.variant))
      throw ConfigError("model class count does not match data.variant");
    if (data.source != "cifar" && data.source != "synthetic")
      throw ConfigError("data.source must be cifar or synthetic, got '" + data.source + "'");
    if (optim.batch_size == 0) throw ConfigError("optim.batch_size must be at least 1");
    if (optim.epochs == 0) throw ConfigError("optim.epochs must be at least 1");
    if (!(optim.lr > 0.0)) throw ConfigError("optim.lr must be positive");
    if (optim.momentum < 0.0 || optim.momentum >= 1.0)
      throw ConfigError("optim.momentum must lie in [0, 1)");
    if (optim.weight_decay < 0.0) throw ConfigError("optim.weight_decay must be non-negative");
  }
};

namespace detail {

template <class V>
V parse_number(const std::string& key, const std::string& text) {
  std::istringstream is(text);
  V v{};
  is >> v;
  if (!is || !is.eof() || (std::is_unsigned_v<V> && text.find('-') != std::string::npos))
    throw ConfigError("config key " + key + ": cannot parse '" + text + "'");
  return v;
}

// Shortest form that reads back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

/// One documented key: how to read it into a config and how to print it back.
struct KeySpec {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

inline const std::map<std::string, KeySpec>& key_table() {
  using C = ExperimentConfig;
  static const std::map<std::string, KeySpec> table = {
      {"model.variant",
       {[](C& c, const std::string& v) { c.model.variant = parse_variant(v); },
        [](const C& c) { return to_string(c.model.variant); }}},
      {"model.depth",
       {[](C& c, const std::string& v) { c.model.depth = parse_number<int>("model.depth", v); },
        [](const C& c) { return std::to_string(c.model.depth); }}},
      {"model.growth_rate",
       {[](C& c, const std::string& v) {
          c.model.growth_rate = parse_number<int>("model.growth_rate", v);
        },
        [](const C& c) { return std::to_string(c.model.growth_rate); }}},
      {"dropout.mode",
       {[](C& c, const std::string& v) { c.model.dropout = parse_dropout_mode(v); },
        [](const C& c) { return to_string(c.model.dropout); }}},
      {"dropout.granularity",
       {[](C& c, const std::string& v) { c.model.granularity = parse_granularity(v); },
        [](const C& c) { return to_string(c.model.granularity); }}},
      {"dropout.schedule",
       {[](C& c, const std::string& v) { c.model.schedule.kind = parse_schedule_kind(v); },
        [](const C& c) { return to_string(c.model.schedule.kind); }}},
      {"dropout.uniform_p",
       {[](C& c, const std::string& v) {
          c.model.schedule.uniform_p = parse_number<double>("dropout.uniform_p", v);
        },
        [](const C& c) { return format_double(c.model.schedule.uniform_p); }}},
      {"data.source",
       {[](C& c, const std::string& v) { c.data.source = v; },
        [](const C& c) { return c.data.source; }}},
      {"data.dir",
       {[](C& c, const std::string& v) { c.data.dir = v; }, [](const C& c) { return c.data.dir; }}},
      {"data.variant",
       {[](C& c, const std::string& v) {
          c.data.variant = parse_cifar_variant(v);
          c.model.classes = class_count(c.data.variant);
        },
        [](const C& c) { return to_string(c.data.variant); }}},
      {"data.subset_size",
       {[](C& c, const std::string& v) {
          c.data.subset_size = parse_number<std::size_t>("data.subset_size", v);
        },
        [](const C& c) { return std::to_string(c.data.subset_size); }}},
      {"data.test_subset_size",
       {[](C& c, const std::string& v) {
          c.data.test_subset_size = parse_number<std::size_t>("data.test_subset_size", v);
        },
        [](const C& c) { return std::to_string(c.data.test_subset_size); }}},
      {"data.seed",
       {[](C& c, const std::string& v) { c.data.seed = parse_number<std::uint64_t>("data.seed", v); },
        [](const C& c) { return std::to_string(c.data.seed); }}},
      {"data.synthetic_train",
       {[](C& c, const std::string& v) {
          c.data.synthetic_train = parse_number<std::size_t>("data.synthetic_train", v);
        },
        [](const C& c) { return std::to_string(c.data.synthetic_train); }}},
      {"data.synthetic_test",
       {[](C& c, const std::string& v) {
          c.data.synthetic_test = parse_number<std::size_t>("data.synthetic_test", v);
        },
        [](const C& c) { return std::to_string(c.data.synthetic_test); }}},
      {"optim.lr",
       {[](C& c, const std::string& v) { c.optim.lr = parse_number<double>("optim.lr", v); },
        [](const C& c) { return format_double(c.optim.lr); }}},
      {"optim.momentum",
       {[](C& c, const std::string& v) {
          c.optim.momentum = parse_number<double>("optim.momentum", v);
        },
        [](const C& c) { return format_double(c.optim.momentum); }}},
      {"optim.weight_decay",
       {[](C& c, const std::string& v) {
          c.optim.weight_decay = parse_number<double>("optim.weight_decay", v);
        },
        [](const C& c) { return format_double(c.optim.weight_decay); }}},
      {"optim.batch_size",
       {[](C& c, const std::string& v) {
          c.optim.batch_size = parse_number<std::size_t>("optim.batch_size", v);
        },
        [](const C& c) { return std::to_string(c.optim.batch_size); }}},
      {"optim.epochs",
       {[](C& c, const std::string& v) {
          c.optim.epochs = parse_number<std::size_t>("optim.epochs", v);
        },
        [](const C& c) { return std::to_string(c.optim.epochs); }}},
      {"run.seed",
       {[](C& c, const std::string& v) { c.run.seed = parse_number<std::uint64_t>("run.seed", v); },
        [](const C& c) { return std::to_string(c.run.seed); }}},
      {"run.out",
       {[](C& c, const std::string& v) { c.run.out = v; }, [](const C& c) { return c.run.out; }}},
  };
  return table;
}

}  // namespace detail

/// Parses INI-style text: `[section]` headers, `key = value` lines, `;` or
/// `#` comments. Keys not set keep their defaults; unknown keys are errors.
inline ExperimentConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  std::istringstream filtered;
  {
    // Boost's INI reader only knows ';' comments.
    std::istringstream raw(text);
    std::ostringstream os;
    for (std::string line; std::getline(raw, line);) {
      const auto first = line.find_first_not_of(" \t");
      if (first != std::string::npos && line[first] == '#') line.clear();
      os << line << '\n';
    }
    filtered.str(os.str());
  }
  pt::ptree tree;
  try {
    pt::read_ini(filtered, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  ExperimentConfig cfg;
  const auto& table = detail::key_table();
  for (const auto& [section, body] : tree) {
    if (body.empty())
      throw ConfigError("config: key '" + section + "' must be inside a [section]");
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      auto it = table.find(full);
      if (it == table.end()) throw ConfigError("config: unknown key '" + full + "'");
      it->second.set(cfg, value.get_value<std::string>());
    }
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config(os.str());
}

/// Canonical text with every key spelled out, grouped by section.
inline std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  for (const char* s : {"model", "dropout", "data", "optim", "run"}) {
    os << '[' << s << "]\n";
    const std::string prefix = std::string(s) + ".";
    for (const auto& [key, spec] : detail::key_table())
      if (key.rfind(prefix, 0) == 0) os << key.substr(prefix.size()) << " = " << spec.get(cfg) << '\n';
    os << '\n';
  }
  return os.str();
}

/// Names of every accepted key, "section.key".
inline std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [key, spec] : detail::key_table()) out.push_back(key);
  return out;
}

}  // namespace densedrop
