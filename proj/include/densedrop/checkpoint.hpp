// Copyright (c) 2026 The densedrop Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "densedrop/densenet.hpp"
#include "densedrop/errors.hpp"
#include "densedrop/tensor.hpp"

namespace densedrop {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O writes host bytes and assumes a little-endian host");

// Layout (all integers little-endian):
//   "DDCKPT01"                       8-byte magic
//   u64  config length, then the config text (INI)
//   u64  tensor count
//   per tensor: u32 name length, name, u8 bytes per value (4 | 8),
//               u32 rank, u64 extents[rank], raw IEEE-754 values
inline constexpr char kCheckpointMagic[8] = {'D', 'D', 'C', 'K', 'P', 'T', '0', '1'};

struct CheckpointEntry {
  std::string name;
  std::uint8_t value_bytes = 4;
  Tensor<double> value;  // widened; narrowing back to float is exact
};

struct Checkpoint {
  std::string config_text;
  std::vector<CheckpointEntry> entries;

  template <class T>
  void add(std::string name, const Tensor<T>& t) {
    static_assert(sizeof(T) == 4 || sizeof(T) == 8);
    entries.push_back({std::move(name), sizeof(T), t.template cast<double>()});
  }

  const CheckpointEntry* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }
};

namespace detail {

template <class I>
void put(std::ostream& os, I v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(I));
}

template <class I>
I get(std::istream& is, const std::string& what) {
  I v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(I)))
    throw CorruptArchiveError("checkpoint truncated while reading " + what);
  return v;
}

}  // namespace detail

/// Writes `<path>.tmp` and renames it over `path`, so an existing file is
/// only ever replaced by a complete one.
inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    os.write(kCheckpointMagic, sizeof kCheckpointMagic);
    detail::put<std::uint64_t>(os, ck.config_text.size());
    os.write(ck.config_text.data(), static_cast<std::streamsize>(ck.config_text.size()));
    detail::put<std::uint64_t>(os, ck.entries.size());
    for (const auto& e : ck.entries) {
      detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(e.name.size()));
      os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
      detail::put<std::uint8_t>(os, e.value_bytes);
      detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(e.value.rank()));
      for (auto x : e.value.shape()) detail::put<std::uint64_t>(os, x);
      for (double v : e.value.values()) {
        if (e.value_bytes == 4)
          detail::put(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        else
          detail::put(os, std::bit_cast<std::uint64_t>(v));
      }
    }
    if (!os) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CorruptArchiveError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw CorruptArchiveError(path.string() + " is not a densedrop checkpoint");
  Checkpoint ck;
  const auto cfg_len = detail::get<std::uint64_t>(is, "config length");
  ck.config_text.resize(cfg_len);
  if (!is.read(ck.config_text.data(), static_cast<std::streamsize>(cfg_len)))
    throw CorruptArchiveError("checkpoint truncated in config text");
  const auto count = detail::get<std::uint64_t>(is, "tensor count");
  for (std::uint64_t t = 0; t < count; ++t) {
    CheckpointEntry e;
    e.name.resize(detail::get<std::uint32_t>(is, "name length"));
    if (!is.read(e.name.data(), static_cast<std::streamsize>(e.name.size())))
      throw CorruptArchiveError("checkpoint truncated in tensor name");
    e.value_bytes = detail::get<std::uint8_t>(is, e.name + " value width");
    if (e.value_bytes != 4 && e.value_bytes != 8)
      throw CorruptArchiveError("tensor " + e.name + " has value width " +
                                std::to_string(e.value_bytes));
    Shape shape(detail::get<std::uint32_t>(is, e.name + " rank"));
    for (auto& x : shape) x = detail::get<std::uint64_t>(is, e.name + " extents");
    e.value = Tensor<double>(shape);
    for (auto& v : e.value.values())
      v = e.value_bytes == 4
              ? static_cast<double>(std::bit_cast<float>(detail::get<std::uint32_t>(is, e.name)))
              : std::bit_cast<double>(detail::get<std::uint64_t>(is, e.name));
    ck.entries.push_back(std::move(e));
  }
  return ck;
}

/// Adds every persistent model tensor under its canonical name.
template <class T>
void add_model(Checkpoint& ck, DenseNet<T>& model) {
  for (const auto& nt : model.named_tensors()) ck.add(nt.name, *nt.tensor);
}

/// Copies every model tensor out of a checkpoint; names and shapes must match.
template <class T>
void restore_model(DenseNet<T>& model, const Checkpoint& ck) {
  for (auto& nt : model.named_tensors()) {
    const auto* e = ck.find(nt.name);
    if (!e) throw CorruptArchiveError("checkpoint lacks tensor " + nt.name);
    if (e->value.shape() != nt.tensor->shape())
      throw ShapeError("checkpoint tensor " + nt.name + " has shape " + to_string(e->value.shape()) +
                       ", model expects " + to_string(nt.tensor->shape()));
    for (std::size_t i = 0; i < nt.tensor->size(); ++i) (*nt.tensor)[i] = static_cast<T>(e->value[i]);
  }
}

}  // namespace densedrop
