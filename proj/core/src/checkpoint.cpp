// Copyright (c) 2026 wcdnet authors
// SPDX-License-Identifier: Apache-2.0
#include "wcdnet/checkpoint.h"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace wcdnet {

namespace {

constexpr char kMagic[8] = {'W', 'C', 'D', 'N', 'E', 'T', 'K', 'P'};

void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_string(std::ostream& os, const std::string& s) {
  write_u32(os, uint32_t(s.size()));
  os.write(s.data(), std::streamsize(s.size()));
}
uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::string read_string(std::istream& is) {
  std::string s(read_u32(is), '\0');
  is.read(s.data(), std::streamsize(s.size()));
  return s;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  write_string(os, ckpt.version);
  write_string(os, ckpt.meta);
  write_u32(os, uint32_t(ckpt.arrays.size()));
  for (const auto& [name, t] : ckpt.arrays) {
    write_string(os, name);
    write_u32(os, uint32_t(t.shape.size()));
    for (int d : t.shape) write_u32(os, uint32_t(d));
    os.write(reinterpret_cast<const char*>(t.data()),
             std::streamsize(t.size() * sizeof(real)));
  }
  if (!os) throw std::runtime_error("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not a wcdnet checkpoint: " + path);
  Checkpoint ckpt;
  ckpt.version = read_string(is);
  ckpt.meta = read_string(is);
  const uint32_t count = read_u32(is);
  for (uint32_t i = 0; i < count; ++i) {
    const std::string name = read_string(is);
    const uint32_t ndim = read_u32(is);
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = int(read_u32(is));
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data()),
            std::streamsize(t.size() * sizeof(real)));
    if (!is) throw std::runtime_error("truncated checkpoint: " + path);
    ckpt.arrays.emplace(name, std::move(t));
  }
  return ckpt;
}

Checkpoint model_state(Model& model) {
  Checkpoint ckpt;
  ckpt.meta = model.config().to_json();
  for (const auto& [name, var] : model.params()) ckpt.arrays[name] = var->value;
  for (const auto& [name, buf] : model.buffers()) ckpt.arrays[name] = *buf;
  return ckpt;
}

void load_model_state(Model& model, const Checkpoint& ckpt) {
  auto restore = [&](const std::string& name, Tensor& dst) {
    auto it = ckpt.arrays.find(name);
    if (it == ckpt.arrays.end()) {
      if (name.rfind("crf.", 0) == 0) return;  // fresh CRF init is allowed
      throw std::runtime_error("checkpoint missing array: " + name);
    }
    if (it->second.shape != dst.shape)
      throw std::runtime_error("checkpoint shape mismatch for " + name + ": " +
                               shape_str(it->second.shape) + " vs " +
                               shape_str(dst.shape));
    dst = it->second;
  };
  for (auto& [name, var] : model.params()) restore(name, var->value);
  for (auto& [name, buf] : model.buffers()) restore(name, *buf);
}

int load_model_state_partial(Model& model, const Checkpoint& ckpt) {
  int restored = 0;
  auto maybe_restore = [&](const std::string& name, Tensor& dst) {
    auto it = ckpt.arrays.find(name);
    if (it == ckpt.arrays.end() || it->second.shape != dst.shape) return;
    dst = it->second;
    ++restored;
  };
  for (auto& [name, var] : model.params()) maybe_restore(name, var->value);
  for (auto& [name, buf] : model.buffers()) maybe_restore(name, *buf);
  return restored;
}

}  // namespace wcdnet
