#pragma once

// Model checkpoint container: magic "ATSW1", the model config as a canonical
// JSON text block, then every parameter in name-sorted order as
// (name length, name, rank, extents, float32 little-endian data).

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "attswin/config_json.hpp"
#include "attswin/network.hpp"

namespace attswin {

namespace ckpt {

constexpr char kMagic[5] = {'A', 'T', 'S', 'W', '1'};

template <typename T>
void write_le(std::ostream& os, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  os.write(buf, sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  char buf[sizeof(T)];
  is.read(buf, sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace ckpt

struct CheckpointParam {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

struct Checkpoint {
  ModelConfig config;
  std::vector<CheckpointParam> params;  // name-sorted
};

template <typename T>
void save_checkpoint(const std::string& path, const AttSwinUNet<T>& model) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  os.write(ckpt::kMagic, 5);
  const std::string cfg = model_to_json(model.config()).dump();
  ckpt::write_le<std::uint64_t>(os, cfg.size());
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));

  std::vector<const Parameter<T>*> sorted;
  for (const auto& p : model.params().entries()) sorted.push_back(&p);
  std::sort(sorted.begin(), sorted.end(),
            [](const Parameter<T>* a, const Parameter<T>* b) { return a->name < b->name; });
  ckpt::write_le<std::uint64_t>(os, sorted.size());
  for (const auto* p : sorted) {
    ckpt::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    const Shape& s = p->tensor.shape();
    ckpt::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
    for (int e : s) ckpt::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(e));
    for (const T v : p->tensor.values()) ckpt::write_le<float>(os, static_cast<float>(v));
  }
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[5];
  is.read(magic, 5);
  if (!is || std::memcmp(magic, ckpt::kMagic, 5) != 0)
    throw std::runtime_error("not a checkpoint file (bad magic): " + path);
  const auto cfg_len = ckpt::read_le<std::uint64_t>(is);
  std::string cfg_text(cfg_len, '\0');
  is.read(cfg_text.data(), static_cast<std::streamsize>(cfg_len));
  Checkpoint out;
  out.config = model_from_json(nlohmann::json::parse(cfg_text));
  const auto count = ckpt::read_le<std::uint64_t>(is);
  out.params.resize(count);
  for (auto& p : out.params) {
    const auto name_len = ckpt::read_le<std::uint32_t>(is);
    p.name.resize(name_len);
    is.read(p.name.data(), name_len);
    const auto rank = ckpt::read_le<std::uint32_t>(is);
    p.shape.resize(rank);
    std::size_t n = 1;
    for (auto& e : p.shape) {
      e = static_cast<int>(ckpt::read_le<std::uint64_t>(is));
      n *= static_cast<std::size_t>(e);
    }
    p.data.resize(n);
    for (auto& v : p.data) v = ckpt::read_le<float>(is);
    if (!is) throw std::runtime_error("truncated checkpoint: " + path);
  }
  return out;
}

// Copy checkpoint parameters into a built model; the name sets must agree.
template <typename T>
void load_into(const Checkpoint& c, AttSwinUNet<T>& model) {
  auto& store = model.params();
  if (c.params.size() != store.size())
    throw std::runtime_error("checkpoint holds " + std::to_string(c.params.size()) +
                             " parameters, model expects " + std::to_string(store.size()));
  for (const auto& p : c.params) {
    if (!store.contains(p.name)) throw std::runtime_error("checkpoint parameter not in model: " + p.name);
    auto& t = store.at(p.name).tensor;
    if (t.shape() != p.shape)
      throw std::runtime_error("checkpoint shape mismatch for " + p.name + ": " + shape_str(p.shape) +
                               " vs " + shape_str(t.shape()));
    auto& vals = t.values();
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = static_cast<T>(p.data[i]);
  }
}

// Build a model of the checkpoint's configuration and load its weights.
template <typename T>
AttSwinUNet<T> model_from_checkpoint(const std::string& path) {
  Checkpoint c = load_checkpoint(path);
  AttSwinUNet<T> model(c.config, /*seed=*/0);
  load_into(c, model);
  return model;
}

}  // namespace attswin
