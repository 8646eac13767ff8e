#pragma once

// Named trainable parameters and a bias-corrected Adam optimizer.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "attswin/random.hpp"
#include "attswin/tensor.hpp"

namespace attswin {

template <typename T>
struct Parameter {
  std::string name;  // hierarchical, unique within a model
  Tensor<T> tensor;  // requires_grad leaf
};

enum class Init { Zero, One, TruncNormal002 };

// Owns every trainable tensor of a model. Creation order is deterministic,
// which makes seeded initialization reproducible bit for bit.
template <typename T>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : rng_(seed) {}

  Tensor<T> create(const std::string& name, Shape shape, Init init) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    const std::size_t n = shape_numel(shape);
    std::vector<T> values(n);
    switch (init) {
      case Init::Zero:
        break;
      case Init::One:
        std::fill(values.begin(), values.end(), T(1));
        break;
      case Init::TruncNormal002:
        for (std::size_t i = 0; i < n; ++i) values[i] = static_cast<T>(rng_.trunc_normal(0.02));
        break;
    }
    Tensor<T> t = Tensor<T>::from_values(std::move(shape), std::move(values), /*requires_grad=*/true);
    index_[name] = entries_.size();
    entries_.push_back(Parameter<T>{name, t});
    return t;
  }

  std::size_t size() const { return entries_.size(); }
  std::vector<Parameter<T>>& entries() { return entries_; }
  const std::vector<Parameter<T>>& entries() const { return entries_; }

  Parameter<T>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return entries_[it->second];
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& p : entries_) n += p.tensor.numel();
    return n;
  }

  void zero_grads() {
    for (auto& p : entries_) p.tensor.zero_grad();
  }

 private:
  Rng rng_;
  std::vector<Parameter<T>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
class Adam {
 public:
  explicit Adam(const AdamConfig& cfg = {}) : cfg_(cfg) {}

  long step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

  // One bias-corrected update over every parameter; gradients are cleared
  // afterwards. A parameter whose gradient was never populated is an error.
  void step(ParamStore<T>& params) {
    auto& entries = params.entries();
    if (slots_.empty()) {
      slots_.resize(entries.size());
      for (std::size_t i = 0; i < entries.size(); ++i) {
        slots_[i].m.assign(entries[i].tensor.numel(), 0.0);
        slots_[i].v.assign(entries[i].tensor.numel(), 0.0);
      }
    }
    if (slots_.size() != entries.size()) throw std::runtime_error("adam: parameter list changed size");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < entries.size(); ++i) {
      auto& p = entries[i];
      if (!p.tensor.has_grad())
        throw std::runtime_error("adam: missing gradient for parameter '" + p.name + "'");
      auto& val = p.tensor.values();
      const auto& g = p.tensor.grad();
      auto& m = slots_[i].m;
      auto& v = slots_[i].v;
      for (std::size_t j = 0; j < val.size(); ++j) {
        const double gj = static_cast<double>(g[j]);
        m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
        v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        val[j] = static_cast<T>(static_cast<double>(val[j]) - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
      p.tensor.zero_grad();
    }
  }

  // Bias-corrected first moment of a parameter, for inspection.
  std::vector<double> corrected_m(std::size_t param_idx) const {
    std::vector<double> out = slots_.at(param_idx).m;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    for (auto& x : out) x /= bc1;
    return out;
  }

 private:
  struct Slot {
    std::vector<double> m, v;
  };
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<Slot> slots_;
};

}  // namespace attswin
