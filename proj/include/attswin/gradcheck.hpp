#pragma once

// Central-difference gradient verification. The function under test is
// re-evaluated around perturbed parameter entries and compared against the
// gradient produced by backward(). Intended to run on double graphs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "attswin/random.hpp"
#include "attswin/tensor.hpp"

namespace attswin {

struct GradCheckReport {
  std::string label;
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t worst_index = 0;
  double rel_tol = 0.0;
  bool passed() const { return max_rel_err <= rel_tol; }
};

namespace detail {
inline double rel_err(double ad, double fd) {
  const double denom = std::max({std::abs(ad), std::abs(fd), 1e-6});
  return std::abs(ad - fd) / denom;
}
}  // namespace detail

// f must rebuild the scalar loss graph from the current parameter values on
// every call and be deterministic. Checks up to max_samples entries of p
// (all entries when max_samples <= 0), chosen by a seeded draw.
template <typename F>
GradCheckReport finite_diff_check(F&& f, Tensor<double>& p, double rel_tol,
                                  int max_samples = -1, std::uint64_t seed = 0,
                                  std::string label = {}, double h = 1e-4) {
  GradCheckReport report;
  report.label = std::move(label);
  report.rel_tol = rel_tol;

  p.zero_grad();
  {
    Tensor<double> loss = f();
    loss.backward();
  }
  std::vector<double> autodiff = p.grad();
  if (autodiff.empty()) autodiff.assign(p.numel(), 0.0);
  p.zero_grad();

  std::vector<std::size_t> indices(p.numel());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  if (max_samples > 0 && static_cast<std::size_t>(max_samples) < indices.size()) {
    Rng rng(Rng::mix(seed, 0x67c));
    rng.shuffle(indices);
    indices.resize(static_cast<std::size_t>(max_samples));
    std::sort(indices.begin(), indices.end());
  }

  NoGradGuard ng;
  auto& vals = p.values();
  for (std::size_t i : indices) {
    const double saved = vals[i];
    vals[i] = saved + h;
    const double fp = f().item();
    vals[i] = saved - h;
    const double fm = f().item();
    vals[i] = saved;
    const double fd = (fp - fm) / (2.0 * h);
    const double err = detail::rel_err(autodiff[i], fd);
    if (err > report.max_rel_err) {
      report.max_rel_err = err;
      report.worst_index = i;
    }
    ++report.checked;
  }
  return report;
}

}  // namespace attswin
