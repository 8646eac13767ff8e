#pragma once

// Synthetic lesion images for desk-scale experiments: a darker elliptical
// blob with an irregular (harmonically perturbed) boundary and additive noise
// on a lighter background. The mask is the exact blob support.

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "attswin/metrics.hpp"
#include "attswin/random.hpp"

namespace attswin {

inline Sample synth_lesion_sample(int h, int w, std::uint64_t seed) {
  if (h < 8 || w < 8)
    throw std::invalid_argument("synth_lesions: degenerate size " + std::to_string(h) + "x" +
                                std::to_string(w));
  Rng rng(seed);
  const double base = rng.uniform(0.65, 0.85);
  const double offset = rng.uniform(-0.45, -0.25);
  const double cx = rng.uniform(0.35, 0.65) * w;
  const double cy = rng.uniform(0.35, 0.65) * h;
  const double rx = rng.uniform(0.18, 0.32) * w;
  const double ry = rng.uniform(0.18, 0.32) * h;
  const double theta = rng.uniform(0.0, M_PI);
  double amp[3], phase[3];
  for (int k = 0; k < 3; ++k) {
    amp[k] = rng.uniform(-0.08, 0.08);
    phase[k] = rng.uniform(0.0, 2.0 * M_PI);
  }
  const double ct = std::cos(theta), st = std::sin(theta);

  Sample s;
  s.h = h;
  s.w = w;
  s.channels = 1;
  s.image.resize(static_cast<std::size_t>(h) * w);
  s.mask.resize(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double dx = x + 0.5 - cx;
      const double dy = y + 0.5 - cy;
      const double u = (ct * dx + st * dy) / rx;
      const double v = (-st * dx + ct * dy) / ry;
      const double rho = std::sqrt(u * u + v * v);
      const double phi = std::atan2(v, u);
      double boundary = 1.0;
      for (int k = 0; k < 3; ++k) boundary += amp[k] * std::sin((k + 2) * phi + phase[k]);
      const bool inside = rho <= boundary;
      const double noise = rng.normal() * 0.02;
      double val = base + (inside ? offset : 0.0) + noise;
      val = std::min(1.0, std::max(0.0, val));
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      s.image[i] = val;
      s.mask[i] = inside ? 1 : 0;
    }
  return s;
}

inline Dataset synth_lesions(int n, int h, int w, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("synth_lesions: n must be at least 1");
  Dataset out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    out.push_back(synth_lesion_sample(h, w, Rng::mix(seed, static_cast<std::uint64_t>(i))));
  return out;
}

}  // namespace attswin
