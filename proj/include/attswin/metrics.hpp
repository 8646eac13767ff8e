#pragma once

// Segmentation metrics from pooled confusion counts. For empty-class cases
// (0/0) the DSC/SE/SP convention is 1: a class that never occurs and is never
// predicted is counted as perfectly handled.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "attswin/network.hpp"
#include "attswin/tensor.hpp"

namespace attswin {

struct Sample {
  int h = 0, w = 0, channels = 1;
  std::vector<double> image;        // h*w*channels, values in [0, 1]
  std::vector<std::uint8_t> mask;   // h*w, strictly {0, 1}

  template <typename T>
  Tensor<T> image_tensor() const {
    std::vector<T> v(image.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(image[i]);
    return Tensor<T>::from_values({h, w, channels}, std::move(v));
  }
};

using Dataset = std::vector<Sample>;

struct MetricsRecord {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  double dsc = 0, se = 0, sp = 0, acc = 0;

  static MetricsRecord from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t tn,
                                   std::uint64_t fn) {
    MetricsRecord m;
    m.tp = tp;
    m.fp = fp;
    m.tn = tn;
    m.fn = fn;
    const auto ratio = [](double num, double den) { return den == 0.0 ? 1.0 : num / den; };
    m.dsc = ratio(2.0 * static_cast<double>(tp), static_cast<double>(2 * tp + fp + fn));
    m.se = ratio(static_cast<double>(tp), static_cast<double>(tp + fn));
    m.sp = ratio(static_cast<double>(tn), static_cast<double>(tn + fp));
    const std::uint64_t total = tp + fp + tn + fn;
    if (total == 0) throw std::invalid_argument("metrics: zero pixels");
    m.acc = static_cast<double>(tp + tn) / static_cast<double>(total);
    return m;
  }
};

// Foreground decision per pixel from binary logits: p(fg) > threshold.
template <typename T>
std::vector<std::uint8_t> binarize_logits(const Tensor<T>& logits, double threshold) {
  const Shape& s = logits.shape();
  if (s.empty() || s.back() != 2)
    throw std::invalid_argument("binarize: expected trailing class extent 2, got " + shape_str(s));
  const std::size_t pixels = logits.numel() / 2;
  std::vector<std::uint8_t> out(pixels);
  const auto& v = logits.values();
  for (std::size_t p = 0; p < pixels; ++p) {
    const double pfg = 1.0 / (1.0 + std::exp(static_cast<double>(v[2 * p]) - static_cast<double>(v[2 * p + 1])));
    out[p] = pfg > threshold ? 1 : 0;
  }
  return out;
}

inline void accumulate_confusion(const std::vector<std::uint8_t>& pred,
                                 const std::vector<std::uint8_t>& truth, std::uint64_t& tp,
                                 std::uint64_t& fp, std::uint64_t& tn, std::uint64_t& fn) {
  if (pred.size() != truth.size()) throw std::invalid_argument("confusion: size mismatch");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (truth[i]) {
      pred[i] ? ++tp : ++fn;
    } else {
      pred[i] ? ++fp : ++tn;
    }
  }
}

template <typename T>
std::vector<std::uint8_t> predict_mask(const AttSwinUNet<T>& model, const Sample& s,
                                       double threshold = 0.5) {
  NoGradGuard ng;
  return binarize_logits(model.forward(s.image_tensor<T>()), threshold);
}

// Pooled (micro-averaged) confusion over every pixel of every sample.
template <typename T>
MetricsRecord evaluate(const AttSwinUNet<T>& model, const Dataset& data, double threshold = 0.5) {
  if (data.empty()) throw std::invalid_argument("evaluate: empty dataset");
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (const auto& s : data) {
    auto pred = predict_mask(model, s, threshold);
    accumulate_confusion(pred, s.mask, tp, fp, tn, fn);
  }
  return MetricsRecord::from_counts(tp, fp, tn, fn);
}

}  // namespace attswin
