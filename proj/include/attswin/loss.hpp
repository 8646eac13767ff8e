#pragma once

// Blended segmentation loss: pixel-mean softmax cross-entropy plus soft Dice
// (smoothing 1 in numerator and denominator), pooled over every pixel of the
// tensor. Both terms are nonnegative; the loss is 0 only for an exact,
// saturated prediction.

#include <cstdint>
#include <memory>
#include <vector>

#include "attswin/tensor.hpp"

namespace attswin {

template <typename T>
Tensor<T> segmentation_loss(const Tensor<T>& logits, const std::vector<std::uint8_t>& mask,
                            T lambda_ce = T(0.5), T lambda_dice = T(0.5)) {
  const Shape& s = logits.shape();
  if (s.empty() || s.back() != 2)
    throw std::invalid_argument("loss: expected trailing class extent 2, got " + shape_str(s));
  const int pixels = static_cast<int>(logits.numel() / 2);
  if (mask.size() != static_cast<std::size_t>(pixels))
    throw std::invalid_argument("loss: mask holds " + std::to_string(mask.size()) +
                                " pixels, logits describe " + std::to_string(pixels));
  for (std::uint8_t m : mask)
    if (m > 1) throw std::invalid_argument("loss: non-binary mask value " + std::to_string(int(m)));

  auto flat = reshape(logits, {pixels, 2});

  // cross entropy: pick the true-class log probability per pixel
  auto pick = std::make_shared<IndexVec>(static_cast<std::size_t>(pixels));
  for (int p = 0; p < pixels; ++p)
    (*pick)[static_cast<std::size_t>(p)] = static_cast<std::uint32_t>(2 * p + mask[static_cast<std::size_t>(p)]);
  auto picked = gather(log_softmax_last(flat), {pixels}, pick);
  auto ce = scale(sum_all(picked), static_cast<T>(-1.0 / pixels));

  // soft Dice on the foreground probability
  auto fg_idx = std::make_shared<IndexVec>(static_cast<std::size_t>(pixels));
  for (int p = 0; p < pixels; ++p) (*fg_idx)[static_cast<std::size_t>(p)] = static_cast<std::uint32_t>(2 * p + 1);
  auto p_fg = gather(softmax_last(flat), {pixels}, fg_idx);
  std::vector<T> mask_vals(mask.size());
  double mask_sum = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask_vals[i] = static_cast<T>(mask[i]);
    mask_sum += mask[i];
  }
  auto mask_t = Tensor<T>::from_values({pixels}, std::move(mask_vals));
  auto intersection = sum_all(mul(p_fg, mask_t));
  auto dice = div(affine(intersection, T(2), T(1)), affine(sum_all(p_fg), T(1), static_cast<T>(mask_sum + 1.0)));
  auto dice_loss = affine(dice, T(-1), T(1));

  return add(scale(ce, lambda_ce), scale(dice_loss, lambda_dice));
}

}  // namespace attswin
