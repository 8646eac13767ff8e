#pragma once

// Patch embedding, patch merging (encoder downsampling), patch expanding
// (decoder upsampling) and the final expansion + segmentation head.
//
// Fixed layout conventions, chosen so oracles are bit-reproducible:
//  - embed flattens each patch row-major with channels last;
//  - merge gathers (even row, even col), (odd row, even col),
//    (even row, odd col), (odd row, odd col);
//  - expand maps channel group g to spatial offset (g / 2, g % 2), and the
//    final expansion maps group g to (g / p, g % p).

#include <memory>
#include <string>

#include "attswin/layers.hpp"
#include "attswin/optim.hpp"
#include "attswin/tensor.hpp"

namespace attswin {

namespace residx {

// image [H, W, in_ch] -> [(H/p)*(W/p), p*p*in_ch]
inline IndexVecPtr embed_gather(int img_h, int img_w, int in_ch, int patch) {
  if (img_h % patch != 0 || img_w % patch != 0)
    throw std::invalid_argument("patch_embed: image " + std::to_string(img_h) + "x" +
                                std::to_string(img_w) + " not divisible by patch size " +
                                std::to_string(patch));
  const int gh = img_h / patch, gw = img_w / patch;
  auto idx = std::make_shared<IndexVec>(static_cast<std::size_t>(img_h) * img_w * in_ch);
  std::size_t k = 0;
  for (int pr = 0; pr < gh; ++pr)
    for (int pc = 0; pc < gw; ++pc)
      for (int tr = 0; tr < patch; ++tr)
        for (int tc = 0; tc < patch; ++tc)
          for (int ch = 0; ch < in_ch; ++ch)
            (*idx)[k++] = static_cast<std::uint32_t>(
                ((pr * patch + tr) * static_cast<std::size_t>(img_w) + pc * patch + tc) * in_ch + ch);
  return idx;
}

// [h*w, C] -> [h/2*w/2, 4C] under the declared 2x2 gather order
inline IndexVecPtr merge_gather(int h, int w, int c) {
  if (h % 2 != 0 || w % 2 != 0)
    throw std::invalid_argument("patch_merge: odd grid extents " + std::to_string(h) + "x" +
                                std::to_string(w));
  auto idx = std::make_shared<IndexVec>(static_cast<std::size_t>(h) * w * c);
  const int offsets[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  std::size_t k = 0;
  for (int r = 0; r < h / 2; ++r)
    for (int col = 0; col < w / 2; ++col)
      for (const auto& off : offsets)
        for (int ch = 0; ch < c; ++ch)
          (*idx)[k++] = static_cast<std::uint32_t>(
              ((2 * r + off[0]) * static_cast<std::size_t>(w) + 2 * col + off[1]) * c + ch);
  return idx;
}

// [h*w, factor^2 * cout] -> [factor*h * factor*w, cout], group g -> offset (g/f, g%f)
inline IndexVecPtr expand_rearrange(int h, int w, int cout, int factor) {
  auto idx = std::make_shared<IndexVec>(static_cast<std::size_t>(h) * w * factor * factor * cout);
  const int cin = factor * factor * cout;
  std::size_t k = 0;
  for (int r = 0; r < factor * h; ++r)
    for (int col = 0; col < factor * w; ++col) {
      const int src = (r / factor) * w + (col / factor);
      const int g = (r % factor) * factor + (col % factor);
      for (int ch = 0; ch < cout; ++ch)
        (*idx)[k++] = static_cast<std::uint32_t>(static_cast<std::size_t>(src) * cin + g * cout + ch);
    }
  return idx;
}

}  // namespace residx

// Non-overlapping patch flattening, linear projection to C, LayerNorm.
template <typename T>
struct PatchEmbed {
  int img_h = 0, img_w = 0, in_ch = 0, patch = 0, channels = 0;
  LinearLayer<T> proj;
  LayerNormLayer<T> norm;
  IndexVecPtr gather_idx;

  PatchEmbed() = default;
  PatchEmbed(ParamStore<T>& ps, const std::string& prefix, int img_h_, int img_w_, int in_ch_,
             int patch_, int channels_)
      : img_h(img_h_), img_w(img_w_), in_ch(in_ch_), patch(patch_), channels(channels_) {
    gather_idx = residx::embed_gather(img_h, img_w, in_ch, patch);
    proj = LinearLayer<T>(ps, prefix + ".proj", patch * patch * in_ch, channels);
    norm = LayerNormLayer<T>(ps, prefix + ".norm", channels);
  }

  int grid_h() const { return img_h / patch; }
  int grid_w() const { return img_w / patch; }

  // Pre-norm projection; linear in the image when the projection bias is zero.
  Tensor<T> projected(const Tensor<T>& img) const {
    if (img.shape() != Shape{img_h, img_w, in_ch})
      throw std::invalid_argument("patch_embed: expected image (" + std::to_string(img_h) + ", " +
                                  std::to_string(img_w) + ", " + std::to_string(in_ch) + "), got " +
                                  shape_str(img.shape()));
    auto patches = gather(img, {grid_h() * grid_w(), patch * patch * in_ch}, gather_idx);
    return proj(patches);
  }

  TokenSeq<T> forward(const Tensor<T>& img) const {
    return TokenSeq<T>{norm(projected(img)), grid_h(), grid_w()};
  }
};

// 2x2 neighbor concatenation (C -> 4C), LayerNorm, then linear 4C -> 2C.
template <typename T>
struct PatchMerge {
  int grid_h = 0, grid_w = 0, channels = 0;
  LayerNormLayer<T> norm;
  LinearLayer<T> reduction;
  IndexVecPtr gather_idx;

  PatchMerge() = default;
  PatchMerge(ParamStore<T>& ps, const std::string& prefix, int grid_h_, int grid_w_, int channels_)
      : grid_h(grid_h_), grid_w(grid_w_), channels(channels_) {
    gather_idx = residx::merge_gather(grid_h, grid_w, channels);
    norm = LayerNormLayer<T>(ps, prefix + ".norm", 4 * channels);
    reduction = LinearLayer<T>(ps, prefix + ".reduction", 4 * channels, 2 * channels);
  }

  // The 4C concatenation before normalization and reduction.
  Tensor<T> gathered(const TokenSeq<T>& z) const {
    if (z.h != grid_h || z.w != grid_w || z.channels() != channels)
      throw std::invalid_argument("patch_merge: token grid mismatch");
    return gather(z.tokens, {grid_h / 2 * (grid_w / 2), 4 * channels}, gather_idx);
  }

  TokenSeq<T> forward(const TokenSeq<T>& z) const {
    return TokenSeq<T>{reduction(norm(gathered(z))), grid_h / 2, grid_w / 2};
  }
};

// Linear C -> 2C, then each token's channels become a 2x2 block of C/2-channel
// tokens; LayerNorm on the output.
template <typename T>
struct PatchExpand {
  int grid_h = 0, grid_w = 0, channels = 0;
  LinearLayer<T> expand;
  LayerNormLayer<T> norm;
  IndexVecPtr rearrange_idx;

  PatchExpand() = default;
  PatchExpand(ParamStore<T>& ps, const std::string& prefix, int grid_h_, int grid_w_, int channels_)
      : grid_h(grid_h_), grid_w(grid_w_), channels(channels_) {
    if ((2 * channels) % 4 != 0)
      throw std::invalid_argument("patch_expand: channel count " + std::to_string(channels) +
                                  " not divisible by 4 after doubling");
    expand = LinearLayer<T>(ps, prefix + ".expand", channels, 2 * channels);
    norm = LayerNormLayer<T>(ps, prefix + ".norm", channels / 2);
    rearrange_idx = residx::expand_rearrange(grid_h, grid_w, channels / 2, 2);
  }

  TokenSeq<T> forward(const TokenSeq<T>& z) const {
    if (z.h != grid_h || z.w != grid_w || z.channels() != channels)
      throw std::invalid_argument("patch_expand: token grid mismatch");
    auto widened = expand(z.tokens);
    auto up = gather(widened, {4 * grid_h * grid_w, channels / 2}, rearrange_idx);
    return TokenSeq<T>{norm(up), 2 * grid_h, 2 * grid_w};
  }
};

// Final patch-size expansion back to pixel resolution plus 1x1 head to logits.
template <typename T>
struct FinalExpand {
  int grid_h = 0, grid_w = 0, channels = 0, patch = 0, num_classes = 0;
  LinearLayer<T> expand;
  LayerNormLayer<T> norm;
  LinearLayer<T> head;
  IndexVecPtr rearrange_idx;

  FinalExpand() = default;
  FinalExpand(ParamStore<T>& ps, const std::string& prefix, int grid_h_, int grid_w_, int channels_,
              int patch_, int num_classes_)
      : grid_h(grid_h_), grid_w(grid_w_), channels(channels_), patch(patch_), num_classes(num_classes_) {
    expand = LinearLayer<T>(ps, prefix + ".expand", channels, patch * patch * channels);
    norm = LayerNormLayer<T>(ps, prefix + ".norm", channels);
    head = LinearLayer<T>(ps, prefix + ".head", channels, num_classes);
    rearrange_idx = residx::expand_rearrange(grid_h, grid_w, channels, patch);
  }

  // [H, W, num_classes] logits
  Tensor<T> forward(const TokenSeq<T>& z) const {
    if (z.h != grid_h || z.w != grid_w || z.channels() != channels)
      throw std::invalid_argument("final_expand: token grid mismatch");
    auto widened = expand(z.tokens);
    auto up = gather(widened, {patch * patch * grid_h * grid_w, channels}, rearrange_idx);
    auto logits = head(norm(up));
    return reshape(logits, {patch * grid_h, patch * grid_w, num_classes});
  }
};

}  // namespace attswin
