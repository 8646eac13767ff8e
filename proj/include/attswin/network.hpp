#pragma once

// Full encoder/decoder assembly: patch embedding, three encoder stages plus
// bottleneck, three decoder stages consuming per-scale skip bundles, and the
// segmentation head. Ablation switches select how much of the skip-attention
// machinery runs; parameters are always allocated for all of it, so flipping
// a switch never changes the parameter set.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "attswin/layers.hpp"
#include "attswin/optim.hpp"
#include "attswin/resample.hpp"
#include "attswin/skip_attention.hpp"
#include "attswin/swin.hpp"
#include "attswin/tensor.hpp"

namespace attswin {

struct ModelConfig {
  int image_size = 224;
  int in_channels = 3;
  int patch_size = 4;
  int base_channels = 96;
  std::vector<int> depths = {2, 2, 2, 2};  // sub-blocks per stage, stages 0..2 + bottleneck
  std::vector<int> heads = {3, 6, 12, 24};
  int window_size = 7;
  int num_classes = 2;
  int attn_skips = 3;  // shallowest-first count of stages with skip attention
  bool spatial_attention = true;
  bool cross_attention = true;
  bool normalize_transfer = false;
  std::string model_scale = "base";  // tiny | base | large; large doubles channels and heads

  int scale_mult() const { return model_scale == "large" ? 2 : 1; }
  int grid_at(int scale) const { return (image_size / patch_size) >> scale; }
  int channels_at(int scale) const { return base_channels * scale_mult() * (1 << scale); }
  int heads_at(int scale) const { return heads.at(static_cast<std::size_t>(scale)) * scale_mult(); }
  int effective_window(int scale) const { return std::min(window_size, grid_at(scale)); }
  bool stage_uses_attention(int scale) const { return scale < attn_skips; }

  void validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("model config: " + m); };
    if (image_size <= 0 || in_channels <= 0 || patch_size <= 0 || base_channels <= 0)
      fail("extents must be positive");
    if (num_classes < 2) fail("num_classes must be at least 2");
    if (image_size % patch_size != 0)
      fail("image size " + std::to_string(image_size) + " not divisible by patch size " +
           std::to_string(patch_size));
    if (depths.size() != 4 || heads.size() != 4) fail("depths and heads need 4 entries (3 stages + bottleneck)");
    for (int d : depths)
      if (d < 2 || d % 2 != 0) fail("stage depths must be positive even sub-block counts");
    if (model_scale != "tiny" && model_scale != "base" && model_scale != "large")
      fail("model_scale must be tiny, base or large");
    const int grid0 = image_size / patch_size;
    if (grid0 % 8 != 0) fail("token grid " + std::to_string(grid0) + " must be divisible by 8 for three merges");
    if (window_size <= 0) fail("window size must be positive");
    if (attn_skips < 0 || attn_skips > 3) fail("attn_skips must lie in [0, 3]");
    for (int s = 0; s < 4; ++s) {
      if (heads.at(static_cast<std::size_t>(s)) <= 0) fail("head counts must be positive");
      if (channels_at(s) % heads_at(s) != 0)
        fail("channels " + std::to_string(channels_at(s)) + " at scale " + std::to_string(s) +
             " not divisible by " + std::to_string(heads_at(s)) + " heads");
      if (grid_at(s) % effective_window(s) != 0)
        fail("grid " + std::to_string(grid_at(s)) + " at scale " + std::to_string(s) +
             " not divisible by window " + std::to_string(effective_window(s)));
    }
  }
};

// One switch of the ablation table applied to a base configuration.
inline ModelConfig apply_ablation(ModelConfig cfg, const std::string& row) {
  if (row == "Using 1 skip connection")
    cfg.attn_skips = 1;
  else if (row == "Using 2 skip connection")
    cfg.attn_skips = 2;
  else if (row == "Using 3 skip connection")
    cfg.attn_skips = 3;
  else if (row == "Input image size 384x384") {
    // 384 = 224 * 12/7: window 12 keeps the per-scale window counts intact
    cfg.image_size = 384;
    cfg.window_size = 12;
  }
  else if (row == "Large Model")
    cfg.model_scale = "large";
  else if (row == "Eliminating the spatial attention module")
    cfg.spatial_attention = false;
  else if (row == "Eliminating the cross contextual attention module")
    cfg.cross_attention = false;
  else
    throw std::invalid_argument("unknown ablation row: " + row);
  return cfg;
}

inline const std::vector<std::string>& ablation_rows() {
  static const std::vector<std::string> rows = {
      "Using 1 skip connection",
      "Using 2 skip connection",
      "Using 3 skip connection",
      "Large Model",
      "Eliminating the spatial attention module",
      "Eliminating the cross contextual attention module",
  };
  return rows;
}

// Per-forward instrumentation of the decoder's skip-attention activity.
template <typename T>
struct ForwardTrace {
  struct Stage {
    bool used_cross = false;
    bool used_spatial = false;
    std::vector<Tensor<T>> combined;  // combined weight maps per sub-block
  };
  std::array<Stage, 3> decoder;  // indexed by scale
};

template <typename T>
struct EncoderStage {
  std::vector<SwinBlockPair<T>> pairs;
  PatchMerge<T> merge;
};

template <typename T>
struct DecoderStage {
  PatchExpand<T> expand;  // from scale s+1 down to s
  CrossAttentionParams<T> cross;
  LinearLayer<T> fuse;
  std::vector<SwinBlockPair<T>> pairs;
};

template <typename T>
class AttSwinUNet {
 public:
  AttSwinUNet(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg), params_(seed) {
    cfg_.validate();
    embed_ = PatchEmbed<T>(params_, "embed", cfg_.image_size, cfg_.image_size, cfg_.in_channels,
                           cfg_.patch_size, cfg_.channels_at(0));
    for (int s = 0; s < 3; ++s) {
      const std::string prefix = "encoder." + std::to_string(s);
      enc_[s].pairs = make_pairs(prefix, s);
      enc_[s].merge = PatchMerge<T>(params_, prefix + ".merge", cfg_.grid_at(s), cfg_.grid_at(s),
                                    cfg_.channels_at(s));
    }
    bottleneck_ = make_pairs("bottleneck", 3);
    for (int s = 2; s >= 0; --s) {
      const std::string prefix = "decoder." + std::to_string(s);
      dec_[s].expand = PatchExpand<T>(params_, prefix + ".expand", cfg_.grid_at(s + 1),
                                      cfg_.grid_at(s + 1), cfg_.channels_at(s + 1));
      dec_[s].cross = CrossAttentionParams<T>(params_, prefix + ".cross", cfg_.channels_at(s),
                                              cfg_.heads_at(s));
      dec_[s].fuse = LinearLayer<T>(params_, prefix + ".fuse", 2 * cfg_.channels_at(s),
                                    cfg_.channels_at(s));
      dec_[s].pairs = make_pairs(prefix, s);
    }
    head_ = FinalExpand<T>(params_, "head", cfg_.grid_at(0), cfg_.grid_at(0), cfg_.channels_at(0),
                           cfg_.patch_size, cfg_.num_classes);
  }

  const ModelConfig& config() const { return cfg_; }
  // The attention switches may be flipped on a built model; the parameter set
  // does not depend on them.
  void set_switches(int attn_skips, bool spatial, bool cross, bool normalize = false) {
    cfg_.attn_skips = attn_skips;
    cfg_.spatial_attention = spatial;
    cfg_.cross_attention = cross;
    cfg_.normalize_transfer = normalize;
  }

  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  struct EncodeResult {
    TokenSeq<T> bottleneck;
    std::array<SkipBundle<T>, 3> bundles;
  };

  // Encoder half only: bottleneck tokens plus the per-stage skip bundles.
  EncodeResult encode(const Tensor<T>& image) const {
    EncodeResult r;
    TokenSeq<T> z = embed_.forward(image);
    for (int s = 0; s < 3; ++s) {
      Tensor<T> tokens = z.tokens;
      SwinBlockResult<T> last;
      for (const auto& pair : enc_[s].pairs) {
        last = pair.forward(tokens);
        tokens = last.tokens;
      }
      // the final pair's maps summarize the stage for the skip transfer
      r.bundles[s] = SkipBundle<T>{s, TokenSeq<T>{tokens, z.h, z.w}, last.map_w, last.map_sw};
      z = enc_[s].merge.forward(TokenSeq<T>{tokens, z.h, z.w});
    }
    for (const auto& pair : bottleneck_) z.tokens = pair.forward(z.tokens).tokens;
    r.bottleneck = z;
    return r;
  }

  // [H, W, in_ch] image -> [H, W, num_classes] logits.
  Tensor<T> forward(const Tensor<T>& image, ForwardTrace<T>* trace = nullptr) const {
    return run(image, trace, /*baseline=*/false);
  }

  // Plain concat+linear skip path, ignoring every attention switch.
  Tensor<T> forward_baseline(const Tensor<T>& image) const {
    return run(image, nullptr, /*baseline=*/true);
  }

  // [B, H, W, in_ch] stacked logits over a batch of images.
  Tensor<T> forward_batch(const std::vector<Tensor<T>>& images, bool baseline = false) const {
    if (images.empty()) throw std::invalid_argument("forward_batch: empty batch");
    Tensor<T> out;
    for (const auto& img : images) {
      auto logits = run(img, nullptr, baseline);
      auto row = reshape(logits, {1, cfg_.image_size, cfg_.image_size, cfg_.num_classes});
      out = out.defined() ? concat(out, row, 0) : row;
    }
    return out;
  }

 private:
  std::vector<SwinBlockPair<T>> make_pairs(const std::string& prefix, int scale) {
    std::vector<SwinBlockPair<T>> pairs;
    const int n = cfg_.depths.at(static_cast<std::size_t>(scale)) / 2;
    for (int b = 0; b < n; ++b)
      pairs.emplace_back(params_, prefix + ".block" + std::to_string(b), cfg_.grid_at(scale),
                         cfg_.grid_at(scale), cfg_.window_size, cfg_.channels_at(scale),
                         cfg_.heads_at(scale), scale);
    return pairs;
  }

  Tensor<T> run(const Tensor<T>& image, ForwardTrace<T>* trace, bool baseline) const {
    EncodeResult enc = encode(image);
    TokenSeq<T> z = enc.bottleneck;
    const auto& bundles = enc.bundles;

    for (int s = 2; s >= 0; --s) {
      z = dec_[s].expand.forward(z);
      const bool use_attn = !baseline && cfg_.stage_uses_attention(s);
      const bool use_cross = use_attn && cfg_.cross_attention;
      const bool use_spatial = use_attn && cfg_.spatial_attention;
      Tensor<T> zd = z.tokens;
      if (use_cross) zd = cross_contextual_attention(bundles[s].skip.tokens, zd, dec_[s].cross);
      zd = fuse_skip(bundles[s].skip.tokens, zd, dec_[s].fuse);
      Tensor<T> ext_w, ext_sw;
      if (use_spatial) {
        ext_w = bundles[s].map_w.values;
        ext_sw = bundles[s].map_sw.values;
      }
      auto r = run_stage_blocks(dec_[s].pairs, zd, ext_w, ext_sw, cfg_.normalize_transfer);
      if (trace) {
        auto& ts = trace->decoder[static_cast<std::size_t>(s)];
        ts.used_cross = use_cross;
        ts.used_spatial = use_spatial;
        ts.combined = r.combined;
      }
      z = TokenSeq<T>{r.tokens, z.h, z.w};
    }
    return head_.forward(z);
  }

  ModelConfig cfg_;
  ParamStore<T> params_;
  PatchEmbed<T> embed_;
  std::array<EncoderStage<T>, 3> enc_;
  std::vector<SwinBlockPair<T>> bottleneck_;
  std::array<DecoderStage<T>, 3> dec_;
  FinalExpand<T> head_;
};

}  // namespace attswin
