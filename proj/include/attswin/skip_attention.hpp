#pragma once

// The two-level skip-connection attention:
//  (a) spatial attention transfer: encoder attention maps are added into the
//      matching decoder sub-block attention, post softmax, without
//      renormalization (each combined row then sums to 2);
//  (b) cross-contextual attention: the decoder series' global token queries
//      the skip global token prepended to the decoder tokens, and the
//      aggregated token re-enters through a broadcast residual;
//  (c) skip fusion: channel concatenation reduced back by a linear layer.

#include <string>
#include <vector>

#include "attswin/layers.hpp"
#include "attswin/swin.hpp"
#include "attswin/tensor.hpp"

namespace attswin {

// Everything an encoder stage hands to its same-scale decoder stage.
template <typename T>
struct SkipBundle {
  int stage = 0;
  TokenSeq<T> skip;  // encoder stage output, same grid as the decoder stage
  AttentionMap<T> map_w, map_sw;
};

template <typename T>
struct CrossAttentionParams {
  int channels = 0, heads = 0, head_dim = 0;
  Tensor<T> wj, wk, wl;  // [C, C], one C x (C/h) projection per head
  LinearLayer<T> proj;   // C -> C output projection

  CrossAttentionParams() = default;
  CrossAttentionParams(ParamStore<T>& ps, const std::string& prefix, int channels_, int heads_)
      : channels(channels_), heads(heads_), head_dim(channels_ / heads_) {
    if (channels_ % heads_ != 0)
      throw std::invalid_argument("cross attention: channels " + std::to_string(channels_) +
                                  " not divisible by heads " + std::to_string(heads_));
    wj = ps.create(prefix + ".wj", {channels_, channels_}, Init::TruncNormal002);
    wk = ps.create(prefix + ".wk", {channels_, channels_}, Init::TruncNormal002);
    wl = ps.create(prefix + ".wl", {channels_, channels_}, Init::TruncNormal002);
    proj = LinearLayer<T>(ps, prefix + ".proj", channels_, channels_);
  }
};

// Global-token cross attention between the skip and decoder series. Both
// series' means form global tokens; the skip global token is prepended to the
// decoder tokens, a single decoder-global query attends over the N+1 keys,
// and the projected result recalibrates every decoder token residually.
template <typename T>
Tensor<T> cross_contextual_attention(const Tensor<T>& skip_tokens, const Tensor<T>& decoder_tokens,
                                     const CrossAttentionParams<T>& p) {
  if (skip_tokens.shape() != decoder_tokens.shape())
    throw std::invalid_argument("cross attention: token shapes differ, " +
                                shape_str(skip_tokens.shape()) + " vs " +
                                shape_str(decoder_tokens.shape()));
  const Shape& s = decoder_tokens.shape();
  if (s.size() != 2 || s[1] != p.channels)
    throw std::invalid_argument("cross attention: expected (N, " + std::to_string(p.channels) +
                                ") tokens, got " + shape_str(s));
  const int n = s[0];
  auto d_globe = reshape(mean_tokens(decoder_tokens), {1, p.channels});
  auto s_globe = reshape(mean_tokens(skip_tokens), {1, p.channels});
  auto fused = concat(s_globe, decoder_tokens, 0);  // [N+1, C]

  auto q = matmul(d_globe, p.wj);  // [1, C]
  auto k = matmul(fused, p.wk);    // [N+1, C]
  auto v = matmul(fused, p.wl);

  auto qh = gather(q, {1, p.heads, 1, p.head_dim}, winidx::head_split(1, 1, p.heads, p.head_dim));
  auto kh = gather(k, {1, p.heads, n + 1, p.head_dim}, winidx::head_split(1, n + 1, p.heads, p.head_dim));
  auto vh = gather(v, {1, p.heads, n + 1, p.head_dim}, winidx::head_split(1, n + 1, p.heads, p.head_dim));

  auto scores = matmul(scale(qh, static_cast<T>(1.0 / std::sqrt(static_cast<double>(p.head_dim)))),
                       transpose_last2(kh));  // [1, heads, 1, N+1]
  auto attn = softmax_last(scores);
  auto ca = matmul(attn, vh);  // [1, heads, 1, d]
  auto merged = gather(ca, {1, p.channels}, winidx::head_merge(1, 1, p.heads, p.head_dim));
  auto token = reshape(p.proj(merged), {p.channels});
  return add_broadcast(decoder_tokens, token);
}

// Channel concatenation of skip and recalibrated decoder tokens, reduced
// 2C -> C by the given linear layer.
template <typename T>
Tensor<T> fuse_skip(const Tensor<T>& skip_tokens, const Tensor<T>& decoder_tokens,
                    const LinearLayer<T>& reduce) {
  if (skip_tokens.shape() != decoder_tokens.shape())
    throw std::invalid_argument("fuse_skip: token shapes differ, " + shape_str(skip_tokens.shape()) +
                                " vs " + shape_str(decoder_tokens.shape()));
  return reduce(concat_channels(skip_tokens, decoder_tokens));
}

template <typename T>
struct StageBlocksResult {
  Tensor<T> tokens;
  std::vector<Tensor<T>> combined;  // combined weight maps, when transfer was active
};

// Run a stage's block pairs, optionally injecting the encoder's attention
// maps into every pair (W-MSA map into W-MSA sub-blocks, SW-MSA into SW-MSA).
template <typename T>
StageBlocksResult<T> run_stage_blocks(const std::vector<SwinBlockPair<T>>& pairs, Tensor<T> tokens,
                                      const Tensor<T>& external_w = {}, const Tensor<T>& external_sw = {},
                                      bool normalize_transfer = false) {
  StageBlocksResult<T> out;
  for (const auto& pair : pairs) {
    auto r = pair.forward(tokens, external_w, external_sw, normalize_transfer);
    tokens = r.tokens;
    if (r.combined_w.defined()) out.combined.push_back(r.combined_w);
    if (r.combined_sw.defined()) out.combined.push_back(r.combined_sw);
  }
  out.tokens = tokens;
  return out;
}

}  // namespace attswin
