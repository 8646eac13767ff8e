#pragma once

// Windowed multi-head self-attention: window partitioning, cyclic shift,
// shifted-window masking, relative position bias and the two-sub-block Swin
// transformer block. Attention maps can be exported (for transfer across
// skip connections) and an external map can be injected post-softmax.

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "attswin/layers.hpp"
#include "attswin/optim.hpp"
#include "attswin/tensor.hpp"

namespace attswin {

// Token grid of one scale together with its window configuration.
struct WindowGrid {
  int h = 0, w = 0;  // tokens per side
  int window = 0;    // M
  int shift = 0;     // 0 or floor(M/2)

  void validate() const {
    if (h <= 0 || w <= 0 || window <= 0)
      throw std::invalid_argument("window grid: extents and window must be positive");
    if (h % window != 0 || w % window != 0)
      throw std::invalid_argument("window grid: " + std::to_string(h) + "x" + std::to_string(w) +
                                  " tokens not divisible by window " + std::to_string(window));
    if (shift != 0 && shift != window / 2)
      throw std::invalid_argument("window grid: shift must be 0 or window/2");
    if (shift >= window) throw std::invalid_argument("window grid: shift must be smaller than window");
  }

  int windows_h() const { return h / window; }
  int windows_w() const { return w / window; }
  int num_windows() const { return windows_h() * windows_w(); }
  int tokens() const { return h * w; }
  int window_area() const { return window * window; }
};

namespace winidx {

// Token-level permutation for non-overlapping MxM tiles in row-major tile
// order, row-major within each tile.
inline IndexVec partition_tokens(const WindowGrid& g) {
  g.validate();
  IndexVec idx(static_cast<std::size_t>(g.tokens()));
  std::size_t k = 0;
  for (int wr = 0; wr < g.windows_h(); ++wr)
    for (int wc = 0; wc < g.windows_w(); ++wc)
      for (int tr = 0; tr < g.window; ++tr)
        for (int tc = 0; tc < g.window; ++tc)
          idx[k++] = static_cast<std::uint32_t>((wr * g.window + tr) * g.w + wc * g.window + tc);
  return idx;
}

inline IndexVec invert(const IndexVec& perm) {
  IndexVec inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = static_cast<std::uint32_t>(i);
  return inv;
}

// Torus roll of the token grid by (-s, -s) for direction +1, (+s, +s) for -1.
inline IndexVec shift_tokens(const WindowGrid& g, int direction) {
  IndexVec idx(static_cast<std::size_t>(g.tokens()));
  const int s = g.shift * direction;
  for (int r = 0; r < g.h; ++r)
    for (int c = 0; c < g.w; ++c) {
      const int sr = ((r + s) % g.h + g.h) % g.h;
      const int sc = ((c + s) % g.w + g.w) % g.w;
      idx[static_cast<std::size_t>(r) * g.w + c] = static_cast<std::uint32_t>(sr * g.w + sc);
    }
  return idx;
}

// Expand a token permutation to cover a trailing channel axis.
inline IndexVecPtr expand_channels(const IndexVec& tokens, int channels) {
  auto out = std::make_shared<IndexVec>(tokens.size() * static_cast<std::size_t>(channels));
  for (std::size_t t = 0; t < tokens.size(); ++t)
    for (int c = 0; c < channels; ++c)
      (*out)[t * channels + c] = tokens[t] * static_cast<std::uint32_t>(channels) + c;
  return out;
}

// [win*M2, C] -> [win, heads, M2, d] head split, and its inverse.
inline IndexVecPtr head_split(int windows, int area, int heads, int head_dim) {
  const int channels = heads * head_dim;
  auto out = std::make_shared<IndexVec>(static_cast<std::size_t>(windows) * area * channels);
  std::size_t k = 0;
  for (int w = 0; w < windows; ++w)
    for (int h = 0; h < heads; ++h)
      for (int t = 0; t < area; ++t)
        for (int e = 0; e < head_dim; ++e)
          (*out)[k++] = static_cast<std::uint32_t>((static_cast<std::size_t>(w) * area + t) * channels +
                                                   h * head_dim + e);
  return out;
}

inline IndexVecPtr head_merge(int windows, int area, int heads, int head_dim) {
  const int channels = heads * head_dim;
  auto out = std::make_shared<IndexVec>(static_cast<std::size_t>(windows) * area * channels);
  std::size_t k = 0;
  for (int w = 0; w < windows; ++w)
    for (int t = 0; t < area; ++t)
      for (int h = 0; h < heads; ++h)
        for (int e = 0; e < head_dim; ++e)
          (*out)[k++] = static_cast<std::uint32_t>(((static_cast<std::size_t>(w) * heads + h) * area + t) *
                                                       head_dim +
                                                   e);
  return out;
}

}  // namespace winidx

// Pairwise relative-position table rows: index(i, j) depends only on the
// coordinate difference of patches i and j within an MxM window.
inline IndexVec relative_position_index(int window) {
  const int area = window * window;
  const int span = 2 * window - 1;
  IndexVec idx(static_cast<std::size_t>(area) * area);
  for (int i = 0; i < area; ++i) {
    const int ri = i / window, ci = i % window;
    for (int j = 0; j < area; ++j) {
      const int rj = j / window, cj = j % window;
      const int dr = ri - rj + window - 1;
      const int dc = ci - cj + window - 1;
      idx[static_cast<std::size_t>(i) * area + j] = static_cast<std::uint32_t>(dr * span + dc);
    }
  }
  return idx;
}

// ---------------------------------------------------------------------------
// Standalone window ops

template <typename T>
Tensor<T> window_partition(const Tensor<T>& z, const WindowGrid& g) {
  const int c = z.shape().back();
  if (z.shape() != Shape{g.tokens(), c})
    throw std::invalid_argument("window_partition: expected (" + std::to_string(g.tokens()) +
                                ", C) tokens, got " + shape_str(z.shape()));
  auto idx = winidx::expand_channels(winidx::partition_tokens(g), c);
  return gather(z, {g.num_windows(), g.window_area(), c}, idx);
}

template <typename T>
Tensor<T> window_reverse(const Tensor<T>& w, const WindowGrid& g) {
  const Shape& s = w.shape();
  if (s.size() != 3 || s[0] != g.num_windows() || s[1] != g.window_area())
    throw std::invalid_argument("window_reverse: window count mismatch, got " + shape_str(s) +
                                " for grid " + std::to_string(g.h) + "x" + std::to_string(g.w) +
                                " window " + std::to_string(g.window));
  const int c = s[2];
  auto idx = winidx::expand_channels(winidx::invert(winidx::partition_tokens(g)), c);
  return gather(reshape(w, {g.tokens(), c}), {g.tokens(), c}, idx);
}

template <typename T>
Tensor<T> cyclic_shift(const Tensor<T>& z, const WindowGrid& g, int direction) {
  if (g.shift == 0) return z;
  const int c = z.shape().back();
  auto idx = winidx::expand_channels(winidx::shift_tokens(g, direction), c);
  return gather(z, z.shape(), idx);
}

// Pre-softmax additive mask for shifted windows: 0 where both patches come
// from the same pre-shift region, -100 otherwise. Regions per axis follow the
// post-shift layout [0, L-M), [L-M, L-s), [L-s, L).
template <typename T>
Tensor<T> shifted_attention_mask(const WindowGrid& g) {
  if (g.shift <= 0) throw std::invalid_argument("shifted_attention_mask: grid has no shift");
  g.validate();
  auto region = [&](int coord, int len) {
    if (coord < len - g.window) return 0;
    if (coord < len - g.shift) return 1;
    return 2;
  };
  std::vector<int> label(static_cast<std::size_t>(g.tokens()));
  for (int r = 0; r < g.h; ++r)
    for (int c = 0; c < g.w; ++c)
      label[static_cast<std::size_t>(r) * g.w + c] = 3 * region(r, g.h) + region(c, g.w);
  const IndexVec part = winidx::partition_tokens(g);
  const int win = g.num_windows();
  const int area = g.window_area();
  std::vector<T> mask(static_cast<std::size_t>(win) * area * area, T(0));
  for (int w = 0; w < win; ++w)
    for (int i = 0; i < area; ++i)
      for (int j = 0; j < area; ++j)
        if (label[part[static_cast<std::size_t>(w) * area + i]] !=
            label[part[static_cast<std::size_t>(w) * area + j]])
          mask[(static_cast<std::size_t>(w) * area + i) * area + j] = T(-100);
  return Tensor<T>::from_values({win, area, area}, std::move(mask));
}

// attn: [win, heads, r, c] plus constant mask [win, r, c] broadcast over heads.
template <typename T>
Tensor<T> add_attn_mask(const Tensor<T>& attn, const Tensor<T>& mask) {
  const Shape& as = attn.shape();
  const Shape& ms = mask.shape();
  if (as.size() != 4 || ms.size() != 3 || as[0] != ms[0] || as[2] != ms[1] || as[3] != ms[2])
    throw std::invalid_argument("add_attn_mask: shape mismatch " + shape_str(as) + " vs " + shape_str(ms));
  const std::size_t win = static_cast<std::size_t>(as[0]);
  const std::size_t heads = static_cast<std::size_t>(as[1]);
  const std::size_t inner = static_cast<std::size_t>(as[2]) * as[3];
  std::vector<T> out(attn.numel());
  const auto& av = attn.values();
  const auto& mv = mask.values();
  for (std::size_t w = 0; w < win; ++w)
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t base = (w * heads + h) * inner;
      const std::size_t mbase = w * inner;
      for (std::size_t i = 0; i < inner; ++i) out[base + i] = av[base + i] + mv[mbase + i];
    }
  return detail::make_op<T>(attn.shape(), std::move(out), {attn}, [](detail::Node<T>& n) {
    auto& p = n.parent(0);
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Multi-head window attention

// Post-softmax attention weights of one sub-block (the transferable W_att).
template <typename T>
struct AttentionMap {
  Tensor<T> values;  // [windows, heads, M2, M2]
  int stage = 0;
  bool shifted = false;
};

template <typename T>
struct RelativePositionBias {
  Tensor<T> table;  // [(2M-1)^2, heads]
  IndexVecPtr gather_idx;
  int window = 0, heads = 0;

  RelativePositionBias() = default;
  RelativePositionBias(ParamStore<T>& ps, const std::string& prefix, int window_, int heads_)
      : window(window_), heads(heads_) {
    const int span = 2 * window - 1;
    table = ps.create(prefix + ".bias_table", {span * span, heads}, Init::TruncNormal002);
    const IndexVec rel = relative_position_index(window);
    auto idx = std::make_shared<IndexVec>(static_cast<std::size_t>(heads) * rel.size());
    std::size_t k = 0;
    for (int h = 0; h < heads; ++h)
      for (std::size_t p = 0; p < rel.size(); ++p)
        (*idx)[k++] = rel[p] * static_cast<std::uint32_t>(heads) + h;
    gather_idx = idx;
  }

  // [heads, area, area] bias gathered from the table (differentiable).
  Tensor<T> bias(int area) const {
    if (gather_idx->size() != static_cast<std::size_t>(heads) * area * area)
      throw std::invalid_argument("relative position bias built for window " + std::to_string(window) +
                                  " cannot serve " + std::to_string(area) + " patches per window");
    return gather(table, {heads, area, area}, gather_idx);
  }
};

template <typename T>
struct MsaParams {
  int heads = 0, head_dim = 0, channels = 0;
  LinearLayer<T> q, k, v, proj;

  MsaParams() = default;
  MsaParams(ParamStore<T>& ps, const std::string& prefix, int channels_, int heads_)
      : heads(heads_), head_dim(channels_ / heads_), channels(channels_) {
    if (channels_ % heads_ != 0)
      throw std::invalid_argument("msa: channels " + std::to_string(channels_) +
                                  " not divisible by heads " + std::to_string(heads_));
    q = LinearLayer<T>(ps, prefix + ".q", channels_, channels_);
    k = LinearLayer<T>(ps, prefix + ".k", channels_, channels_);
    v = LinearLayer<T>(ps, prefix + ".v", channels_, channels_);
    proj = LinearLayer<T>(ps, prefix + ".proj", channels_, channels_);
  }
};

template <typename T>
struct MsaOutput {
  Tensor<T> tokens;    // [win, M2, C]
  Tensor<T> attention; // pre-transfer softmax map [win, heads, M2, M2]
  Tensor<T> combined;  // softmax + external map; defined only when injected
};

// A = softmax(QK^T/sqrt(d) + B [+ mask]); with an external map E the value
// aggregation uses (A + E), optionally halved when normalize_transfer is set.
template <typename T>
MsaOutput<T> window_msa(const Tensor<T>& windows, const MsaParams<T>& p,
                        const RelativePositionBias<T>& bias, const Tensor<T>& mask = {},
                        const Tensor<T>& external_map = {}, bool normalize_transfer = false) {
  const Shape& s = windows.shape();
  if (s.size() != 3 || s[2] != p.channels)
    throw std::invalid_argument("window_msa: expected (win, M2, " + std::to_string(p.channels) +
                                "), got " + shape_str(s));
  const int win = s[0], area = s[1];
  if (external_map.defined()) {
    const Shape want{win, p.heads, area, area};
    if (external_map.shape() != want)
      throw std::invalid_argument("skip transfer: external attention map shape " +
                                  shape_str(external_map.shape()) + " does not match " + shape_str(want));
  }
  auto x2 = reshape(windows, {win * area, p.channels});
  auto split = winidx::head_split(win, area, p.heads, p.head_dim);
  const Shape hs{win, p.heads, area, p.head_dim};
  auto qh = scale(gather(p.q(x2), hs, split), static_cast<T>(1.0 / std::sqrt(static_cast<double>(p.head_dim))));
  auto kh = gather(p.k(x2), hs, split);
  auto vh = gather(p.v(x2), hs, split);
  auto attn = matmul(qh, transpose_last2(kh));
  attn = add_broadcast(attn, bias.bias(area));
  if (mask.defined()) attn = add_attn_mask(attn, mask);
  MsaOutput<T> out;
  out.attention = softmax_last(attn);
  Tensor<T> weights = out.attention;
  if (external_map.defined()) {
    weights = add(weights, external_map);
    if (normalize_transfer) weights = scale(weights, T(0.5));
    out.combined = weights;
  }
  auto ctx = matmul(weights, vh);
  auto merged = gather(ctx, {win * area, p.channels}, winidx::head_merge(win, area, p.heads, p.head_dim));
  out.tokens = reshape(p.proj(merged), {win, area, p.channels});
  return out;
}

// ---------------------------------------------------------------------------
// Swin transformer block

template <typename T>
struct SubBlockResult {
  Tensor<T> tokens;
  AttentionMap<T> map;
  Tensor<T> combined;  // defined only when an external map was injected
};

// One LN -> (S)W-MSA -> residual -> LN -> MLP -> residual sub-block.
template <typename T>
struct SwinSubBlock {
  WindowGrid grid;
  int channels = 0;
  int stage = 0;
  LayerNormLayer<T> norm1, norm2;
  MsaParams<T> attn;
  RelativePositionBias<T> bias;
  LinearLayer<T> fc1, fc2;
  Tensor<T> mask;  // defined iff shifted
  IndexVecPtr part_idx, rev_idx, shift_fwd, shift_bwd;

  SwinSubBlock() = default;
  SwinSubBlock(ParamStore<T>& ps, const std::string& prefix, WindowGrid grid_, int channels_,
               int heads, int stage_)
      : grid(grid_), channels(channels_), stage(stage_) {
    grid.validate();
    norm1 = LayerNormLayer<T>(ps, prefix + ".norm1", channels);
    attn = MsaParams<T>(ps, prefix + ".attn", channels, heads);
    bias = RelativePositionBias<T>(ps, prefix + ".attn", grid.window, heads);
    norm2 = LayerNormLayer<T>(ps, prefix + ".norm2", channels);
    fc1 = LinearLayer<T>(ps, prefix + ".mlp.fc1", channels, 4 * channels);
    fc2 = LinearLayer<T>(ps, prefix + ".mlp.fc2", 4 * channels, channels);
    const IndexVec part = winidx::partition_tokens(grid);
    part_idx = winidx::expand_channels(part, channels);
    rev_idx = winidx::expand_channels(winidx::invert(part), channels);
    if (grid.shift > 0) {
      shift_fwd = winidx::expand_channels(winidx::shift_tokens(grid, +1), channels);
      shift_bwd = winidx::expand_channels(winidx::shift_tokens(grid, -1), channels);
      mask = shifted_attention_mask<T>(grid);
    }
  }

  bool shifted() const { return grid.shift > 0; }

  SubBlockResult<T> forward(const Tensor<T>& z, const Tensor<T>& external = {},
                            bool normalize_transfer = false) const {
    const Shape tok{grid.tokens(), channels};
    if (z.shape() != tok)
      throw std::invalid_argument("swin block: expected tokens " + shape_str(tok) + ", got " +
                                  shape_str(z.shape()));
    if (external.defined()) {
      const Shape want{grid.num_windows(), attn.heads, grid.window_area(), grid.window_area()};
      if (external.shape() != want)
        throw std::invalid_argument("skip transfer: stage " + std::to_string(stage) +
                                    " expects attention map " + shape_str(want) + ", got " +
                                    shape_str(external.shape()));
    }
    auto x = norm1(z);
    if (shifted()) x = gather(x, tok, shift_fwd);
    auto w = gather(x, {grid.num_windows(), grid.window_area(), channels}, part_idx);
    auto msa = window_msa(w, attn, bias, mask, external, normalize_transfer);
    x = gather(reshape(msa.tokens, tok), tok, rev_idx);
    if (shifted()) x = gather(x, tok, shift_bwd);
    auto z1 = add(z, x);
    auto out = add(z1, fc2(gelu(fc1(norm2(z1)))));
    SubBlockResult<T> r;
    r.tokens = out;
    r.map = AttentionMap<T>{msa.attention, stage, shifted()};
    r.combined = msa.combined;
    return r;
  }
};

template <typename T>
struct SwinBlockResult {
  Tensor<T> tokens;
  AttentionMap<T> map_w, map_sw;
  Tensor<T> combined_w, combined_sw;
};

// The W-MSA then SW-MSA pair; shift is floor(M/2) when the grid is larger
// than one window, otherwise the shifted path degenerates to shift 0.
template <typename T>
struct SwinBlockPair {
  SwinSubBlock<T> wmsa, swmsa;

  SwinBlockPair() = default;
  SwinBlockPair(ParamStore<T>& ps, const std::string& prefix, int grid_h, int grid_w, int window,
                int channels, int heads, int stage) {
    const int eff_window = std::min({window, grid_h, grid_w});
    const int shift = (grid_h > eff_window || grid_w > eff_window) ? eff_window / 2 : 0;
    WindowGrid gw{grid_h, grid_w, eff_window, 0};
    WindowGrid gs{grid_h, grid_w, eff_window, shift};
    wmsa = SwinSubBlock<T>(ps, prefix + ".w", gw, channels, heads, stage);
    swmsa = SwinSubBlock<T>(ps, prefix + ".sw", gs, channels, heads, stage);
  }

  SwinBlockResult<T> forward(const Tensor<T>& z, const Tensor<T>& external_w = {},
                             const Tensor<T>& external_sw = {}, bool normalize_transfer = false) const {
    auto a = wmsa.forward(z, external_w, normalize_transfer);
    auto b = swmsa.forward(a.tokens, external_sw, normalize_transfer);
    SwinBlockResult<T> r;
    r.tokens = b.tokens;
    r.map_w = a.map;
    r.map_sw = b.map;
    r.combined_w = a.combined;
    r.combined_sw = b.combined;
    return r;
  }
};

}  // namespace attswin
