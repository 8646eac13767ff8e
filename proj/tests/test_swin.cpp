#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <vector>

#include "attswin/gradcheck.hpp"
#include "attswin/random.hpp"
#include "attswin/swin.hpp"

using namespace attswin;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, bool rg = false, double s = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-s, s);
  return Tensor<double>::from_values(std::move(shape), std::move(v), rg);
}

// Zero relative-position bias usable with any window area.
RelativePositionBias<double> zero_bias(int heads, int area) {
  RelativePositionBias<double> b;
  b.table = Tensor<double>::zeros({1, heads});
  b.heads = heads;
  b.window = 0;
  IndexVec idx(static_cast<std::size_t>(heads) * area * area);
  for (int h = 0; h < heads; ++h)
    for (int p = 0; p < area * area; ++p) idx[static_cast<std::size_t>(h) * area * area + p] = h;
  b.gather_idx = std::make_shared<IndexVec>(std::move(idx));
  return b;
}

// Naive O(N^2) multi-head attention over the whole token set, plain arrays.
std::vector<double> naive_full_attention(const std::vector<double>& x, int n, int c, int heads,
                                         const std::vector<double>& wq, const std::vector<double>& bq,
                                         const std::vector<double>& wk, const std::vector<double>& bk,
                                         const std::vector<double>& wv, const std::vector<double>& bv,
                                         const std::vector<double>& wo, const std::vector<double>& bo) {
  const int d = c / heads;
  auto project = [&](const std::vector<double>& w, const std::vector<double>& b) {
    std::vector<double> y(static_cast<std::size_t>(n) * c, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j) {
        double acc = b[j];
        for (int l = 0; l < c; ++l) acc += x[i * c + l] * w[l * c + j];
        y[i * c + j] = acc;
      }
    return y;
  };
  const auto q = project(wq, bq), k = project(wk, bk), v = project(wv, bv);
  std::vector<double> ctx(static_cast<std::size_t>(n) * c, 0.0);
  for (int h = 0; h < heads; ++h) {
    for (int i = 0; i < n; ++i) {
      std::vector<double> logits(n);
      for (int j = 0; j < n; ++j) {
        double acc = 0;
        for (int e = 0; e < d; ++e) acc += q[i * c + h * d + e] * k[j * c + h * d + e];
        logits[j] = acc / std::sqrt(static_cast<double>(d));
      }
      double mx = logits[0];
      for (double l : logits) mx = std::max(mx, l);
      double z = 0;
      for (double& l : logits) {
        l = std::exp(l - mx);
        z += l;
      }
      for (int j = 0; j < n; ++j)
        for (int e = 0; e < d; ++e) ctx[i * c + h * d + e] += logits[j] / z * v[j * c + h * d + e];
    }
  }
  std::vector<double> out(static_cast<std::size_t>(n) * c, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      double acc = bo[j];
      for (int l = 0; l < c; ++l) acc += ctx[i * c + l] * wo[l * c + j];
      out[i * c + j] = acc;
    }
  return out;
}

}  // namespace

TEST_CASE("window_partition counts and single-window identity") {
  WindowGrid g{56, 56, 7, 0};
  CHECK(g.num_windows() == 64);  // (56/7)^2
  CHECK(g.window_area() == 49);

  WindowGrid one{4, 4, 4, 0};
  Rng rng(3);
  auto z = random_tensor({16, 2}, rng);
  auto w = window_partition(z, one);
  REQUIRE(w.shape() == Shape{1, 16, 2});
  CHECK(w.values() == z.values());

  WindowGrid bad{6, 6, 4, 0};
  auto z36 = random_tensor({36, 2}, rng);
  CHECK_THROWS_WITH(window_partition(z36, bad), Catch::Matchers::ContainsSubstring("divisible"));
}

TEST_CASE("window partition/reverse round trip is bit exact") {
  Rng rng(4);
  WindowGrid g{8, 12, 4, 0};
  auto z = random_tensor({96, 3}, rng);
  auto back = window_reverse(window_partition(z, g), g);
  CHECK(back.values() == z.values());
  CHECK(back.shape() == z.shape());

  auto bad = Tensor<double>::zeros({5, 16, 3});
  CHECK_THROWS_WITH(window_reverse(bad, g), Catch::Matchers::ContainsSubstring("mismatch"));
}

TEST_CASE("window tiles match index arithmetic") {
  // stamp each partitioned token with its window id, reverse, and compare
  // against the tile id computed directly from coordinates
  WindowGrid g{6, 6, 3, 0};
  std::vector<double> windowed(36);
  for (int k = 0; k < 36; ++k) windowed[k] = k / 9;
  auto z = window_reverse(Tensor<double>::from_values({4, 9, 1}, windowed), g);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 6; ++c) CHECK(z.values()[r * 6 + c] == (r / 3) * 2 + (c / 3));
}

TEST_CASE("cyclic shift moves tokens on the torus and inverts") {
  WindowGrid g{4, 4, 2, 1};
  std::vector<double> v(16);
  for (int i = 0; i < 16; ++i) v[i] = i;
  auto z = Tensor<double>::from_values({16, 1}, v);
  auto s = cyclic_shift(z, g, +1);
  // token at (0,0) moves to (3,3) under direction +1
  CHECK(s.values()[15] == 0.0);
  // modular arithmetic oracle: shifted (r,c) holds original ((r+1)%4, (c+1)%4)
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      CHECK(s.values()[r * 4 + c] == double(((r + 1) % 4) * 4 + (c + 1) % 4));
  auto back = cyclic_shift(s, g, -1);
  CHECK(back.values() == z.values());

  WindowGrid noshift{4, 4, 2, 0};
  CHECK(cyclic_shift(z, noshift, +1).values() == z.values());
}

TEST_CASE("shifted mask: interior windows are unmasked") {
  WindowGrid g{8, 8, 4, 2};
  auto m = shifted_attention_mask<double>(g);
  REQUIRE(m.shape() == Shape{4, 16, 16});
  // window 0 covers rows/cols [0,4): entirely inside one region
  for (int i = 0; i < 256; ++i) CHECK(m.values()[i] == 0.0);
}

TEST_CASE("shifted mask on a single window matches region-label brute force") {
  WindowGrid g{4, 4, 4, 2};
  auto m = shifted_attention_mask<double>(g);
  REQUIRE(m.shape() == Shape{1, 16, 16});
  // with L == M the axis regions are [0, L-s) and [L-s, L): 4 region labels
  auto lbl = [&](int r, int c) { return 3 * (r < 2 ? 1 : 2) + (c < 2 ? 1 : 2); };
  int masked = 0;
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j) {
      const double want = lbl(i / 4, i % 4) == lbl(j / 4, j % 4) ? 0.0 : -100.0;
      CHECK(m.values()[i * 16 + j] == want);
      if (want != 0.0) ++masked;
    }
  CHECK(masked > 0);
  CHECK_THROWS(shifted_attention_mask<double>(WindowGrid{4, 4, 4, 0}));
}

TEST_CASE("masked attention rows still sum to one") {
  Rng rng(9);
  WindowGrid g{4, 4, 4, 2};
  auto mask = shifted_attention_mask<double>(g);
  auto logits = random_tensor({1, 2, 16, 16}, rng);
  auto probs = softmax_last(add_attn_mask(logits, mask));
  for (int r = 0; r < 2 * 16; ++r) {
    double sum = 0;
    for (int j = 0; j < 16; ++j) sum += probs.values()[r * 16 + j];
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
}

TEST_CASE("relative position index structure") {
  const int m = 4;
  auto idx = relative_position_index(m);
  std::set<std::uint32_t> distinct(idx.begin(), idx.end());
  CHECK(distinct.size() == (2 * m - 1) * (2 * m - 1));
  for (auto v : idx) CHECK(v < (2 * m - 1) * (2 * m - 1));
  // zero-displacement pairs all share one table row
  const std::uint32_t diag = idx[0];
  for (int i = 0; i < m * m; ++i) CHECK(idx[i * m * m + i] == diag);
}

TEST_CASE("window_msa single-patch and external-map cases") {
  SECTION("single patch per window: output is proj(v), map is [[1]]") {
    ParamStore<double> ps(17);
    MsaParams<double> p(ps, "m", 4, 2);
    RelativePositionBias<double> bias(ps, "m", 1, 2);
    Rng rng(18);
    auto w = random_tensor({3, 1, 4}, rng);
    auto out = window_msa(w, p, bias);
    REQUIRE(out.attention.shape() == Shape{3, 2, 1, 1});
    for (double a : out.attention.values()) CHECK(a == Catch::Approx(1.0));
    auto expect = p.proj(p.v(reshape(w, {3, 4})));
    for (std::size_t i = 0; i < expect.numel(); ++i)
      CHECK(out.tokens.values()[i] == Catch::Approx(expect.values()[i]).margin(1e-12));
  }

  SECTION("external map of zeros is the additive identity") {
    ParamStore<double> ps(20);
    MsaParams<double> p(ps, "m", 4, 2);
    RelativePositionBias<double> bias(ps, "m", 2, 2);
    Rng rng(19);
    auto w = random_tensor({2, 4, 4}, rng);
    auto base = window_msa(w, p, bias);
    auto withzero = window_msa(w, p, bias, {}, Tensor<double>::zeros({2, 2, 4, 4}));
    CHECK(base.tokens.values() == withzero.tokens.values());
    CHECK(withzero.combined.defined());
    CHECK_FALSE(base.combined.defined());
  }

  SECTION("external map shape mismatch raises a skip-transfer error") {
    ParamStore<double> ps(21);
    MsaParams<double> p(ps, "m", 4, 2);
    RelativePositionBias<double> bias(ps, "m", 2, 2);
    auto w = Tensor<double>::zeros({2, 4, 4});
    CHECK_THROWS_WITH(window_msa(w, p, bias, {}, Tensor<double>::zeros({2, 2, 4, 3})),
                      Catch::Matchers::ContainsSubstring("skip transfer"));
  }
}

TEST_CASE("zeroed q/k and zero bias give uniform attention over two patches") {
  ParamStore<double> ps(23);
  MsaParams<double> p(ps, "m", 2, 1);
  std::fill(p.q.w.values().begin(), p.q.w.values().end(), 0.0);
  std::fill(p.k.w.values().begin(), p.k.w.values().end(), 0.0);
  auto bias = zero_bias(1, 2);

  Rng rng(24);
  auto w = random_tensor({1, 2, 2}, rng);
  auto out = window_msa(w, p, bias);
  for (double a : out.attention.values()) CHECK(a == Catch::Approx(0.5));
  // output rows both equal proj of the mean of the two v rows
  auto v = p.v(reshape(w, {2, 2}));
  std::vector<double> mean = {0.5 * (v.values()[0] + v.values()[2]), 0.5 * (v.values()[1] + v.values()[3])};
  auto expect = p.proj(Tensor<double>::from_values({1, 2}, mean));
  for (int t = 0; t < 2; ++t)
    for (int c = 0; c < 2; ++c)
      CHECK(out.tokens.values()[t * 2 + c] == Catch::Approx(expect.values()[c]).margin(1e-12));
}

TEST_CASE("full-window msa matches naive full attention oracle") {
  Rng rng(31);
  for (int trial = 0; trial < 3; ++trial) {
    const int side = 3 + trial;  // whole feature map as a single window
    const int n = side * side;
    const int c = 4;
    const int heads = 2;
    ParamStore<double> ps(100 + trial);
    MsaParams<double> p(ps, "m", c, heads);
    RelativePositionBias<double> bias(ps, "m", side, heads);
    std::fill(bias.table.values().begin(), bias.table.values().end(), 0.0);

    auto z = random_tensor({n, c}, rng);
    WindowGrid g{side, side, side, 0};
    auto flat = window_reverse(window_msa(window_partition(z, g), p, bias).tokens, g);

    auto expected = naive_full_attention(z.values(), n, c, heads, p.q.w.values(), p.q.b.values(),
                                         p.k.w.values(), p.k.b.values(), p.v.w.values(),
                                         p.v.b.values(), p.proj.w.values(), p.proj.b.values());
    for (std::size_t i = 0; i < expected.size(); ++i)
      CHECK(std::abs(flat.values()[i] - expected[i]) < 1e-5);
  }
}

TEST_CASE("attention map rows are stochastic and tagged") {
  Rng rng(41);
  ParamStore<double> ps(42);
  SwinBlockPair<double> pair(ps, "blk", 4, 4, 2, 6, 2, 1);
  auto z = random_tensor({16, 6}, rng);
  auto r = pair.forward(z);
  for (const auto* map : {&r.map_w, &r.map_sw}) {
    const auto& v = map->values.values();
    const int cols = map->values.shape().back();
    for (std::size_t row = 0; row < v.size() / cols; ++row) {
      double sum = 0;
      for (int j = 0; j < cols; ++j) {
        CHECK(v[row * cols + j] >= 0.0);
        sum += v[row * cols + j];
      }
      CHECK(std::abs(sum - 1.0) < 1e-6);
    }
    CHECK(map->stage == 1);
  }
  CHECK_FALSE(r.map_w.shifted);
  CHECK(r.map_sw.shifted);
}

TEST_CASE("swin block preserves shape; zeroed projections pass through") {
  Rng rng(51);
  ParamStore<double> ps(52);
  SwinBlockPair<double> pair(ps, "blk", 4, 4, 2, 6, 2, 0);
  auto z = random_tensor({16, 6}, rng);
  CHECK(pair.forward(z).tokens.shape() == z.shape());

  for (auto* sb : {&pair.wmsa, &pair.swmsa}) {
    std::fill(sb->attn.proj.w.values().begin(), sb->attn.proj.w.values().end(), 0.0);
    std::fill(sb->attn.proj.b.values().begin(), sb->attn.proj.b.values().end(), 0.0);
    std::fill(sb->fc2.w.values().begin(), sb->fc2.w.values().end(), 0.0);
    std::fill(sb->fc2.b.values().begin(), sb->fc2.b.values().end(), 0.0);
  }
  CHECK(pair.forward(z).tokens.values() == z.values());
}

TEST_CASE("single-window grids disable the shifted path") {
  ParamStore<double> ps(53);
  SwinBlockPair<double> pair(ps, "blk", 4, 4, 4, 6, 2, 0);
  CHECK(pair.swmsa.grid.shift == 0);
  CHECK(pair.swmsa.grid.window == 4);
  // larger window than grid clamps to the grid
  ParamStore<double> ps2(54);
  SwinBlockPair<double> clamped(ps2, "blk", 2, 2, 4, 6, 2, 0);
  CHECK(clamped.wmsa.grid.window == 2);
}

TEST_CASE("gradient check through a full swin block") {
  ParamStore<double> ps(61);
  SwinBlockPair<double> pair(ps, "blk", 4, 4, 2, 8, 2, 0);
  Rng rng(62);
  auto z = random_tensor({16, 8}, rng, true, 0.5);
  auto loss = [&]() { return sum_all(gelu(pair.forward(z).tokens)); };

  auto rz = finite_diff_check(loss, z, 1e-3, 24, 7, "input");
  INFO("input max rel err " << rz.max_rel_err);
  CHECK(rz.passed());

  for (const char* name : {"blk.w.attn.q.weight", "blk.sw.attn.bias_table", "blk.w.mlp.fc1.weight",
                           "blk.sw.norm1.gamma", "blk.sw.attn.v.bias"}) {
    auto& p = ps.at(name).tensor;
    auto rep = finite_diff_check(loss, p, 1e-3, 12, 13, name);
    INFO(name << " max rel err " << rep.max_rel_err);
    CHECK(rep.passed());
  }
}
