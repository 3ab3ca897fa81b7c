#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "hst/gradcheck.hpp"
#include "hst/model.hpp"
#include "hst/ops.hpp"
#include "hst/ref_kernels.hpp"
#include "hst/rng.hpp"
#include "support/test_util.hpp"

using namespace hst;
using hsttest::bitwise_equal;
using hsttest::max_mixed_err;
using hsttest::rand_tensor;

namespace {

// Small three-branch network used throughout: fast enough for property
// tests while still covering fusion and both shift phases.
HSTConfig tiny_config() {
  HSTConfig cfg;
  cfg.branches = 3;
  cfg.channels = {8, 8, 8};
  cfg.rstbs = {1, 1, 1};
  cfg.stl_per_rstb = 2;
  cfg.window = 4;
  cfg.heads = 2;
  return cfg;
}

void fill_zero(Tensor& t) {
  for (auto& v : t.values()) v = 0.0f;
}

}  // namespace

TEST_CASE("config validation rejects bad fields") {
  CHECK_NOTHROW(tiny_config().validate());
  CHECK_NOTHROW(HSTConfig{}.validate());

  HSTConfig c = tiny_config();
  c.branches = 4;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);

  c = tiny_config();
  c.channels = {8, 8};  // wrong length for 3 branches
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);

  c = tiny_config();
  c.rstbs = {1, 1, 1, 1};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);

  c = tiny_config();
  c.heads = 3;  // does not divide 8
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);

  c = tiny_config();
  c.scale = 2;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);

  c = tiny_config();
  c.in_channels = 1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);

  c = tiny_config();
  c.mlp_ratio = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);

  CHECK_THROWS_AS(HSTConfig::preset("hst4"), std::invalid_argument);
}

TEST_CASE("presets land on their parameter budgets") {
  const struct {
    const char* name;
    long long exact;
    double target;
  } rows[] = {
      {"hst1", 11831619, 11.90e6},
      {"hst2", 12988467, 12.98e6},
      {"hst3", 16572615, 16.58e6},
  };
  for (const auto& row : rows) {
    CAPTURE(row.name);
    HSTModel m(HSTConfig::preset(row.name), 1);
    long long n = m.parameter_count();
    CHECK(n == row.exact);
    CHECK(std::fabs(n - row.target) / row.target <= 0.05);
  }
}

TEST_CASE("param store keeps order, rejects duplicates, counts elements") {
  ParamStore store;
  store.add("conv.w", Tensor({60, 60, 3, 3}));
  store.add("conv.b", Tensor({60}));
  CHECK(store.total_elements() == 32460);
  CHECK(store.names() == std::vector<std::string>{"conv.w", "conv.b"});
  CHECK(store.contains("conv.w"));
  CHECK_FALSE(store.contains("conv.W"));
  CHECK_THROWS_AS(store.add("conv.w", Tensor({1})), std::logic_error);
  CHECK_THROWS_AS(store.at("missing"), std::out_of_range);
  CHECK(ParamStore().total_elements() == 0);
}

TEST_CASE("build is deterministic in the seed") {
  HSTModel a(tiny_config(), 7), b(tiny_config(), 7), c(tiny_config(), 8);
  REQUIRE(a.params().names() == b.params().names());
  bool all_equal = true, any_diff_seed = false;
  for (const auto& name : a.params().names()) {
    if (!bitwise_equal(a.params().at(name), b.params().at(name))) all_equal = false;
    if (!bitwise_equal(a.params().at(name), c.params().at(name))) any_diff_seed = true;
  }
  CHECK(all_equal);
  CHECK(any_diff_seed);
}

TEST_CASE("store adoption validates names and shapes") {
  HSTModel built(tiny_config(), 3);
  Rng rng(11);
  Tensor x = rand_tensor<float>(rng, {1, 3, 8, 8}, 0.0f, 1.0f);
  Tensor want = built.forward(x);

  // Rebuild a store with the same contents and adopt it.
  ParamStore copy;
  for (const auto& name : built.params().names()) copy.add(name, built.params().at(name).clone());
  HSTModel adopted(tiny_config(), std::move(copy));
  CHECK(bitwise_equal(adopted.forward(x), want));

  // Missing / extra / misshapen stores are rejected.
  ParamStore missing;
  for (const auto& name : built.params().names())
    if (name != "recon.last.b") missing.add(name, built.params().at(name).clone());
  CHECK_THROWS(HSTModel(tiny_config(), std::move(missing)));

  ParamStore extra;
  for (const auto& name : built.params().names()) extra.add(name, built.params().at(name).clone());
  extra.add("stray", Tensor({1}));
  CHECK_THROWS(HSTModel(tiny_config(), std::move(extra)));

  ParamStore misshapen;
  for (const auto& name : built.params().names())
    misshapen.add(name, name == "recon.last.b" ? Tensor({5}) : built.params().at(name).clone());
  CHECK_THROWS_AS(HSTModel(tiny_config(), std::move(misshapen)), std::invalid_argument);
}

TEST_CASE("extraction produces the three scales") {
  HSTModel m(tiny_config(), 5);
  Rng rng(21);
  Tensor x = rand_tensor<float>(rng, {2, 3, 64, 64}, 0.0f, 1.0f);
  auto feats = m.extract_hierarchical(x);
  REQUIRE(feats.size() == 3);
  CHECK(feats[2].shape() == std::vector<int>{2, 8, 64, 64});
  CHECK(feats[1].shape() == std::vector<int>{2, 8, 32, 32});
  CHECK(feats[0].shape() == std::vector<int>{2, 8, 16, 16});

  // Zero input, zero biases (the default init): linear maps give zero out.
  Tensor zero({1, 3, 8, 8}, 0.0f);
  for (const auto& f : m.extract_hierarchical(zero)) {
    bool all_zero = true;
    for (float v : f.values()) all_zero &= v == 0.0f;
    CHECK(all_zero);
  }

  CHECK_THROWS_AS(m.extract_hierarchical(Tensor({1, 1, 8, 8})), std::invalid_argument);
  CHECK_THROWS_AS(m.extract_hierarchical(Tensor({1, 3, 6, 8})), std::invalid_argument);
}

TEST_CASE("extraction matches the serial conv reference") {
  HSTModel m(tiny_config(), 9);
  Rng rng(31);
  Tensor x = rand_tensor<float>(rng, {1, 3, 8, 8}, -1.0f, 1.0f);
  auto feats = m.extract_hierarchical(x);

  auto ref_conv = [&](const Tensor& in, const std::string& name, int stride, int pad, int k,
                      int cout, int oh, int ow) {
    Tensor out({in.dim(0), cout, oh, ow});
    ref::conv2d(in.data(), m.params().at(name + ".w").data(), m.params().at(name + ".b").data(),
                out.data(), in.dim(0), in.dim(1), in.dim(2), in.dim(3), cout, k, stride, pad, oh,
                ow);
    return out;
  };
  Tensor high = ref_conv(x, "extract.high", 1, 3, 7, 8, 8, 8);
  Tensor mid = ref_conv(x, "extract.mid", 2, 2, 5, 8, 4, 4);
  Tensor low = ref_conv(mid, "extract.low", 2, 1, 3, 8, 2, 2);
  CHECK(max_mixed_err(feats[2], high) < 1e-5);
  CHECK(max_mixed_err(feats[1], mid) < 1e-5);
  CHECK(max_mixed_err(feats[0], low) < 1e-5);
}

TEST_CASE("attention mask separates wrapped regions") {
  // 8x8 map, window 4, shift 2: four windows. The top-left window has one
  // source region; the right/bottom edge windows mix strips that wrapped
  // around during the roll.
  Tensor mask = attention_mask<float>(8, 8, 4, 2, 1);
  REQUIRE(mask.shape() == std::vector<int>{4, 16, 16});
  auto zeros_in_window = [&](int w) {
    int count = 0;
    for (int i = 0; i < 16; ++i)
      for (int j = 0; j < 16; ++j)
        if (mask.at({w, i, j}) == 0.0f) ++count;
    return count;
  };
  CHECK(zeros_in_window(0) == 256);  // interior: everything attends
  CHECK(zeros_in_window(1) == 128);  // two vertical strips of 8 tokens
  CHECK(zeros_in_window(2) == 128);  // two horizontal strips
  CHECK(zeros_in_window(3) == 64);   // four 2x2-block regions of 4 tokens

  for (int w = 0; w < 4; ++w)
    for (int i = 0; i < 16; ++i) {
      CHECK(mask.at({w, i, i}) == 0.0f);
      for (int j = 0; j < 16; ++j) {
        float v = mask.at({w, i, j});
        CHECK((v == 0.0f || v == -100.0f));
        CHECK(v == mask.at({w, j, i}));
      }
    }

  // Batch tiling repeats the per-image block.
  Tensor tiled = attention_mask<float>(8, 8, 4, 2, 3);
  REQUIRE(tiled.dim(0) == 12);
  for (int w = 0; w < 4; ++w)
    for (int i = 0; i < 16; ++i)
      for (int j = 0; j < 16; ++j) {
        CHECK(tiled.at({w + 4, i, j}) == mask.at({w, i, j}));
        CHECK(tiled.at({w + 8, i, j}) == mask.at({w, i, j}));
      }

  CHECK_THROWS_AS(attention_mask<float>(8, 8, 4, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(attention_mask<float>(9, 8, 4, 2, 1), std::invalid_argument);
}

TEST_CASE("stl is the identity when attention and mlp vanish") {
  HSTModel m(tiny_config(), 13);
  for (const char* name :
       {"high.rstb0.stl0.attn.qkv.w", "high.rstb0.stl0.attn.qkv.b", "high.rstb0.stl0.attn.proj.w",
        "high.rstb0.stl0.attn.proj.b", "high.rstb0.stl0.attn.relbias", "high.rstb0.stl0.mlp.fc1.w",
        "high.rstb0.stl0.mlp.fc1.b", "high.rstb0.stl0.mlp.fc2.w", "high.rstb0.stl0.mlp.fc2.b"})
    fill_zero(m.params().at(name));
  Rng rng(41);
  Tensor x = rand_tensor<float>(rng, {2, 8, 8, 8}, -1.0f, 1.0f);
  CHECK(bitwise_equal(m.stl_forward(x, "high.rstb0.stl0", 0), x));
  CHECK(bitwise_equal(m.stl_forward(x, "high.rstb0.stl0", 2), x));
}

TEST_CASE("stl matches a straight-line composition") {
  HSTModel m(tiny_config(), 17);
  const auto& P = m.params();
  Rng rng(43);
  const std::string pre = "mid.rstb0.stl1";
  const int M = 4, C = 8, heads = 2;

  for (int shift : {0, 2}) {
    CAPTURE(shift);
    Tensor x = rand_tensor<float>(rng, {2, 8, 8, C}, -1.0f, 1.0f);
    Tensor y = ops::layer_norm(x, P.at(pre + ".ln1.g"), P.at(pre + ".ln1.b"), 1e-5f);
    if (shift) y = ops::cyclic_shift(y, -shift, -shift);
    Tensor wins = ops::window_partition(y, M);
    Tensor tokens = wins.reshaped({wins.dim(0), M * M, C});
    Tensor bias = ops::relative_bias(P.at(pre + ".attn.relbias"), M, heads);
    Tensor attn;
    if (shift) {
      Tensor mask = attention_mask<float>(8, 8, M, shift, 2);
      attn = ops::multi_head_attention(tokens, P.at(pre + ".attn.qkv.w"), P.at(pre + ".attn.qkv.b"),
                                       P.at(pre + ".attn.proj.w"), P.at(pre + ".attn.proj.b"),
                                       heads, bias, &mask);
    } else {
      attn = ops::multi_head_attention(tokens, P.at(pre + ".attn.qkv.w"), P.at(pre + ".attn.qkv.b"),
                                       P.at(pre + ".attn.proj.w"), P.at(pre + ".attn.proj.b"),
                                       heads, bias, static_cast<const Tensor*>(nullptr));
    }
    Tensor back = ops::window_reverse(attn.reshaped({wins.dim(0), M, M, C}), M, 2, 8, 8);
    if (shift) back = ops::cyclic_shift(back, shift, shift);
    Tensor x1 = ops::add(x, back);
    Tensor h = ops::layer_norm(x1, P.at(pre + ".ln2.g"), P.at(pre + ".ln2.b"), 1e-5f);
    h = ops::linear(h, P.at(pre + ".mlp.fc1.w"), P.at(pre + ".mlp.fc1.b"));
    h = ops::gelu(h);
    h = ops::linear(h, P.at(pre + ".mlp.fc2.w"), P.at(pre + ".mlp.fc2.b"));
    Tensor want = ops::add(x1, h);

    CHECK(bitwise_equal(m.stl_forward(x, pre, shift), want));
  }
}

TEST_CASE("rstb reduces to its skip as the conv vanishes") {
  HSTConfig cfg = tiny_config();
  HSTModel m(cfg, 19);
  // Silence both STLs so the block is conv(x) + x.
  for (int s : {0, 1})
    for (const char* leaf : {".attn.qkv.w", ".attn.qkv.b", ".attn.proj.w", ".attn.proj.b",
                             ".attn.relbias", ".mlp.fc1.w", ".mlp.fc1.b", ".mlp.fc2.w",
                             ".mlp.fc2.b"})
      fill_zero(m.params().at("low.rstb0.stl" + std::to_string(s) + leaf));

  Rng rng(47);
  Tensor x = rand_tensor<float>(rng, {1, 8, 4, 4}, -1.0f, 1.0f);
  Tensor& w = m.params().at("low.rstb0.conv.w");
  Tensor w0 = w.clone();

  Tensor full = m.rstb_forward(x, "low.rstb0");
  float dist1 = max_mixed_err(full, x);

  for (size_t i = 0; i < w.numel(); ++i) w.data()[i] = 0.5f * w0.data()[i];
  float dist_half = max_mixed_err(m.rstb_forward(x, "low.rstb0"), x);
  CHECK(dist_half < dist1);
  CHECK(dist_half > 0.0f);

  fill_zero(w);
  CHECK(bitwise_equal(m.rstb_forward(x, "low.rstb0"), x));  // pure skip
}

TEST_CASE("rstb matches manual composition") {
  HSTConfig cfg = tiny_config();
  cfg.stl_per_rstb = 1;
  HSTModel m(cfg, 23);
  Rng rng(53);
  Tensor x = rand_tensor<float>(rng, {1, 8, 8, 8}, -1.0f, 1.0f);  // NCHW

  Tensor t = ops::nchw_to_nhwc(x);
  t = m.stl_forward(t, "high.rstb0.stl0", 0);
  t = ops::nhwc_to_nchw(t);
  t = ops::conv2d(t, m.params().at("high.rstb0.conv.w"), m.params().at("high.rstb0.conv.b"), 1, 1);
  Tensor want = ops::add(t, x);
  CHECK(bitwise_equal(m.rstb_forward(x, "high.rstb0"), want));
  CHECK(m.rstb_forward(x, "high.rstb0").shape() == x.shape());
}

TEST_CASE("fusion upsamples, concatenates, and fuses") {
  HSTModel m(tiny_config(), 29);
  Rng rng(59);
  Tensor low = rand_tensor<float>(rng, {1, 8, 4, 4}, -1.0f, 1.0f);
  Tensor high = rand_tensor<float>(rng, {1, 8, 8, 8}, -1.0f, 1.0f);

  Tensor up = ops::conv2d(low, m.params().at("fuse.low_to_mid.up.w"),
                          m.params().at("fuse.low_to_mid.up.b"), 1, 1);
  up = ops::pixel_shuffle(up, 2);
  CHECK(up.shape() == std::vector<int>{1, 8, 8, 8});
  Tensor cat = ops::concat_channels(high, up);
  CHECK(cat.dim(1) == 16);  // 2C after concatenation
  Tensor want = ops::conv2d(cat, m.params().at("fuse.low_to_mid.cat.w"),
                            m.params().at("fuse.low_to_mid.cat.b"), 1, 1);
  CHECK(bitwise_equal(m.fuse_into_branch(low, high, "fuse.low_to_mid"), want));

  // Zero fusion conv + bias beta: the output is the constant beta.
  fill_zero(m.params().at("fuse.low_to_mid.cat.w"));
  Tensor& beta = m.params().at("fuse.low_to_mid.cat.b");
  for (size_t i = 0; i < beta.numel(); ++i) beta.data()[i] = 0.25f * (1 + static_cast<int>(i));
  Tensor fused = m.fuse_into_branch(low, high, "fuse.low_to_mid");
  for (int c = 0; c < 8; ++c)
    for (int y = 0; y < 8; ++y)
      for (int xx = 0; xx < 8; ++xx) CHECK(fused.at({0, c, y, xx}) == 0.25f * (c + 1));

  CHECK_THROWS_AS(m.fuse_into_branch(low, Tensor({1, 8, 9, 8}), "fuse.low_to_mid"),
                  std::invalid_argument);
}

TEST_CASE("forward meets the shape contract") {
  HSTModel m(tiny_config(), 31);
  Rng rng(61);

  Tensor a = rand_tensor<float>(rng, {1, 3, 8, 8}, 0.0f, 1.0f);
  CHECK(m.forward(a).shape() == std::vector<int>{1, 3, 32, 32});

  Tensor ragged = rand_tensor<float>(rng, {1, 3, 17, 13}, 0.0f, 1.0f);
  CHECK(m.forward(ragged).shape() == std::vector<int>{1, 3, 68, 52});

  Tensor batch = rand_tensor<float>(rng, {2, 3, 8, 8}, 0.0f, 1.0f);
  Tensor out = m.forward(batch);
  CHECK(out.shape() == std::vector<int>{2, 3, 32, 32});

  // Batch entries do not bleed into each other: running image 0 alone
  // matches row 0 of the batched run.
  Tensor solo({1, 3, 8, 8});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) solo.at({0, c, y, x}) = batch.at({0, c, y, x});
  Tensor solo_out = m.forward(solo);
  float worst = 0.0f;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        worst = std::max(worst,
                         std::fabs(solo_out.at({0, c, y, x}) - out.at({0, c, y, x})));
  CHECK(worst == 0.0f);

  CHECK_THROWS_AS(m.forward(Tensor({1, 4, 8, 8})), std::invalid_argument);
  CHECK_THROWS_AS(m.forward(Tensor({3, 8, 8})), std::invalid_argument);
}

TEST_CASE("single-branch forward equals the high-branch pipeline") {
  HSTConfig cfg = tiny_config();
  cfg.branches = 1;
  cfg.channels = {8};
  cfg.rstbs = {1};
  HSTModel m(cfg, 37);
  Rng rng(67);
  Tensor x = rand_tensor<float>(rng, {1, 3, 8, 8}, 0.0f, 1.0f);

  Tensor padded = ops::pad_reflect(x, 0, 8, 0, 8);
  Tensor f = ops::conv2d(padded, m.params().at("extract.high.w"), m.params().at("extract.high.b"),
                         1, 3);
  f = m.rstb_forward(f, "high.rstb0");
  Tensor want = ops::crop(m.reconstruct(f), 0, 0, 32, 32);
  CHECK(bitwise_equal(m.forward(x), want));

  CHECK_FALSE(m.params().contains("extract.mid.w"));
  CHECK_FALSE(m.params().contains("fuse.mid_to_high.up.w"));
  CHECK(m.roles() == std::vector<std::string>{"high"});
}

TEST_CASE("two-branch model skips the low branch only") {
  HSTConfig cfg = tiny_config();
  cfg.branches = 2;
  cfg.channels = {8, 8};
  cfg.rstbs = {1, 1};
  HSTModel m(cfg, 41);
  CHECK(m.roles() == std::vector<std::string>{"mid", "high"});
  CHECK(m.params().contains("extract.mid.w"));
  CHECK(m.params().contains("fuse.mid_to_high.cat.w"));
  CHECK_FALSE(m.params().contains("extract.low.w"));
  CHECK_FALSE(m.params().contains("fuse.low_to_mid.up.w"));
  Rng rng(71);
  Tensor x = rand_tensor<float>(rng, {1, 3, 8, 8}, 0.0f, 1.0f);
  CHECK(m.forward(x).shape() == std::vector<int>{1, 3, 32, 32});
}

TEST_CASE("zero parameters give exactly zero output") {
  HSTModel m(tiny_config(), 43);
  for (const auto& name : m.params().names()) fill_zero(m.params().at(name));
  Rng rng(73);
  Tensor x = rand_tensor<float>(rng, {1, 3, 8, 8}, 0.0f, 1.0f);
  Tensor out = m.forward(x);
  bool all_zero = true;
  for (float v : out.values()) all_zero &= v == 0.0f;
  CHECK(all_zero);
}

TEST_CASE("every parameter receives gradient") {
  HSTModel64 m(tiny_config(), 47);
  m.params().set_requires_grad(true);
  m.params().zero_grads();
  Rng rng(79);
  Tensor64 x = rand_tensor<double>(rng, {1, 3, 8, 8}, 0.0, 1.0);
  Tensor64 target = rand_tensor<double>(rng, {1, 3, 32, 32}, 0.0, 1.0);

  Graph64 g;
  Tensor64 loss;
  {
    Graph64::Scope scope(g);
    loss = ops::charbonnier_loss(m.forward(x), target, 1e-9);
  }
  g.backward(loss);

  for (const auto& name : m.params().names()) {
    CAPTURE(name);
    auto& t = m.params().at(name);
    bool any = false;
    for (size_t i = 0; i < t.numel(); ++i) any |= t.grad()[i] != 0.0;
    CHECK(any);
  }
}

TEST_CASE("reduced model passes the finite-difference check") {
  auto r = model_gradcheck(1234, /*stride=*/7);
  CAPTURE(r.worst_param);
  CAPTURE(r.worst_index);
  CAPTURE(r.worst_analytic);
  CAPTURE(r.worst_numeric);
  CHECK(r.elements_checked > 2500);
  CHECK(r.max_rel_err <= kGradCheckTol);
}
