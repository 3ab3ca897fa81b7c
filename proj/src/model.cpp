#include "hst/model.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <utility>

#include "hst/ops.hpp"
#include "hst/rng.hpp"

namespace hst {
namespace {

void check(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

std::vector<std::string> roles_for(int branches) {
  switch (branches) {
    case 1:
      return {"high"};
    case 2:
      return {"mid", "high"};
    default:
      return {"low", "mid", "high"};
  }
}

enum class Init { kZeros, kOnes, kConvUniform, kTruncNormal };

struct ParamSpec {
  std::string name;
  std::vector<int> shape;
  Init init;
};

// Every parameter the network owns, in a fixed order: extraction convs
// high -> low, then each branch's blocks low -> high, then the fusion
// stages, then the reconstruction head. Checkpoint layout, initialization
// draws, and Table-style counting all follow this order.
std::vector<ParamSpec> param_specs(const HSTConfig& cfg, const std::vector<std::string>& roles) {
  std::vector<ParamSpec> specs;
  auto conv = [&](const std::string& name, int cout, int cin, int k) {
    specs.push_back({name + ".w", {cout, cin, k, k}, Init::kConvUniform});
    specs.push_back({name + ".b", {cout}, Init::kZeros});
  };
  auto dense = [&](const std::string& name, int dout, int din) {
    specs.push_back({name + ".w", {dout, din}, Init::kTruncNormal});
    specs.push_back({name + ".b", {dout}, Init::kZeros});
  };

  int n = cfg.branches;
  conv("extract.high", cfg.channels[n - 1], cfg.in_channels, 7);
  if (n >= 2) conv("extract.mid", cfg.channels[n - 2], cfg.in_channels, 5);
  if (n == 3) conv("extract.low", cfg.channels[0], cfg.channels[1], 3);

  int table_rows = (2 * cfg.window - 1) * (2 * cfg.window - 1);
  for (int i = 0; i < n; ++i) {
    int c = cfg.channels[i];
    int hidden = cfg.mlp_hidden(c);
    for (int r = 0; r < cfg.rstbs[i]; ++r) {
      std::string rp = roles[i] + ".rstb" + std::to_string(r);
      for (int s = 0; s < cfg.stl_per_rstb; ++s) {
        std::string sp = rp + ".stl" + std::to_string(s);
        specs.push_back({sp + ".ln1.g", {c}, Init::kOnes});
        specs.push_back({sp + ".ln1.b", {c}, Init::kZeros});
        dense(sp + ".attn.qkv", 3 * c, c);
        dense(sp + ".attn.proj", c, c);
        specs.push_back({sp + ".attn.relbias", {table_rows, cfg.heads}, Init::kTruncNormal});
        specs.push_back({sp + ".ln2.g", {c}, Init::kOnes});
        specs.push_back({sp + ".ln2.b", {c}, Init::kZeros});
        dense(sp + ".mlp.fc1", hidden, c);
        dense(sp + ".mlp.fc2", c, hidden);
      }
      conv(rp + ".conv", c, c, 3);
    }
  }

  for (int i = 0; i + 1 < n; ++i) {
    std::string fp = "fuse." + roles[i] + "_to_" + roles[i + 1];
    conv(fp + ".up", 4 * cfg.channels[i], cfg.channels[i], 3);
    conv(fp + ".cat", cfg.channels[i + 1], cfg.channels[i + 1] + cfg.channels[i], 3);
  }

  int ch = cfg.channels[n - 1];
  conv("recon.up1", 4 * ch, ch, 3);
  conv("recon.up2", 4 * ch, ch, 3);
  conv("recon.last", cfg.out_channels, ch, 3);
  return specs;
}

}  // namespace

void HSTConfig::validate() const {
  check(branches >= 1 && branches <= 3,
        "config: branches must be 1..3, got " + std::to_string(branches));
  check(static_cast<int>(channels.size()) == branches,
        "config: channels has " + std::to_string(channels.size()) + " entries for " +
            std::to_string(branches) + " branches");
  check(static_cast<int>(rstbs.size()) == branches,
        "config: rstbs has " + std::to_string(rstbs.size()) + " entries for " +
            std::to_string(branches) + " branches");
  check(stl_per_rstb >= 1, "config: stl_per_rstb must be >= 1");
  check(window >= 1, "config: window must be >= 1");
  check(heads >= 1, "config: heads must be >= 1");
  check(mlp_ratio > 0.0, "config: mlp_ratio must be positive");
  check(scale == 4, "config: scale is fixed at 4");
  check(in_channels == 3 && out_channels == 3, "config: in/out channels are fixed at 3");
  for (int i = 0; i < branches; ++i) {
    check(channels[i] >= 1, "config: channels[" + std::to_string(i) + "] must be >= 1");
    check(rstbs[i] >= 1, "config: rstbs[" + std::to_string(i) + "] must be >= 1");
    check(channels[i] % heads == 0, "config: heads (" + std::to_string(heads) +
                                        ") must divide channels[" + std::to_string(i) + "] (" +
                                        std::to_string(channels[i]) + ")");
  }
}

int HSTConfig::mlp_hidden(int c) const {
  return std::max(1, static_cast<int>(std::llround(mlp_ratio * c)));
}

HSTConfig HSTConfig::preset(const std::string& name) {
  // Branch widths are sized so the presets land on the intended parameter
  // budgets (~11.90M / 12.98M / 16.58M) with the depths below.
  HSTConfig c;
  if (name == "hst1") {
    c.branches = 1;
    c.channels = {168};
    c.rstbs = {6};
  } else if (name == "hst2") {
    c.branches = 2;
    c.channels = {54, 168};
    c.rstbs = {4, 6};
  } else if (name == "hst3") {
    c.branches = 3;
    c.channels = {150, 54, 168};
    c.rstbs = {2, 4, 6};
  } else {
    throw std::invalid_argument("unknown preset '" + name + "'; expected hst1, hst2, or hst3");
  }
  return c;
}

template <class T>
TensorT<T>& ParamStoreT<T>::add(const std::string& name, TensorT<T> t) {
  if (by_name_.count(name)) throw std::logic_error("duplicate parameter name '" + name + "'");
  order_.push_back(name);
  return by_name_.emplace(name, std::move(t)).first->second;
}

template <class T>
TensorT<T>& ParamStoreT<T>::at(const std::string& name) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

template <class T>
const TensorT<T>& ParamStoreT<T>::at(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

template <class T>
long long ParamStoreT<T>::total_elements() const {
  long long total = 0;
  for (const auto& name : order_) total += static_cast<long long>(by_name_.at(name).numel());
  return total;
}

template <class T>
void ParamStoreT<T>::set_requires_grad(bool rg) {
  for (const auto& name : order_) by_name_.at(name).set_requires_grad(rg);
}

template <class T>
void ParamStoreT<T>::zero_grads() {
  for (const auto& name : order_) {
    auto& t = by_name_.at(name);
    if (t.requires_grad()) t.zero_grad();
  }
}

template <class T>
TensorT<T> attention_mask(int H, int W, int window, int shift, int batch) {
  check(window >= 1 && shift >= 1 && shift < window, "attention_mask: need 1 <= shift < window");
  check(H % window == 0 && W % window == 0 && H >= window && W >= window && batch >= 1,
        "attention_mask: H,W must be positive multiples of window");
  int M = window;
  int nh = H / M, nww = W / M, nw = nh * nww;
  int tokens = M * M;

  // Region labels on the rolled canvas: the roll wraps the last `window`
  // rows/cols around, so a window there mixes up to three source strips per
  // axis; pairs from different strips must not attend to each other.
  auto strip = [&](int v, int extent) {
    if (v < extent - M) return 0;
    if (v < extent - shift) return 1;
    return 2;
  };

  TensorT<T> mask({batch * nw, tokens, tokens}, T(0));
  T* mp = mask.data();
  std::vector<int> ids(static_cast<size_t>(tokens));
  for (int wy = 0; wy < nh; ++wy)
    for (int wx = 0; wx < nww; ++wx) {
      for (int t = 0; t < tokens; ++t) {
        int y = wy * M + t / M, x = wx * M + t % M;
        ids[static_cast<size_t>(t)] = strip(y, H) * 3 + strip(x, W);
      }
      T* base = mp + static_cast<size_t>(wy * nww + wx) * tokens * tokens;
      for (int i = 0; i < tokens; ++i)
        for (int j = 0; j < tokens; ++j)
          base[static_cast<size_t>(i) * tokens + j] =
              ids[static_cast<size_t>(i)] == ids[static_cast<size_t>(j)] ? T(0) : T(-100);
    }
  size_t per_image = static_cast<size_t>(nw) * tokens * tokens;
  for (int b = 1; b < batch; ++b) std::memcpy(mp + b * per_image, mp, per_image * sizeof(T));
  return mask;
}

template <class T>
HSTModelT<T>::HSTModelT(HSTConfig config, uint64_t seed) : cfg_(std::move(config)) {
  cfg_.validate();
  roles_ = roles_for(cfg_.branches);
  Rng rng(seed);
  for (const auto& spec : param_specs(cfg_, roles_)) {
    switch (spec.init) {
      case Init::kZeros:
        params_.add(spec.name, TensorT<T>(spec.shape, T(0)));
        break;
      case Init::kOnes:
        params_.add(spec.name, TensorT<T>(spec.shape, T(1)));
        break;
      case Init::kConvUniform: {
        TensorT<T> w(spec.shape);
        double fan_in = 1.0;
        for (size_t d = 1; d < spec.shape.size(); ++d) fan_in *= spec.shape[d];
        double bound = 1.0 / std::sqrt(fan_in);
        for (auto& v : w.values()) v = static_cast<T>(rng.uniform(-bound, bound));
        params_.add(spec.name, std::move(w));
        break;
      }
      case Init::kTruncNormal: {
        TensorT<T> w(spec.shape);
        for (auto& v : w.values()) v = static_cast<T>(rng.trunc_normal(0.02));
        params_.add(spec.name, std::move(w));
        break;
      }
    }
  }
}

template <class T>
HSTModelT<T>::HSTModelT(HSTConfig config, ParamStoreT<T> store) : cfg_(std::move(config)) {
  cfg_.validate();
  roles_ = roles_for(cfg_.branches);
  auto specs = param_specs(cfg_, roles_);
  check(store.size() == specs.size(), "param store holds " + std::to_string(store.size()) +
                                          " tensors; this config needs " +
                                          std::to_string(specs.size()));
  for (const auto& spec : specs) {
    const TensorT<T>& t = store.at(spec.name);  // throws if absent
    check(t.shape() == spec.shape, "parameter '" + spec.name + "' has shape " +
                                       shape_str(t.shape()) + ", expected " +
                                       shape_str(spec.shape));
  }
  params_ = std::move(store);
}

template <class T>
std::vector<TensorT<T>> HSTModelT<T>::extract_hierarchical(const TensorT<T>& padded) const {
  check(padded.ndim() == 4 && padded.dim(1) == cfg_.in_channels,
        "extract: expected [B," + std::to_string(cfg_.in_channels) + ",H,W], got " +
            shape_str(padded.shape()));
  check(padded.dim(2) % 4 == 0 && padded.dim(3) % 4 == 0,
        "extract: H,W must be multiples of 4, got " + shape_str(padded.shape()));
  int n = cfg_.branches;
  std::vector<TensorT<T>> feats(static_cast<size_t>(n));
  feats[static_cast<size_t>(n - 1)] =
      ops::conv2d(padded, params_.at("extract.high.w"), params_.at("extract.high.b"), 1, 3);
  if (n >= 2)
    feats[static_cast<size_t>(n - 2)] =
        ops::conv2d(padded, params_.at("extract.mid.w"), params_.at("extract.mid.b"), 2, 2);
  if (n == 3)
    feats[0] = ops::conv2d(feats[1], params_.at("extract.low.w"), params_.at("extract.low.b"), 2,
                           1);
  return feats;
}

template <class T>
TensorT<T> HSTModelT<T>::stl_forward(const TensorT<T>& x, const std::string& prefix,
                                     int shift) const {
  check(x.ndim() == 4, "stl: expected [B,H,W,C], got " + shape_str(x.shape()));
  int B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  int M = cfg_.window;
  check(H % M == 0 && W % M == 0, "stl: H,W must be multiples of the window");
  check(shift >= 0 && shift < M, "stl: shift must be in [0, window)");
  const auto& P = params_;

  TensorT<T> y = ops::layer_norm(x, P.at(prefix + ".ln1.g"), P.at(prefix + ".ln1.b"), T(1e-5));
  if (shift) y = ops::cyclic_shift(y, -shift, -shift);
  TensorT<T> wins = ops::window_partition(y, M);
  TensorT<T> tokens = wins.reshaped({wins.dim(0), M * M, C});
  TensorT<T> bias = ops::relative_bias(P.at(prefix + ".attn.relbias"), M, cfg_.heads);
  TensorT<T> attn;
  if (shift) {
    TensorT<T> mask = attention_mask<T>(H, W, M, shift, B);
    attn = ops::multi_head_attention(tokens, P.at(prefix + ".attn.qkv.w"),
                                     P.at(prefix + ".attn.qkv.b"), P.at(prefix + ".attn.proj.w"),
                                     P.at(prefix + ".attn.proj.b"), cfg_.heads, bias, &mask);
  } else {
    attn = ops::multi_head_attention(tokens, P.at(prefix + ".attn.qkv.w"),
                                     P.at(prefix + ".attn.qkv.b"), P.at(prefix + ".attn.proj.w"),
                                     P.at(prefix + ".attn.proj.b"), cfg_.heads, bias,
                                     static_cast<const TensorT<T>*>(nullptr));
  }
  TensorT<T> back = ops::window_reverse(attn.reshaped({wins.dim(0), M, M, C}), M, B, H, W);
  if (shift) back = ops::cyclic_shift(back, shift, shift);
  TensorT<T> x1 = ops::add(x, back);

  TensorT<T> m = ops::layer_norm(x1, P.at(prefix + ".ln2.g"), P.at(prefix + ".ln2.b"), T(1e-5));
  m = ops::linear(m, P.at(prefix + ".mlp.fc1.w"), P.at(prefix + ".mlp.fc1.b"));
  m = ops::gelu(m);
  m = ops::linear(m, P.at(prefix + ".mlp.fc2.w"), P.at(prefix + ".mlp.fc2.b"));
  return ops::add(x1, m);
}

template <class T>
TensorT<T> HSTModelT<T>::rstb_forward(const TensorT<T>& f, const std::string& prefix) const {
  TensorT<T> x = ops::nchw_to_nhwc(f);
  for (int s = 0; s < cfg_.stl_per_rstb; ++s)
    x = stl_forward(x, prefix + ".stl" + std::to_string(s), (s % 2) ? cfg_.window / 2 : 0);
  TensorT<T> y = ops::nhwc_to_nchw(x);
  y = ops::conv2d(y, params_.at(prefix + ".conv.w"), params_.at(prefix + ".conv.b"), 1, 1);
  return ops::add(y, f);
}

template <class T>
TensorT<T> HSTModelT<T>::fuse_into_branch(const TensorT<T>& low, const TensorT<T>& high,
                                          const std::string& prefix) const {
  check(low.ndim() == 4 && high.ndim() == 4 && high.dim(0) == low.dim(0) &&
            high.dim(2) == 2 * low.dim(2) && high.dim(3) == 2 * low.dim(3),
        "fuse: target " + shape_str(high.shape()) + " must be the x2 spatial of source " +
            shape_str(low.shape()));
  TensorT<T> up = ops::conv2d(low, params_.at(prefix + ".up.w"), params_.at(prefix + ".up.b"), 1,
                              1);
  up = ops::pixel_shuffle(up, 2);
  TensorT<T> cat = ops::concat_channels(high, up);
  return ops::conv2d(cat, params_.at(prefix + ".cat.w"), params_.at(prefix + ".cat.b"), 1, 1);
}

template <class T>
TensorT<T> HSTModelT<T>::reconstruct(const TensorT<T>& f) const {
  TensorT<T> r = ops::conv2d(f, params_.at("recon.up1.w"), params_.at("recon.up1.b"), 1, 1);
  r = ops::pixel_shuffle(r, 2);
  r = ops::conv2d(r, params_.at("recon.up2.w"), params_.at("recon.up2.b"), 1, 1);
  r = ops::pixel_shuffle(r, 2);
  return ops::conv2d(r, params_.at("recon.last.w"), params_.at("recon.last.b"), 1, 1);
}

template <class T>
TensorT<T> HSTModelT<T>::enhance(TensorT<T> f, const std::string& role, int n_rstbs) const {
  for (int r = 0; r < n_rstbs; ++r) f = rstb_forward(f, role + ".rstb" + std::to_string(r));
  return f;
}

template <class T>
TensorT<T> HSTModelT<T>::forward(const TensorT<T>& image) const {
  check(image.ndim() == 4 && image.dim(1) == cfg_.in_channels,
        "forward: expected [B," + std::to_string(cfg_.in_channels) + ",H,W], got " +
            shape_str(image.shape()));
  int H = image.dim(2), W = image.dim(3);
  int unit = 4 * cfg_.window;
  int Hp = (H + unit - 1) / unit * unit;
  int Wp = (W + unit - 1) / unit * unit;
  TensorT<T> x = (Hp == H && Wp == W) ? image : ops::pad_reflect(image, 0, Hp - H, 0, Wp - W);

  std::vector<TensorT<T>> feats = extract_hierarchical(x);
  TensorT<T> cur = enhance(feats[0], roles_[0], cfg_.rstbs[0]);
  for (int i = 1; i < cfg_.branches; ++i) {
    TensorT<T> fused = fuse_into_branch(cur, feats[static_cast<size_t>(i)],
                                        "fuse." + roles_[static_cast<size_t>(i - 1)] + "_to_" +
                                            roles_[static_cast<size_t>(i)]);
    cur = enhance(fused, roles_[static_cast<size_t>(i)], cfg_.rstbs[static_cast<size_t>(i)]);
  }
  TensorT<T> out = reconstruct(cur);
  if (Hp != H || Wp != W) out = ops::crop(out, 0, 0, cfg_.scale * H, cfg_.scale * W);
  return out;
}

template class ParamStoreT<float>;
template class ParamStoreT<double>;
template class HSTModelT<float>;
template class HSTModelT<double>;
template TensorT<float> attention_mask<float>(int, int, int, int, int);
template TensorT<double> attention_mask<double>(int, int, int, int, int);

}  // namespace hst
