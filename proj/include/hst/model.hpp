#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "hst/tensor.hpp"

namespace hst {

// Network configuration. Branch lists run low -> high resolution; the last
// entry is always the full-resolution branch that feeds reconstruction.
struct HSTConfig {
  int branches = 3;
  std::vector<int> channels{60, 60, 60};  // per branch, low -> high
  std::vector<int> rstbs{2, 4, 6};        // residual blocks per branch, low -> high
  int stl_per_rstb = 6;
  int window = 8;
  int heads = 6;
  double mlp_ratio = 2.0;
  int scale = 4;  // fixed x4 reconstruction
  int in_channels = 3;
  int out_channels = 3;

  void validate() const;  // throws std::invalid_argument on bad fields

  // Named presets sized to the published parameter budgets:
  // "hst1" ~11.9M, "hst2" ~12.98M, "hst3" ~16.58M.
  static HSTConfig preset(const std::string& name);

  // Hidden width of the MLP sub-block for a branch of width c.
  int mlp_hidden(int c) const;
};

// Ordered name -> tensor map. Iteration follows insertion order, which is
// fixed by the model build sequence, so checkpoints and counts are stable.
template <class T>
class ParamStoreT {
 public:
  TensorT<T>& add(const std::string& name, TensorT<T> t);
  TensorT<T>& at(const std::string& name);
  const TensorT<T>& at(const std::string& name) const;
  bool contains(const std::string& name) const { return by_name_.count(name) != 0; }
  const std::vector<std::string>& names() const { return order_; }
  size_t size() const { return order_.size(); }
  long long total_elements() const;
  void set_requires_grad(bool rg);
  void zero_grads();

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, TensorT<T>> by_name_;
};

// Additive attention mask for shifted windows: tokens that came from
// different canvas regions before the roll get -100 (softmax weight ~0).
// Returns [batch * (H/window) * (W/window), window^2, window^2] values in
// {0, -100}; never recorded on the tape.
template <class T>
TensorT<T> attention_mask(int H, int W, int window, int shift, int batch);

// The super-resolution network: hierarchical extraction, per-branch window
// attention blocks, low-to-high fusion, and x4 sub-pixel reconstruction.
template <class T>
class HSTModelT {
 public:
  // Builds and initializes all parameters; deterministic in (config, seed).
  HSTModelT(HSTConfig config, uint64_t seed);
  // Adopts an existing store (checkpoint load). The store must hold exactly
  // the names build() creates for this config, in that order.
  HSTModelT(HSTConfig config, ParamStoreT<T> store);

  const HSTConfig& config() const { return cfg_; }
  ParamStoreT<T>& params() { return params_; }
  const ParamStoreT<T>& params() const { return params_; }
  long long parameter_count() const { return params_.total_elements(); }

  // [B,3,H,W] -> [B,3,4H,4W]; pads H,W reflectively to multiples of
  // 4*window internally and crops the result back.
  TensorT<T> forward(const TensorT<T>& image) const;

  // Pipeline pieces, exposed so tests can probe them in isolation.
  // Per-branch features low -> high from an already padded image (H,W
  // multiples of 4); the low feature is derived from the mid feature.
  std::vector<TensorT<T>> extract_hierarchical(const TensorT<T>& padded) const;
  // One swin layer on an NHWC map; prefix names its parameters, e.g.
  // "high.rstb0.stl1". shift of 0 means plain windows.
  TensorT<T> stl_forward(const TensorT<T>& x, const std::string& prefix, int shift) const;
  // One residual block (STLs + 3x3 conv + skip) on an NCHW map; prefix
  // e.g. "high.rstb0".
  TensorT<T> rstb_forward(const TensorT<T>& f, const std::string& prefix) const;
  // Upsample an enhanced lower feature x2 and merge it into the next
  // branch; prefix e.g. "fuse.low_to_mid".
  TensorT<T> fuse_into_branch(const TensorT<T>& low, const TensorT<T>& high,
                              const std::string& prefix) const;
  // x4 reconstruction head: two conv+shuffle stages, then a 3x3 conv to
  // the output channels. No activations.
  TensorT<T> reconstruct(const TensorT<T>& f) const;

  // Branch role names, low -> high (subset of {"low","mid","high"}).
  const std::vector<std::string>& roles() const { return roles_; }

 private:
  TensorT<T> enhance(TensorT<T> f, const std::string& role, int n_rstbs) const;

  HSTConfig cfg_;
  std::vector<std::string> roles_;
  ParamStoreT<T> params_;
};

using ParamStore = ParamStoreT<float>;
using ParamStore64 = ParamStoreT<double>;
using HSTModel = HSTModelT<float>;
using HSTModel64 = HSTModelT<double>;

}  // namespace hst
