#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "hst/model.hpp"
#include "hst/optim.hpp"

namespace hst {

/// On-disk training snapshot.
///
/// The file starts with a line-oriented text header and ends with the raw
/// little-endian tensor payload:
///
///   hstckpt 1
///   dtype f32|f64
///   config.<field> <value>       one line per network-config field
///   meta.<key> <value>           free-form run state (iteration, rng, ...)
///   tensor <name> <ndim> <d0> ... <byte_offset>
///   ...
///   end
///   <payload bytes>
///
/// Tensor rows appear in parameter-store order and offsets are relative to
/// the first byte after the "end\n" line. Optimizer moments ride along as
/// tensors named "opt.m.<param>" / "opt.v.<param>"; their presence is
/// optional so inference-only checkpoints stay lean.
template <class T>
struct CheckpointT {
  HSTConfig config;
  ParamStoreT<T> params;
  // Optimizer moments; empty stores mean the checkpoint carries none.
  ParamStoreT<T> opt_m;
  ParamStoreT<T> opt_v;
  // Stringified run state: "iter", "rng", "adam.step", stage bookkeeping.
  std::map<std::string, std::string> meta;

  long long meta_int(const std::string& key, long long fallback = 0) const;
  bool has_optimizer() const { return !opt_m.names().empty(); }
};

using Checkpoint = CheckpointT<float>;
using Checkpoint64 = CheckpointT<double>;

template <class T>
void save_checkpoint(const std::string& path, const CheckpointT<T>& ckpt);

/// Loads a checkpoint whose dtype matches T; a mismatching dtype is an error
/// naming both (checkpoints do not silently change precision).
template <class T>
CheckpointT<T> load_checkpoint(const std::string& path);

/// Reads just the dtype field ("f32" or "f64") so callers can dispatch.
std::string checkpoint_dtype(const std::string& path);

}  // namespace hst
