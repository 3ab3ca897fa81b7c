#pragma once

#include <string>
#include <vector>

#include "hst/degrade.hpp"
#include "hst/losses.hpp"
#include "hst/model.hpp"

namespace hst {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Global-norm gradient clip applied before the moment update; 0 disables
  // (the default — enable only when a run diverges).
  double clip_norm = 0.0;
};

/// Optimizer state: per-parameter first/second moment buffers keyed by the
/// parameter names, plus the shared step counter used for bias correction.
template <class T>
struct AdamStateT {
  AdamConfig config;
  long long step = 0;
  ParamStoreT<T> m;
  ParamStoreT<T> v;

  /// Zero moments shaped like `params`.
  static AdamStateT init(const ParamStoreT<T>& params, AdamConfig cfg = {});
};

using AdamState = AdamStateT<float>;
using AdamState64 = AdamStateT<double>;

/// One bias-corrected Adam update, in place, reading each parameter's grad
/// buffer. Every parameter must have an allocated gradient; a missing one is
/// an error naming the parameter. Deterministic.
template <class T>
void adam_step(ParamStoreT<T>& params, AdamStateT<T>& state, T lr);

/// One pretraining or finetuning leg of a schedule.
struct TrainStage {
  std::string name;
  DegradationSpec degradation;
  LossConfig loss;
  double lr_initial = 2e-4;
  std::vector<long long> lr_milestones;  // iterations where the lr halves
  long long total_iters = 0;
  int batch_size = 16;
  // Empty trains from scratch; otherwise the checkpoint path (or prior stage
  // name, resolved by the experiment layer) whose weights seed this stage.
  std::string init_from;

  /// Throws std::invalid_argument naming the violated constraint.
  void validate() const;
};

/// lr_initial halved once per milestone that has been reached:
/// lr_initial * 0.5^(number of milestones <= iter).
double lr_at(const TrainStage& stage, long long iter);

}  // namespace hst
