#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "hst/checkpoint.hpp"
#include "hst/dataset.hpp"
#include "hst/degrade.hpp"
#include "hst/image.hpp"
#include "hst/model.hpp"
#include "hst/optim.hpp"

namespace hst {

/// Side length of the LR training crop; HR crops are scale times larger.
inline constexpr int kLrPatch = 64;

/// One training minibatch plus the bookkeeping needed to audit it: which
/// image each pair came from, the LR-space crop origin (the HR crop sits at
/// scale times these coordinates), and the dihedral transform applied to
/// both sides of the pair.
template <class T>
struct BatchT {
  TensorT<T> lr;  // [B,3,64,64]
  TensorT<T> hr;  // [B,3,256,256] at scale 4
  struct Source {
    int image = 0;
    int lr_y = 0, lr_x = 0;
    int dihedral = 0;
  };
  std::vector<Source> sources;
};

using LogFn = std::function<void(const std::string&)>;

/// Draws stage.batch_size aligned LR/HR crop pairs. Each pair crops the HR
/// source at scale times a random LR-space origin, degrades that crop with
/// stage.degradation, and applies one of the 8 dihedral transforms to both
/// sides. Images too small for a full crop are skipped with a warning
/// through `warn`; a dataset with no usable image at all is an error. All
/// randomness comes from `rng`, so a fixed state reproduces the batch.
template <class T>
BatchT<T> sample_batch(const DatasetIndex& data, const TrainStage& stage,
                       Rng& rng, const LogFn& warn = {});

/// Knobs for run_stage that belong to the run, not to the stage recipe.
struct TrainerOptions {
  uint64_t seed = 0;              // fresh-start rng seed
  AdamConfig adam;                // betas/eps plus the clip_norm escape hatch
  long long log_every = 100;      // 0 silences periodic loss lines
  long long val_every = 0;        // 0 skips validation entirely
  long long checkpoint_every = 0; // 0 writes no intermediate checkpoints
  std::string out_dir;            // required for checkpoint/diagnostic files
  const DatasetIndex* val_set = nullptr;
  int val_limit = 5;              // fixed-subset size for periodic validation
  LogFn log;                      // metric lines; unset means stderr
};

/// Runs `stage` starting from `start`, which may be a fresh-init checkpoint,
/// a previous stage's output (weights adopted, optimizer and iteration reset),
/// or this same stage's interrupted run (resumed in place, optimizer state
/// included). Returns the finished checkpoint; with total_iters == 0 that is
/// `start` itself. A non-finite loss aborts after dumping the offending batch
/// beside the other outputs.
template <class T>
CheckpointT<T> run_stage(const TrainStage& stage, const CheckpointT<T>& start,
                         const DatasetIndex& train, const TrainerOptions& opt);

/// Fresh deterministic initialization for the first stage of a schedule.
template <class T>
CheckpointT<T> init_checkpoint(const HSTConfig& config, uint64_t seed);

/// Single forward pass on a whole image (no tape), quantized to bytes.
template <class T>
Image infer_image(const HSTModelT<T>& model, const Image& lr);

/// Real-valued single forward pass, for callers that average before
/// quantizing (the self-ensemble path).
template <class T>
ImageF infer_real(const HSTModelT<T>& model, const Image& lr);

/// Geometric self-ensemble core over any single-pass callable: run all 8
/// dihedral variants of the input, invert each output, and average in real
/// arithmetic. For a dihedral-equivariant callable this equals the plain
/// single pass.
ImageF self_ensemble_real(const std::function<ImageF(const Image&)>& single,
                          const Image& lr);

/// self_ensemble_real on the model, quantized once at the end.
template <class T>
Image self_ensemble_infer(const HSTModelT<T>& model, const Image& lr);

/// Per-image and mean scores for super-resolving `data` degraded by `spec`.
struct EvalRow {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
};
struct EvalReport {
  std::vector<EvalRow> rows;  // sorted by filename (dataset order)
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
};

/// Core evaluation over any SR callable: each HR image is cropped to a
/// multiple of spec.scale, degraded by spec (randomized stages draw from a
/// stream seeded by the spec hash, so reruns are identical), super-resolved,
/// and scored against the cropped HR.
EvalReport evaluate_with(const std::function<Image(const Image&)>& sr,
                         const DatasetIndex& data, const DegradationSpec& spec);

template <class T>
EvalReport evaluate(const HSTModelT<T>& model, const DatasetIndex& data,
                    const DegradationSpec& spec, bool ensemble);

/// Renders a report as aligned text lines plus the mean row.
std::string format_report(const EvalReport& report);

}  // namespace hst
