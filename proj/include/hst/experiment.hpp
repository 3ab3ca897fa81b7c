#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hst/model.hpp"
#include "hst/optim.hpp"
#include "hst/trainer.hpp"

namespace hst {

/// Version string stamped into provenance records beside run outputs.
inline constexpr const char* kToolVersion = "hstkit 0.1.0";

/// A whole experiment, loaded from a flat key-value config file with
/// [section] headers:
///
///   [model]            preset and/or explicit field overrides
///   [data]             train/val/test dataset roots
///   [run]              seed, out_dir, precision, cadence knobs
///   [stage <name>]     one TrainStage per section, run in file order
///
/// Lines are "key value" pairs; '#' starts a comment. Unknown keys are
/// errors so snapshots stay diffable against what the tool actually read.
struct ExperimentConfig {
  HSTConfig model;
  std::string preset;  // preset name when one seeded `model`, else empty

  std::string train_dir, val_dir, test_dir;

  uint64_t seed = 0;
  std::string out_dir;
  std::string precision = "f32";  // "f32" trains, "f64" verifies
  long long log_every = 100;
  long long val_every = 0;
  long long checkpoint_every = 0;
  int val_limit = 5;
  double clip_norm = 0.0;

  std::vector<TrainStage> stages;

  /// Parses and validates: referenced dataset paths must exist, stage names
  /// must be unique, init_from must name an earlier stage or "none".
  /// Errors read "config: <path>: line N: <what>".
  static ExperimentConfig load(const std::string& path);

  /// Normalized snapshot of everything load() accepted; written beside run
  /// outputs so runs are reproducible from their provenance alone.
  std::string canonical() const;

  /// TrainerOptions view of the [run] section (val_set/log left unset).
  TrainerOptions trainer_options() const;
};

/// Writes canonical() plus the tool version to <dir>/provenance.txt.
void write_provenance(const std::string& dir, const ExperimentConfig& config);

}  // namespace hst
