#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hst/image.hpp"
#include "hst/rng.hpp"

namespace hst {

/// One optional corruption applied after the core bicubic/JPEG pipeline. The
/// parameter is drawn uniformly from [lo, hi] each time the stage runs, so a
/// single spec covers a distribution of degradations rather than one fixed
/// operator.
struct ExtraStage {
  enum class Kind { kGaussianBlur, kGaussianNoise, kJpeg };

  Kind kind;
  double lo = 0.0;  // blur: sigma in pixels; noise: sigma on [0,1] scale;
  double hi = 0.0;  // jpeg: quality (rounded to int when sampled)
};

/// Recipe for producing a LR training input from a HR image: antialiased
/// bicubic downscale by `scale`, an optional JPEG round trip at fixed quality,
/// then any extra stages. `shuffle_extra` applies the extra stages in a fresh
/// random order per image instead of list order.
struct DegradationSpec {
  int scale = 4;
  bool antialias = true;
  std::optional<int> jpeg_quality;
  std::vector<ExtraStage> extra_stages;
  bool shuffle_extra = false;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  /// Canonical one-line description; equal specs produce equal strings, and
  /// any parameter change alters it. Used for manifests and hashing.
  std::string canonical() const;

  /// FNV-1a 64-bit hash of canonical(), printed into degradation manifests so
  /// reruns with the same recipe are recognizable.
  uint64_t hash() const;

  /// Plain pipeline: bicubic /scale, then JPEG at `quality` when given.
  static DegradationSpec bicubic(int scale, std::optional<int> quality = {});

  /// Harder stand-in for real-world corruption: blur sigma [0.2,3], additive
  /// noise sigma [0,25/255], JPEG quality [30,95], applied in random order.
  static DegradationSpec realsr_lite(int scale, std::optional<int> quality = {});
};

/// Applies `spec` to a HR image whose extents are divisible by spec.scale.
/// Deterministic overload for specs without extra stages.
Image degrade(const Image& hr, const DegradationSpec& spec);

/// Full pipeline; `rng` drives extra-stage parameters and ordering. Specs
/// without extra stages never draw from `rng`.
Image degrade(const Image& hr, const DegradationSpec& spec, Rng& rng);

/// Gaussian blur with kernel radius ceil(3 sigma) and replicated edges.
/// sigma <= 0 returns the input unchanged.
ImageF gaussian_blur(const ImageF& img, double sigma);

}  // namespace hst
