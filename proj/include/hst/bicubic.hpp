#pragma once

#include <vector>

#include "hst/image.hpp"

namespace hst {

// Catmull-Rom cubic (a = -0.5): 1 at x=0, 0 at integer |x| >= 1, support (-2, 2).
double bicubic_kernel(double x);

// Precomputed source taps for one axis of a separable resize. Each output
// position i draws from `taps` consecutive (clamped) source indices with
// weights renormalized to sum to 1.
struct AxisWeights {
  int taps = 0;
  std::vector<int> indices;      // out_size * taps
  std::vector<double> weights;   // out_size * taps
};

// When `antialias` is set and the axis shrinks, the kernel is stretched by the
// scale factor (support widens to 2/scale each side) so source detail is
// low-passed instead of aliased.
AxisWeights resample_axis(int in_size, int out_size, bool antialias);

ImageF bicubic_resize(const ImageF& img, int out_h, int out_w, bool antialias);

// 8-bit convenience wrapper: converts to unit-interval reals, resamples in
// 64-bit, and quantizes back only at the end.
Image bicubic_resize(const Image& img, int out_h, int out_w, bool antialias);

}  // namespace hst
