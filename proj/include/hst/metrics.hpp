#pragma once

#include "hst/image.hpp"

namespace hst {

// 10·log10(255²/MSE) over every sample of both images; identical images
// return +infinity. Throws on geometry mismatch.
double psnr_rgb(const Image& a, const Image& b);

// Single-scale SSIM with an 11×11 Gaussian window (σ=1.5, K1=0.01, K2=0.03,
// L=255), evaluated at fully-inside window positions only and averaged over
// channels. Requires both extents ≥ 11.
double ssim(const Image& a, const Image& b);

}  // namespace hst
