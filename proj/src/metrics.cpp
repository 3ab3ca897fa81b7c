#include "hst/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace hst {
namespace {

void require_same_geometry(const char* op, const Image& a, const Image& b) {
  if (!a.same_geometry(b))
    throw std::invalid_argument(std::string(op) + ": image geometries differ");
}

}  // namespace

double psnr_rgb(const Image& a, const Image& b) {
  require_same_geometry("psnr_rgb", a, b);
  double se = 0.0;
  for (size_t i = 0; i < a.samples.size(); ++i) {
    double d = static_cast<double>(a.samples[i]) - static_cast<double>(b.samples[i]);
    se += d * d;
  }
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  double mse = se / static_cast<double>(a.samples.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double ssim(const Image& a, const Image& b) {
  require_same_geometry("ssim", a, b);
  constexpr int kWin = 11;
  if (a.height < kWin || a.width < kWin)
    throw std::invalid_argument("ssim: both extents must be at least 11");

  // Normalized 11×11 Gaussian, σ = 1.5.
  double g1[kWin];
  double gsum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    double d = i - (kWin - 1) / 2.0;
    g1[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    gsum += g1[i];
  }
  for (int i = 0; i < kWin; ++i) g1[i] /= gsum;

  constexpr double kC1 = (0.01 * 255.0) * (0.01 * 255.0);
  constexpr double kC2 = (0.03 * 255.0) * (0.03 * 255.0);

  double channel_total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    double acc = 0.0;
    size_t count = 0;
    for (int y = 0; y + kWin <= a.height; ++y)
      for (int x = 0; x + kWin <= a.width; ++x) {
        double mu1 = 0, mu2 = 0, s11 = 0, s22 = 0, s12 = 0;
        for (int wy = 0; wy < kWin; ++wy)
          for (int wx = 0; wx < kWin; ++wx) {
            double w = g1[wy] * g1[wx];
            double va = a.at(y + wy, x + wx, c);
            double vb = b.at(y + wy, x + wx, c);
            mu1 += w * va;
            mu2 += w * vb;
            s11 += w * va * va;
            s22 += w * vb * vb;
            s12 += w * va * vb;
          }
        double var1 = s11 - mu1 * mu1;
        double var2 = s22 - mu2 * mu2;
        double cov = s12 - mu1 * mu2;
        acc += ((2.0 * mu1 * mu2 + kC1) * (2.0 * cov + kC2)) /
               ((mu1 * mu1 + mu2 * mu2 + kC1) * (var1 + var2 + kC2));
        ++count;
      }
    channel_total += acc / static_cast<double>(count);
  }
  return channel_total / a.channels;
}

}  // namespace hst
