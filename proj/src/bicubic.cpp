#include "hst/bicubic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hst {

double bicubic_kernel(double x) {
  x = std::abs(x);
  if (x <= 1.0) return (1.5 * x - 2.5) * x * x + 1.0;
  if (x <= 2.0) return ((-0.5 * x + 2.5) * x - 4.0) * x + 2.0;
  return 0.0;
}

AxisWeights resample_axis(int in_size, int out_size, bool antialias) {
  if (in_size < 1 || out_size < 1)
    throw std::invalid_argument("resample_axis: extents must be positive");
  double scale = static_cast<double>(out_size) / in_size;
  // Stretch the kernel only when shrinking with antialias requested.
  double kscale = (antialias && scale < 1.0) ? scale : 1.0;
  int radius = static_cast<int>(std::ceil(2.0 / kscale));

  AxisWeights aw;
  aw.taps = 2 * radius;
  aw.indices.resize(static_cast<size_t>(out_size) * aw.taps);
  aw.weights.resize(static_cast<size_t>(out_size) * aw.taps);
  for (int i = 0; i < out_size; ++i) {
    // Center of output pixel i mapped into source coordinates.
    double u = (i + 0.5) / scale - 0.5;
    int left = static_cast<int>(std::floor(u)) - radius + 1;
    double sum = 0.0;
    for (int t = 0; t < aw.taps; ++t) {
      double w = kscale * bicubic_kernel(kscale * (u - (left + t)));
      aw.weights[static_cast<size_t>(i) * aw.taps + t] = w;
      aw.indices[static_cast<size_t>(i) * aw.taps + t] =
          std::clamp(left + t, 0, in_size - 1);
      sum += w;
    }
    for (int t = 0; t < aw.taps; ++t)
      aw.weights[static_cast<size_t>(i) * aw.taps + t] /= sum;
  }
  return aw;
}

ImageF bicubic_resize(const ImageF& img, int out_h, int out_w, bool antialias) {
  if (out_h < 1 || out_w < 1)
    throw std::invalid_argument("bicubic_resize: output extents must be positive");
  AxisWeights wy = resample_axis(img.height, out_h, antialias);
  AxisWeights wx = resample_axis(img.width, out_w, antialias);
  int c = img.channels;

  // Vertical pass, then horizontal; weights are per-axis so the order is
  // immaterial to the result up to rounding.
  ImageF mid(out_h, img.width, c);
  for (int y = 0; y < out_h; ++y) {
    const int* idx = &wy.indices[static_cast<size_t>(y) * wy.taps];
    const double* w = &wy.weights[static_cast<size_t>(y) * wy.taps];
    for (int x = 0; x < img.width; ++x)
      for (int k = 0; k < c; ++k) {
        double acc = 0.0;
        for (int t = 0; t < wy.taps; ++t) acc += w[t] * img.at(idx[t], x, k);
        mid.at(y, x, k) = acc;
      }
  }
  ImageF out(out_h, out_w, c);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      const int* idx = &wx.indices[static_cast<size_t>(x) * wx.taps];
      const double* w = &wx.weights[static_cast<size_t>(x) * wx.taps];
      for (int k = 0; k < c; ++k) {
        double acc = 0.0;
        for (int t = 0; t < wx.taps; ++t) acc += w[t] * mid.at(y, idx[t], k);
        out.at(y, x, k) = acc;
      }
    }
  return out;
}

Image bicubic_resize(const Image& img, int out_h, int out_w, bool antialias) {
  return to_bytes(bicubic_resize(to_real(img), out_h, out_w, antialias));
}

}  // namespace hst
