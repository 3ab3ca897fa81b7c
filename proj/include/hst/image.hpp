#pragma once

#include <cstdint>
#include <vector>

#include "hst/tensor.hpp"

namespace hst {

// 8-bit image, interleaved row-major: samples[(y*width + x)*channels + c].
struct Image {
  int height = 0, width = 0, channels = 0;
  std::vector<uint8_t> samples;

  Image() = default;
  Image(int h, int w, int c, uint8_t fill = 0);

  uint8_t& at(int y, int x, int c) {
    return samples[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  uint8_t at(int y, int x, int c) const {
    return samples[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  bool same_geometry(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
};

// Double-precision working image on the unit interval, same layout. All
// processing (resampling, filtering, averaging) happens here; bytes are
// materialized exactly once at the end.
struct ImageF {
  int height = 0, width = 0, channels = 0;
  std::vector<double> samples;

  ImageF() = default;
  ImageF(int h, int w, int c, double fill = 0.0);

  double& at(int y, int x, int c) {
    return samples[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return samples[(static_cast<size_t>(y) * width + x) * channels + c];
  }
};

// Bytes map to [0,1] by /255; reals map back by x255 with clamping and
// round-half-away-from-zero.
ImageF to_real(const Image& img);
Image to_bytes(const ImageF& img);
uint8_t quantize_unit(double v);

// Dihedral transforms, k in [0,8): bit 2 transposes, bit 1 flips vertically,
// bit 0 flips horizontally (flips act after the transpose). k=0 is identity.
Image dihedral_apply(const Image& img, int k);
ImageF dihedral_apply(const ImageF& img, int k);
// The k' with apply(k', apply(k, img)) == img.
int dihedral_inverse(int k);

// [1,C,H,W] tensor with values straight from the unit-interval image.
template <class T>
TensorT<T> tensor_from_image(const ImageF& img);
template <class T>
ImageF image_from_tensor(const TensorT<T>& t);

}  // namespace hst
