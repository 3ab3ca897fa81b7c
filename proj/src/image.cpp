#include "hst/image.hpp"

#include <cmath>
#include <stdexcept>

namespace hst {
namespace {

void check_geometry(int h, int w, int c) {
  if (h < 1 || w < 1 || (c != 1 && c != 3))
    throw std::invalid_argument("image: extents must be positive and channels 1 or 3 (got " +
                                std::to_string(h) + "x" + std::to_string(w) + "x" +
                                std::to_string(c) + ")");
}

template <class Img>
Img dihedral_impl(const Img& in, int k) {
  if (k < 0 || k >= 8) throw std::invalid_argument("dihedral: k must be in [0,8)");
  bool fx = k & 1, fy = k & 2, tr = k & 4;
  int oh = tr ? in.width : in.height;
  int ow = tr ? in.height : in.width;
  Img out(oh, ow, in.channels);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      int yy = fy ? oh - 1 - y : y;
      int xx = fx ? ow - 1 - x : x;
      int sy = tr ? xx : yy;
      int sx = tr ? yy : xx;
      for (int c = 0; c < in.channels; ++c) out.at(y, x, c) = in.at(sy, sx, c);
    }
  return out;
}

}  // namespace

Image::Image(int h, int w, int c, uint8_t fill)
    : height(h), width(w), channels(c) {
  check_geometry(h, w, c);
  samples.assign(static_cast<size_t>(h) * w * c, fill);
}

ImageF::ImageF(int h, int w, int c, double fill)
    : height(h), width(w), channels(c) {
  check_geometry(h, w, c);
  samples.assign(static_cast<size_t>(h) * w * c, fill);
}

uint8_t quantize_unit(double v) {
  double scaled = std::round(v * 255.0);  // rounds half away from zero
  if (scaled < 0.0) return 0;
  if (scaled > 255.0) return 255;
  return static_cast<uint8_t>(scaled);
}

ImageF to_real(const Image& img) {
  ImageF out(img.height, img.width, img.channels);
  for (size_t i = 0; i < img.samples.size(); ++i) out.samples[i] = img.samples[i] / 255.0;
  return out;
}

Image to_bytes(const ImageF& img) {
  Image out(img.height, img.width, img.channels);
  for (size_t i = 0; i < img.samples.size(); ++i) out.samples[i] = quantize_unit(img.samples[i]);
  return out;
}

Image dihedral_apply(const Image& img, int k) { return dihedral_impl(img, k); }
ImageF dihedral_apply(const ImageF& img, int k) { return dihedral_impl(img, k); }

int dihedral_inverse(int k) {
  if (k < 0 || k >= 8) throw std::invalid_argument("dihedral: k must be in [0,8)");
  if (k < 4) return k;  // flips commute and self-invert
  return 4 | ((k & 1) << 1) | ((k >> 1) & 1);
}

template <class T>
TensorT<T> tensor_from_image(const ImageF& img) {
  TensorT<T> t({1, img.channels, img.height, img.width});
  T* p = t.data();
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) *p++ = static_cast<T>(img.at(y, x, c));
  return t;
}

template <class T>
ImageF image_from_tensor(const TensorT<T>& t) {
  if (t.ndim() != 4 || t.dim(0) != 1 || (t.dim(1) != 1 && t.dim(1) != 3))
    throw std::invalid_argument("image_from_tensor: expected [1,1|3,H,W], got " +
                                shape_str(t.shape()));
  ImageF img(t.dim(2), t.dim(3), t.dim(1));
  const T* p = t.data();
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) img.at(y, x, c) = static_cast<double>(*p++);
  return img;
}

template TensorT<float> tensor_from_image<float>(const ImageF&);
template TensorT<double> tensor_from_image<double>(const ImageF&);
template ImageF image_from_tensor<float>(const TensorT<float>&);
template ImageF image_from_tensor<double>(const TensorT<double>&);

}  // namespace hst
