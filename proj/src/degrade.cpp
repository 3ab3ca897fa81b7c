#include "hst/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "hst/bicubic.hpp"
#include "hst/jpeg.hpp"

namespace hst {

namespace {

const char* stage_name(ExtraStage::Kind k) {
  switch (k) {
    case ExtraStage::Kind::kGaussianBlur: return "blur";
    case ExtraStage::Kind::kGaussianNoise: return "noise";
    case ExtraStage::Kind::kJpeg: return "jpeg";
  }
  return "?";
}

Image jpeg_round_trip(const Image& img, int quality) {
  return jpeg_decode(jpeg_encode(img, quality));
}

Image apply_stage(const Image& img, const ExtraStage& st, Rng& rng) {
  double p = rng.uniform(st.lo, st.hi);
  switch (st.kind) {
    case ExtraStage::Kind::kGaussianBlur:
      return to_bytes(gaussian_blur(to_real(img), p));
    case ExtraStage::Kind::kGaussianNoise: {
      ImageF f = to_real(img);
      for (double& v : f.samples) v += p * rng.normal();
      return to_bytes(f);
    }
    case ExtraStage::Kind::kJpeg:
      return jpeg_round_trip(img, static_cast<int>(std::lround(p)));
  }
  throw std::logic_error("degrade: unknown stage kind");
}

}  // namespace

void DegradationSpec::validate() const {
  if (scale < 1) throw std::invalid_argument("degradation: scale must be >= 1");
  if (jpeg_quality && (*jpeg_quality < 1 || *jpeg_quality > 100))
    throw std::invalid_argument("degradation: jpeg_quality must be in [1,100]");
  for (const ExtraStage& st : extra_stages) {
    if (!(st.lo <= st.hi))
      throw std::invalid_argument("degradation: extra stage has lo > hi");
    if (st.kind == ExtraStage::Kind::kJpeg && (st.lo < 1 || st.hi > 100))
      throw std::invalid_argument(
          "degradation: extra jpeg stage quality must be in [1,100]");
  }
}

std::string DegradationSpec::canonical() const {
  char buf[64];
  std::string s = "scale=" + std::to_string(scale);
  s += antialias ? " antialias=1" : " antialias=0";
  s += " jpeg=";
  s += jpeg_quality ? std::to_string(*jpeg_quality) : "none";
  s += " extra=[";
  for (size_t i = 0; i < extra_stages.size(); ++i) {
    const ExtraStage& st = extra_stages[i];
    std::snprintf(buf, sizeof buf, "%s%s(%.17g,%.17g)", i ? "," : "",
                  stage_name(st.kind), st.lo, st.hi);
    s += buf;
  }
  s += "]";
  s += shuffle_extra ? " shuffle=1" : " shuffle=0";
  return s;
}

uint64_t DegradationSpec::hash() const {
  uint64_t h = 14695981039346656037ull;
  for (char c : canonical()) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

DegradationSpec DegradationSpec::bicubic(int scale, std::optional<int> quality) {
  DegradationSpec spec;
  spec.scale = scale;
  spec.jpeg_quality = quality;
  return spec;
}

DegradationSpec DegradationSpec::realsr_lite(int scale,
                                             std::optional<int> quality) {
  DegradationSpec spec;
  spec.scale = scale;
  spec.jpeg_quality = quality;
  spec.extra_stages = {
      {ExtraStage::Kind::kGaussianBlur, 0.2, 3.0},
      {ExtraStage::Kind::kGaussianNoise, 0.0, 25.0 / 255.0},
      {ExtraStage::Kind::kJpeg, 30.0, 95.0},
  };
  spec.shuffle_extra = true;
  return spec;
}

ImageF gaussian_blur(const ImageF& img, double sigma) {
  if (sigma <= 0.0) return img;
  int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i)
    sum += k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
  for (double& w : k) w /= sum;

  ImageF tmp(img.height, img.width, img.channels);
  ImageF out(img.height, img.width, img.channels);
  // Vertical pass with replicated edges, then horizontal.
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          int yy = std::clamp(y + i, 0, img.height - 1);
          acc += k[i + radius] * img.at(yy, x, c);
        }
        tmp.at(y, x, c) = acc;
      }
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          int xx = std::clamp(x + i, 0, img.width - 1);
          acc += k[i + radius] * tmp.at(y, xx, c);
        }
        out.at(y, x, c) = acc;
      }
  return out;
}

Image degrade(const Image& hr, const DegradationSpec& spec, Rng& rng) {
  spec.validate();
  if (hr.height % spec.scale != 0 || hr.width % spec.scale != 0)
    throw std::invalid_argument(
        "degrade: image extents must be divisible by the scale factor");

  Image lr = spec.scale == 1
                 ? hr
                 : bicubic_resize(hr, hr.height / spec.scale,
                                  hr.width / spec.scale, spec.antialias);
  if (spec.jpeg_quality) lr = jpeg_round_trip(lr, *spec.jpeg_quality);

  std::vector<size_t> order(spec.extra_stages.size());
  std::iota(order.begin(), order.end(), size_t{0});
  if (spec.shuffle_extra)  // Fisher-Yates on the stage order
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.below(i)]);
  for (size_t idx : order) lr = apply_stage(lr, spec.extra_stages[idx], rng);
  return lr;
}

Image degrade(const Image& hr, const DegradationSpec& spec) {
  if (!spec.extra_stages.empty())
    throw std::invalid_argument(
        "degrade: spec has randomized extra stages; pass an rng");
  Rng unused(0);
  return degrade(hr, spec, unused);
}

}  // namespace hst
