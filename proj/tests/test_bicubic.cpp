#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "hst/bicubic.hpp"
#include "hst/image.hpp"
#include "hst/rng.hpp"

using namespace hst;

namespace {

ImageF rand_imagef(Rng& rng, int h, int w, int c) {
  ImageF img(h, w, c);
  for (auto& s : img.samples) s = rng.uniform(0.0, 1.0);
  return img;
}

// Independent re-derivation: textbook a=-0.5 piecewise cubic evaluated with
// pow, direct (non-separated) 2-D weighted sum, product normalization.
double oracle_kernel(double x) {
  double ax = std::abs(x);
  const double a = -0.5;
  if (ax <= 1.0) return (a + 2.0) * std::pow(ax, 3) - (a + 3.0) * std::pow(ax, 2) + 1.0;
  if (ax <= 2.0)
    return a * std::pow(ax, 3) - 5.0 * a * std::pow(ax, 2) + 8.0 * a * ax - 4.0 * a;
  return 0.0;
}

double oracle_pixel(const ImageF& img, int oy, int ox, int c, int out_h, int out_w,
                    bool antialias) {
  double sy = static_cast<double>(out_h) / img.height;
  double sx = static_cast<double>(out_w) / img.width;
  double ky = (antialias && sy < 1.0) ? sy : 1.0;
  double kx = (antialias && sx < 1.0) ? sx : 1.0;
  int ry = static_cast<int>(std::ceil(2.0 / ky));
  int rx = static_cast<int>(std::ceil(2.0 / kx));
  double uy = (oy + 0.5) / sy - 0.5;
  double ux = (ox + 0.5) / sx - 0.5;
  double num = 0.0, wy_sum = 0.0, wx_sum = 0.0;
  for (int ty = static_cast<int>(std::floor(uy)) - ry + 1;
       ty <= static_cast<int>(std::floor(uy)) + ry; ++ty)
    wy_sum += ky * oracle_kernel(ky * (uy - ty));
  for (int tx = static_cast<int>(std::floor(ux)) - rx + 1;
       tx <= static_cast<int>(std::floor(ux)) + rx; ++tx)
    wx_sum += kx * oracle_kernel(kx * (ux - tx));
  for (int ty = static_cast<int>(std::floor(uy)) - ry + 1;
       ty <= static_cast<int>(std::floor(uy)) + ry; ++ty)
    for (int tx = static_cast<int>(std::floor(ux)) - rx + 1;
         tx <= static_cast<int>(std::floor(ux)) + rx; ++tx) {
      double w = ky * oracle_kernel(ky * (uy - ty)) * kx * oracle_kernel(kx * (ux - tx));
      int cy = std::clamp(ty, 0, img.height - 1);
      int cx = std::clamp(tx, 0, img.width - 1);
      num += w * img.at(cy, cx, c);
    }
  return num / (wy_sum * wx_sum);
}

}  // namespace

TEST_CASE("kernel hits its anchor values") {
  CHECK(bicubic_kernel(0.0) == 1.0);
  CHECK(bicubic_kernel(1.0) == 0.0);
  CHECK(bicubic_kernel(-1.0) == 0.0);
  CHECK(bicubic_kernel(2.0) == 0.0);
  CHECK(bicubic_kernel(2.5) == 0.0);
  CHECK(bicubic_kernel(0.5) == doctest::Approx(0.5625).epsilon(1e-15));
  CHECK(bicubic_kernel(1.5) == doctest::Approx(-0.0625).epsilon(1e-13));
  CHECK(bicubic_kernel(-0.5) == bicubic_kernel(0.5));
}

TEST_CASE("axis weights sum to one at every output position") {
  struct Case {
    int in, out;
    bool aa;
  } cases[] = {{64, 16, true}, {64, 16, false}, {16, 64, true},
               {7, 23, false}, {23, 7, true},   {5, 5, true}};
  for (const Case& c : cases) {
    CAPTURE(c.in);
    CAPTURE(c.out);
    CAPTURE(c.aa);
    AxisWeights aw = resample_axis(c.in, c.out, c.aa);
    REQUIRE(aw.weights.size() == static_cast<size_t>(c.out) * aw.taps);
    for (int i = 0; i < c.out; ++i) {
      double sum = 0.0;
      for (int t = 0; t < aw.taps; ++t) {
        sum += aw.weights[static_cast<size_t>(i) * aw.taps + t];
        int idx = aw.indices[static_cast<size_t>(i) * aw.taps + t];
        CHECK(idx >= 0);
        CHECK(idx < c.in);
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("antialiased downscale widens the support") {
  CHECK(resample_axis(64, 16, false).taps == 4);
  CHECK(resample_axis(64, 16, true).taps == 16);  // radius 2/(1/4) = 8
  CHECK(resample_axis(16, 64, true).taps == 4);   // upscale: no stretching
}

TEST_CASE("constant byte images stay exactly constant") {
  // Renormalized weights keep a constant field constant to within float
  // rounding; the single end-of-pipeline quantization absorbs those ulps, so
  // the byte-level op is exact.
  Image img(9, 7, 3, 107);
  for (bool aa : {false, true}) {
    for (const Image& out : {bicubic_resize(img, 21, 18, aa), bicubic_resize(img, 3, 2, aa)}) {
      for (uint8_t v : out.samples) CHECK(v == 107);
    }
  }
  ImageF real(9, 7, 3, 0.42);
  for (double v : bicubic_resize(real, 3, 2, true).samples)
    CHECK(v == doctest::Approx(0.42).epsilon(1e-13));
}

TEST_CASE("same-size resize is the identity") {
  Rng rng(31);
  ImageF img = rand_imagef(rng, 11, 6, 3);
  for (bool aa : {false, true}) {
    ImageF same = bicubic_resize(img, 11, 6, aa);
    CHECK(same.samples == img.samples);
  }
  Image bytes(5, 4, 1);
  for (size_t i = 0; i < bytes.samples.size(); ++i)
    bytes.samples[i] = static_cast<uint8_t>(13 * i % 256);
  Image same = bicubic_resize(bytes, 5, 4, false);
  CHECK(same.samples == bytes.samples);
}

TEST_CASE("2x2 ramp upscale matches the direct weighted-sum oracle") {
  ImageF img(2, 2, 1);
  img.at(0, 0, 0) = 0.0;
  img.at(0, 1, 0) = 0.25;
  img.at(1, 0, 0) = 0.5;
  img.at(1, 1, 0) = 1.0;
  ImageF up = bicubic_resize(img, 4, 4, false);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      CAPTURE(y);
      CAPTURE(x);
      CHECK(up.at(y, x, 0) ==
            doctest::Approx(oracle_pixel(img, y, x, 0, 4, 4, false)).epsilon(1e-12));
    }
}

TEST_CASE("random resizes match the oracle in both directions") {
  Rng rng(32);
  ImageF img = rand_imagef(rng, 12, 9, 3);
  struct Case {
    int h, w;
    bool aa;
  } cases[] = {{24, 18, false}, {3, 2, true}, {3, 2, false}, {17, 5, true}};
  for (const Case& c : cases) {
    CAPTURE(c.h);
    CAPTURE(c.w);
    CAPTURE(c.aa);
    ImageF out = bicubic_resize(img, c.h, c.w, c.aa);
    for (int y = 0; y < c.h; ++y)
      for (int x = 0; x < c.w; ++x)
        for (int k = 0; k < 3; ++k)
          CHECK(out.at(y, x, k) ==
                doctest::Approx(oracle_pixel(img, y, x, k, c.h, c.w, c.aa))
                    .epsilon(1e-11));
  }
}

TEST_CASE("byte wrapper quantizes once at the end") {
  Rng rng(33);
  ImageF img = rand_imagef(rng, 16, 16, 3);
  Image src = to_bytes(img);
  Image out = bicubic_resize(src, 4, 4, true);
  Image expect = to_bytes(bicubic_resize(to_real(src), 4, 4, true));
  CHECK(out.samples == expect.samples);
}

TEST_CASE("argument checks") {
  ImageF img(4, 4, 1, 0.5);
  CHECK_THROWS_AS(bicubic_resize(img, 0, 4, false), std::invalid_argument);
  CHECK_THROWS_AS(bicubic_resize(img, 4, -1, true), std::invalid_argument);
  CHECK_THROWS_AS(resample_axis(0, 4, false), std::invalid_argument);
}
