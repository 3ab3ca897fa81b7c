#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "hst/image.hpp"
#include "hst/metrics.hpp"
#include "hst/rng.hpp"

using namespace hst;

namespace {

Image rand_image(Rng& rng, int h, int w, int c) {
  Image img(h, w, c);
  for (auto& s : img.samples) s = static_cast<uint8_t>(rng.uniform(0.0, 255.999));
  return img;
}

// Smooth mid-contrast content: a sum of sinusoids quantized to bytes.
Image wavy_image(int h, int w) {
  Image img(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double v = 128.0 + 60.0 * std::sin(0.3 * x + 0.5 * c) + 40.0 * std::cos(0.2 * y);
        img.at(y, x, c) = static_cast<uint8_t>(std::clamp(v, 0.0, 255.0));
      }
  return img;
}

}  // namespace

TEST_CASE("psnr of identical images is the +infinity sentinel") {
  Rng rng(41);
  Image img = rand_image(rng, 9, 9, 3);
  double v = psnr_rgb(img, img);
  CHECK(std::isinf(v));
  CHECK(v > 0);
}

TEST_CASE("psnr off-by-one anchor is 20*log10(255)") {
  Image a(8, 8, 3, 100);
  Image b(8, 8, 3, 101);
  CHECK(psnr_rgb(a, b) == doctest::Approx(48.130803609).epsilon(1e-9));
  CHECK(psnr_rgb(b, a) == psnr_rgb(a, b));
}

TEST_CASE("psnr matches a scalar oracle on random pairs") {
  Rng rng(42);
  Image a = rand_image(rng, 8, 8, 3);
  Image b = rand_image(rng, 8, 8, 3);
  double se = 0.0;
  for (size_t i = 0; i < a.samples.size(); ++i) {
    double d = double(a.samples[i]) - double(b.samples[i]);
    se += d * d;
  }
  double want = 10.0 * std::log10(255.0 * 255.0 * a.samples.size() / se);
  CHECK(psnr_rgb(a, b) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("psnr is invariant under a shared pixel permutation") {
  Rng rng(43);
  Image a = rand_image(rng, 6, 6, 1);
  Image b = rand_image(rng, 6, 6, 1);
  std::vector<size_t> perm(a.samples.size());
  std::iota(perm.begin(), perm.end(), size_t{0});
  for (size_t i = perm.size(); i > 1; --i)
    std::swap(perm[i - 1], perm[static_cast<size_t>(rng.uniform(0.0, double(i)))]);
  Image ap(6, 6, 1), bp(6, 6, 1);
  for (size_t i = 0; i < perm.size(); ++i) {
    ap.samples[i] = a.samples[perm[i]];
    bp.samples[i] = b.samples[perm[i]];
  }
  CHECK(psnr_rgb(ap, bp) == psnr_rgb(a, b));
}

TEST_CASE("psnr rejects mismatched geometry") {
  Image a(4, 4, 3), b(4, 5, 3), c(4, 4, 1);
  CHECK_THROWS_AS(psnr_rgb(a, b), std::invalid_argument);
  CHECK_THROWS_AS(psnr_rgb(a, c), std::invalid_argument);
}

TEST_CASE("ssim of an image with itself is exactly one") {
  Rng rng(44);
  Image img = rand_image(rng, 16, 13, 3);
  CHECK(ssim(img, img) == 1.0);
}

TEST_CASE("ssim is symmetric") {
  Rng rng(45);
  Image a = rand_image(rng, 14, 14, 3);
  Image b = rand_image(rng, 14, 14, 3);
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
}

TEST_CASE("ssim of constant images reduces to the luminance term") {
  Image a(12, 12, 1, 100);
  Image b(12, 12, 1, 150);
  double c1 = (0.01 * 255) * (0.01 * 255);
  double want = (2.0 * 100 * 150 + c1) / (100.0 * 100 + 150.0 * 150 + c1);
  CHECK(ssim(a, b) == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("ssim of an image against its negative is low") {
  Image img = wavy_image(32, 32);
  Image neg(32, 32, 3);
  for (size_t i = 0; i < img.samples.size(); ++i)
    neg.samples[i] = static_cast<uint8_t>(255 - img.samples[i]);
  double v = ssim(img, neg);
  CHECK(v < 0.5);
  CHECK(v >= -1.0);
  CHECK(ssim(img, img) == 1.0);
}

TEST_CASE("ssim needs both extents >= 11") {
  Image ok(11, 11, 1, 7);
  CHECK(ssim(ok, ok) == 1.0);
  Image tall(20, 10, 1), wide(10, 20, 1);
  CHECK_THROWS_AS(ssim(tall, tall), std::invalid_argument);
  CHECK_THROWS_AS(ssim(wide, wide), std::invalid_argument);
  Image other(11, 12, 1);
  CHECK_THROWS_AS(ssim(ok, other), std::invalid_argument);
}
