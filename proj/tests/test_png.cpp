#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <zlib.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hst/image.hpp"
#include "hst/png_io.hpp"
#include "hst/rng.hpp"

using namespace hst;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

Image rand_image(Rng& rng, int h, int w, int c) {
  Image img(h, w, c);
  for (auto& s : img.samples) s = static_cast<uint8_t>(rng.uniform(0.0, 255.999));
  return img;
}

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream f(path, std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("png round-trips RGB and grayscale bitwise") {
  Rng rng(21);
  for (int c : {1, 3}) {
    CAPTURE(c);
    Image img = rand_image(rng, 13, 9, c);
    std::string path = temp_path("hst_png_rt_" + std::to_string(c) + ".png");
    save_png(path, img);
    Image back = load_png(path);
    CHECK(back.height == img.height);
    CHECK(back.width == img.width);
    CHECK(back.channels == img.channels);
    CHECK(back.samples == img.samples);
    std::remove(path.c_str());
  }
}

TEST_CASE("png handles the 1x1 edge case") {
  Image img(1, 1, 3);
  img.at(0, 0, 0) = 11;
  img.at(0, 0, 1) = 22;
  img.at(0, 0, 2) = 33;
  std::string path = temp_path("hst_png_1x1.png");
  save_png(path, img);
  Image back = load_png(path);
  CHECK(back.samples == img.samples);
  std::remove(path.c_str());
}

TEST_CASE("png header peek reports geometry without decoding") {
  Rng rng(22);
  Image img = rand_image(rng, 37, 21, 3);
  std::string path = temp_path("hst_png_peek.png");
  save_png(path, img);
  PngHeader h = read_png_header(path);
  CHECK(h.height == 37);
  CHECK(h.width == 21);
  CHECK(h.channels == 3);
  std::remove(path.c_str());
}

TEST_CASE("png reader decodes every scanline filter type") {
  // Hand-assembled 5x3 grayscale image with one row per filter type. The
  // expected pixels come from an independent scalar unfilter written inline,
  // so the decoder is checked against the algorithm statement rather than
  // against itself.
  std::vector<unsigned char> raw = {
      0, 10, 20, 35,   // none
      1, 7,  9,  200,  // sub (left)
      2, 30, 0,  250,  // up
      3, 90, 1,  128,  // average (left, up)
      4, 13, 255, 77,  // paeth
  };
  const int h = 5, w = 3;
  std::vector<unsigned char> expect(h * w);
  {
    std::vector<std::vector<int>> rows(h, std::vector<int>(w, 0));
    for (int r = 0; r < h; ++r) {
      int filter = raw[r * (w + 1)];
      for (int x = 0; x < w; ++x) {
        int a = x ? rows[r][x - 1] : 0;
        int b = r ? rows[r - 1][x] : 0;
        int c = (r && x) ? rows[r - 1][x - 1] : 0;
        int v = raw[r * (w + 1) + 1 + x];
        if (filter == 1) v += a;
        if (filter == 2) v += b;
        if (filter == 3) v += (a + b) / 2;
        if (filter == 4) {
          int p = a + b - c;
          int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
          v += (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
        }
        rows[r][x] = v & 0xff;
        expect[r * w + x] = static_cast<unsigned char>(rows[r][x]);
      }
    }
  }

  // zlib-compress the raw stream and wrap it in minimal chunks.
  std::vector<unsigned char> file = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  auto put32 = [&](std::vector<unsigned char>& v, uint32_t x) {
    v.push_back(x >> 24);
    v.push_back(x >> 16);
    v.push_back(x >> 8);
    v.push_back(x);
  };
  auto chunk = [&](const char* type, const std::vector<unsigned char>& data) {
    put32(file, static_cast<uint32_t>(data.size()));
    size_t start = file.size();
    file.insert(file.end(), type, type + 4);
    file.insert(file.end(), data.begin(), data.end());
    uint32_t crc = crc32(0, &file[start], 4);
    if (!data.empty()) crc = crc32(crc, data.data(), data.size());
    put32(file, crc);
  };
  std::vector<unsigned char> ihdr;
  put32(ihdr, w);
  put32(ihdr, h);
  ihdr.insert(ihdr.end(), {8, 0, 0, 0, 0});
  chunk("IHDR", ihdr);
  uLongf bound = compressBound(raw.size());
  std::vector<unsigned char> z(bound);
  REQUIRE(compress2(z.data(), &bound, raw.data(), raw.size(), 6) == Z_OK);
  z.resize(bound);
  chunk("IDAT", z);
  chunk("IEND", {});

  std::string path = temp_path("hst_png_filters.png");
  write_bytes(path, file);
  Image img = load_png(path);
  REQUIRE(img.channels == 1);
  REQUIRE(img.height == h);
  REQUIRE(img.width == w);
  for (int i = 0; i < h * w; ++i) CHECK(img.samples[i] == expect[i]);
  std::remove(path.c_str());
}

TEST_CASE("png reader names the unsupported feature") {
  // A valid 1x1 file, mutated one IHDR field at a time.
  Image img(1, 1, 1);
  img.samples[0] = 42;
  std::string path = temp_path("hst_png_mut.png");
  save_png(path, img);
  std::ifstream f(path, std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  f.close();

  auto patched = [&](size_t offset, unsigned char value) {
    std::vector<unsigned char> out = bytes;
    out[offset] = value;
    // Refresh the IHDR CRC so only the intended rejection fires.
    uint32_t crc = crc32(0, &out[12], 4 + 13);
    for (int i = 0; i < 4; ++i) out[29 + i] = static_cast<unsigned char>(crc >> (24 - 8 * i));
    std::string p = temp_path("hst_png_mut_var.png");
    write_bytes(p, out);
    return p;
  };

  // IHDR data starts at byte 16: width(4) height(4) depth type comp filter interlace.
  struct Case {
    size_t offset;
    unsigned char value;
    const char* needle;
  } cases[] = {
      {24, 16, "bit depth"},
      {25, 3, "color type"},
      {25, 6, "color type"},
      {28, 1, "interlaced"},
  };
  for (const Case& c : cases) {
    CAPTURE(c.needle);
    std::string p = patched(c.offset, c.value);
    CHECK_THROWS_WITH_AS(load_png(p), doctest::Contains(c.needle), std::runtime_error);
    std::remove(p.c_str());
  }

  // Corrupt a payload byte without fixing the CRC: must be caught as such.
  std::vector<unsigned char> bad = bytes;
  bad[16] ^= 0xff;
  std::string p = temp_path("hst_png_badcrc.png");
  write_bytes(p, bad);
  CHECK_THROWS_WITH_AS(load_png(p), doctest::Contains("CRC"), std::runtime_error);
  std::remove(p.c_str());

  CHECK_THROWS_AS(load_png(temp_path("hst_png_missing_file.png")), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("png reader rejects truncated files") {
  Rng rng(23);
  Image img = rand_image(rng, 8, 8, 3);
  std::string path = temp_path("hst_png_trunc.png");
  save_png(path, img);
  std::ifstream f(path, std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  f.close();
  std::remove(path.c_str());

  std::string p = temp_path("hst_png_trunc_cut.png");
  for (size_t keep : {size_t(4), size_t(20), bytes.size() - 5}) {
    write_bytes(p, std::vector<unsigned char>(bytes.begin(), bytes.begin() + keep));
    CHECK_THROWS_AS(load_png(p), std::runtime_error);
  }
  std::remove(p.c_str());
}
