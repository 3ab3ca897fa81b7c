#include "hst/png_io.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <vector>

namespace hst {
namespace {

const unsigned char kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error("png: " + path + ": " + what);
}

std::vector<unsigned char> read_file(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) fail(path, "cannot open for reading");
  std::fseek(f, 0, SEEK_END);
  long size = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  std::vector<unsigned char> data(static_cast<size_t>(size < 0 ? 0 : size));
  size_t got = data.empty() ? 0 : std::fread(data.data(), 1, data.size(), f);
  std::fclose(f);
  if (got != data.size()) fail(path, "short read");
  return data;
}

uint32_t read_u32(const unsigned char* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

void put_u32(std::vector<unsigned char>& out, uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

struct Chunk {
  char type[5] = {0};
  const unsigned char* data = nullptr;
  size_t size = 0;
};

// Walks the chunk sequence, verifying lengths and CRCs.
std::vector<Chunk> parse_chunks(const std::string& path, const std::vector<unsigned char>& file) {
  if (file.size() < 8 || std::memcmp(file.data(), kSignature, 8) != 0)
    fail(path, "missing PNG signature");
  std::vector<Chunk> chunks;
  size_t pos = 8;
  while (pos + 12 <= file.size()) {
    uint32_t len = read_u32(&file[pos]);
    if (pos + 12 + len > file.size()) fail(path, "truncated chunk");
    Chunk c;
    std::memcpy(c.type, &file[pos + 4], 4);
    c.data = &file[pos + 8];
    c.size = len;
    uint32_t want = read_u32(&file[pos + 8 + len]);
    uint32_t got = crc32(crc32(0, &file[pos + 4], 4), c.data, len);
    if (want != got) fail(path, std::string("CRC mismatch in ") + c.type + " chunk");
    chunks.push_back(c);
    pos += 12 + len;
    if (std::strcmp(c.type, "IEND") == 0) break;
  }
  if (chunks.empty() || std::strcmp(chunks.back().type, "IEND") != 0)
    fail(path, "missing IEND chunk");
  return chunks;
}

struct Header {
  uint32_t width, height;
  int bit_depth, color_type, interlace, channels;
};

Header parse_ihdr(const std::string& path, const std::vector<Chunk>& chunks) {
  if (std::strcmp(chunks.front().type, "IHDR") != 0 || chunks.front().size != 13)
    fail(path, "first chunk is not a valid IHDR");
  const unsigned char* d = chunks.front().data;
  Header h;
  h.width = read_u32(d);
  h.height = read_u32(d + 4);
  h.bit_depth = d[8];
  h.color_type = d[9];
  h.interlace = d[12];
  if (h.width == 0 || h.height == 0) fail(path, "zero image extent");
  if (h.bit_depth != 8)
    fail(path, "unsupported bit depth " + std::to_string(h.bit_depth) + " (only 8-bit)");
  if (h.color_type != 0 && h.color_type != 2)
    fail(path, "unsupported color type " + std::to_string(h.color_type) +
                   " (only grayscale and RGB)");
  if (h.interlace != 0) fail(path, "unsupported interlaced image");
  h.channels = h.color_type == 2 ? 3 : 1;
  return h;
}

int paeth(int a, int b, int c) {
  int p = a + b - c;
  int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace

PngHeader read_png_header(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) fail(path, "cannot open for reading");
  unsigned char buf[33];
  size_t got = std::fread(buf, 1, sizeof buf, f);
  std::fclose(f);
  if (got != sizeof buf || std::memcmp(buf, kSignature, 8) != 0 ||
      std::memcmp(buf + 12, "IHDR", 4) != 0)
    fail(path, "not a PNG file");
  std::vector<Chunk> one{Chunk{}};
  std::memcpy(one[0].type, "IHDR", 5);
  one[0].data = buf + 16;
  one[0].size = 13;
  // Reuse the IHDR field validation (CRC is skipped for the quick peek).
  Header h = parse_ihdr(path, one);
  return PngHeader{static_cast<int>(h.width), static_cast<int>(h.height), h.channels};
}

Image load_png(const std::string& path) {
  std::vector<unsigned char> file = read_file(path);
  std::vector<Chunk> chunks = parse_chunks(path, file);
  Header h = parse_ihdr(path, chunks);

  std::vector<unsigned char> compressed;
  for (const Chunk& c : chunks)
    if (std::strcmp(c.type, "IDAT") == 0) compressed.insert(compressed.end(), c.data, c.data + c.size);
  if (compressed.empty()) fail(path, "no IDAT data");

  size_t stride = static_cast<size_t>(h.width) * h.channels;
  std::vector<unsigned char> raw(static_cast<size_t>(h.height) * (stride + 1));
  uLongf raw_size = raw.size();
  int rc = uncompress(raw.data(), &raw_size, compressed.data(), compressed.size());
  if (rc != Z_OK || raw_size != raw.size()) fail(path, "IDAT inflate failed");

  Image img(static_cast<int>(h.height), static_cast<int>(h.width), h.channels);
  int bpp = h.channels;  // bytes per pixel at 8-bit depth
  for (uint32_t y = 0; y < h.height; ++y) {
    const unsigned char* src = &raw[y * (stride + 1)];
    unsigned char filter = src[0];
    ++src;
    unsigned char* dst = &img.samples[y * stride];
    const unsigned char* up = y ? &img.samples[(y - 1) * stride] : nullptr;
    for (size_t i = 0; i < stride; ++i) {
      int a = i >= static_cast<size_t>(bpp) ? dst[i - bpp] : 0;
      int b = up ? up[i] : 0;
      int c = (up && i >= static_cast<size_t>(bpp)) ? up[i - bpp] : 0;
      int v = src[i];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default: fail(path, "unknown scanline filter " + std::to_string(filter));
      }
      dst[i] = static_cast<unsigned char>(v);
    }
  }
  return img;
}

void save_png(const std::string& path, const Image& img) {
  if (img.height < 1 || img.width < 1 || (img.channels != 1 && img.channels != 3))
    fail(path, "cannot save empty or non-gray/RGB image");

  size_t stride = static_cast<size_t>(img.width) * img.channels;
  std::vector<unsigned char> raw(static_cast<size_t>(img.height) * (stride + 1));
  for (int y = 0; y < img.height; ++y) {
    raw[y * (stride + 1)] = 0;  // filter: none
    std::memcpy(&raw[y * (stride + 1) + 1], &img.samples[y * stride], stride);
  }
  uLongf bound = compressBound(raw.size());
  std::vector<unsigned char> compressed(bound);
  if (compress2(compressed.data(), &bound, raw.data(), raw.size(), Z_DEFAULT_COMPRESSION) != Z_OK)
    fail(path, "deflate failed");
  compressed.resize(bound);

  std::vector<unsigned char> out(kSignature, kSignature + 8);
  auto chunk = [&](const char* type, const std::vector<unsigned char>& data) {
    put_u32(out, static_cast<uint32_t>(data.size()));
    size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    uint32_t crc = crc32(0, &out[start], 4);
    if (!data.empty()) crc = crc32(crc, data.data(), data.size());
    put_u32(out, crc);
  };

  std::vector<unsigned char> ihdr;
  put_u32(ihdr, static_cast<uint32_t>(img.width));
  put_u32(ihdr, static_cast<uint32_t>(img.height));
  ihdr.push_back(8);                                  // bit depth
  ihdr.push_back(img.channels == 3 ? 2 : 0);          // color type
  ihdr.push_back(0);                                  // compression
  ihdr.push_back(0);                                  // filter method
  ihdr.push_back(0);                                  // no interlace
  chunk("IHDR", ihdr);
  chunk("IDAT", compressed);
  chunk("IEND", {});

  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) fail(path, "cannot open for writing");
  size_t wrote = std::fwrite(out.data(), 1, out.size(), f);
  int closed = std::fclose(f);
  if (wrote != out.size() || closed != 0) fail(path, "short write");
}

}  // namespace hst
