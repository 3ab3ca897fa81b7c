#include "hst/jpeg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace hst {
namespace jpegdetail {

const uint8_t kZigzag[64] = {
    0,  1,  8,  16, 9,  2,  3,  10, 17, 24, 32, 25, 18, 11, 4,  5,
    12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6,  7,  14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63};

const uint8_t kBaseLuma[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

const uint8_t kBaseChroma[64] = {
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

const uint8_t kDcLumaBits[17] = {0, 0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0};
const uint8_t kDcLumaVals[12] = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
const uint8_t kDcChromaBits[17] = {0, 0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0};
const uint8_t kDcChromaVals[12] = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};

const uint8_t kAcLumaBits[17] = {0, 0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7d};
const uint8_t kAcLumaVals[162] = {
    0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06,
    0x13, 0x51, 0x61, 0x07, 0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xa1, 0x08,
    0x23, 0x42, 0xb1, 0xc1, 0x15, 0x52, 0xd1, 0xf0, 0x24, 0x33, 0x62, 0x72,
    0x82, 0x09, 0x0a, 0x16, 0x17, 0x18, 0x19, 0x1a, 0x25, 0x26, 0x27, 0x28,
    0x29, 0x2a, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a, 0x43, 0x44, 0x45,
    0x46, 0x47, 0x48, 0x49, 0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59,
    0x5a, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69, 0x6a, 0x73, 0x74, 0x75,
    0x76, 0x77, 0x78, 0x79, 0x7a, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89,
    0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9a, 0xa2, 0xa3,
    0xa4, 0xa5, 0xa6, 0xa7, 0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4, 0xb5, 0xb6,
    0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3, 0xc4, 0xc5, 0xc6, 0xc7, 0xc8, 0xc9,
    0xca, 0xd2, 0xd3, 0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9, 0xda, 0xe1, 0xe2,
    0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8, 0xe9, 0xea, 0xf1, 0xf2, 0xf3, 0xf4,
    0xf5, 0xf6, 0xf7, 0xf8, 0xf9, 0xfa};

const uint8_t kAcChromaBits[17] = {0, 0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 0x77};
const uint8_t kAcChromaVals[162] = {
    0x00, 0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21, 0x31, 0x06, 0x12, 0x41,
    0x51, 0x07, 0x61, 0x71, 0x13, 0x22, 0x32, 0x81, 0x08, 0x14, 0x42, 0x91,
    0xa1, 0xb1, 0xc1, 0x09, 0x23, 0x33, 0x52, 0xf0, 0x15, 0x62, 0x72, 0xd1,
    0x0a, 0x16, 0x24, 0x34, 0xe1, 0x25, 0xf1, 0x17, 0x18, 0x19, 0x1a, 0x26,
    0x27, 0x28, 0x29, 0x2a, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a, 0x43, 0x44,
    0x45, 0x46, 0x47, 0x48, 0x49, 0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58,
    0x59, 0x5a, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69, 0x6a, 0x73, 0x74,
    0x75, 0x76, 0x77, 0x78, 0x79, 0x7a, 0x82, 0x83, 0x84, 0x85, 0x86, 0x87,
    0x88, 0x89, 0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9a,
    0xa2, 0xa3, 0xa4, 0xa5, 0xa6, 0xa7, 0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4,
    0xb5, 0xb6, 0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3, 0xc4, 0xc5, 0xc6, 0xc7,
    0xc8, 0xc9, 0xca, 0xd2, 0xd3, 0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9, 0xda,
    0xe2, 0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8, 0xe9, 0xea, 0xf2, 0xf3, 0xf4,
    0xf5, 0xf6, 0xf7, 0xf8, 0xf9, 0xfa};

std::array<int, 64> quant_table(const uint8_t* base, int quality) {
  if (quality < 1 || quality > 100)
    throw std::invalid_argument("jpeg: quality must be in [1,100], got " +
                                std::to_string(quality));
  int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::array<int, 64> out;
  for (int i = 0; i < 64; ++i)
    out[i] = std::clamp((base[i] * scale + 50) / 100, 1, 255);
  return out;
}

namespace {

// c[k][n] = s(k) cos(pi (2n+1) k / 16); rows are orthonormal.
struct CosTable {
  double c[8][8];
  CosTable() {
    for (int k = 0; k < 8; ++k)
      for (int n = 0; n < 8; ++n)
        c[k][n] = (k == 0 ? std::sqrt(0.125) : 0.5) *
                  std::cos(M_PI * (2 * n + 1) * k / 16.0);
  }
};
const CosTable kCos;

}  // namespace

void fdct8x8(const double* in, double* out) {
  double t[64];
  for (int y = 0; y < 8; ++y)
    for (int u = 0; u < 8; ++u) {
      double acc = 0;
      for (int x = 0; x < 8; ++x) acc += in[y * 8 + x] * kCos.c[u][x];
      t[y * 8 + u] = acc;
    }
  for (int v = 0; v < 8; ++v)
    for (int u = 0; u < 8; ++u) {
      double acc = 0;
      for (int y = 0; y < 8; ++y) acc += t[y * 8 + u] * kCos.c[v][y];
      out[v * 8 + u] = acc;
    }
}

void idct8x8(const double* in, double* out) {
  double t[64];
  for (int v = 0; v < 8; ++v)
    for (int x = 0; x < 8; ++x) {
      double acc = 0;
      for (int u = 0; u < 8; ++u) acc += in[v * 8 + u] * kCos.c[u][x];
      t[v * 8 + x] = acc;
    }
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      double acc = 0;
      for (int v = 0; v < 8; ++v) acc += t[v * 8 + x] * kCos.c[v][y];
      out[y * 8 + x] = acc;
    }
}

HuffEncoder build_huff_encoder(const uint8_t* bits, const uint8_t* vals, int nvals) {
  HuffEncoder enc;
  int code = 0, k = 0;
  for (int len = 1; len <= 16; ++len) {
    for (int i = 0; i < bits[len]; ++i) {
      if (k >= nvals) throw std::invalid_argument("jpeg: Huffman spec has too few values");
      enc.code[vals[k]] = static_cast<uint16_t>(code);
      enc.length[vals[k]] = static_cast<uint8_t>(len);
      ++code;
      ++k;
    }
    code <<= 1;
  }
  return enc;
}

HuffDecoder build_huff_decoder(const uint8_t* bits, const uint8_t* vals) {
  HuffDecoder dec;
  dec.vals = vals;
  int code = 0, k = 0;
  for (int len = 1; len <= 16; ++len) {
    if (bits[len]) {
      dec.valptr[len] = k;
      dec.mincode[len] = code;
      code += bits[len];
      k += bits[len];
      dec.maxcode[len] = code - 1;
    } else {
      dec.maxcode[len] = -1;
    }
    code <<= 1;
  }
  return dec;
}

void BitWriter::put_bits(uint32_t v, int n) {
  acc_ = (acc_ << n) | (v & ((1u << n) - 1));
  nbits_ += n;
  while (nbits_ >= 8) {
    uint8_t b = static_cast<uint8_t>(acc_ >> (nbits_ - 8));
    out_.push_back(b);
    if (b == 0xFF) out_.push_back(0x00);  // byte stuffing
    nbits_ -= 8;
    acc_ &= (1u << nbits_) - 1;
  }
}

void BitWriter::put_code(const HuffEncoder& enc, int symbol) {
  if (!enc.length[symbol])
    throw std::logic_error("jpeg: symbol " + std::to_string(symbol) +
                           " has no Huffman code");
  put_bits(enc.code[symbol], enc.length[symbol]);
}

void BitWriter::flush() {
  if (nbits_ > 0) put_bits((1u << (8 - nbits_)) - 1, 8 - nbits_);  // pad with 1s
}

int BitReader::get_bit() {
  if (nbits_ == 0) {
    if (pos_ >= s_.size())
      throw std::runtime_error("jpeg: SOS: truncated entropy-coded data");
    uint8_t b = s_[pos_++];
    if (b == 0xFF) {
      if (pos_ >= s_.size() || s_[pos_] != 0x00)
        throw std::runtime_error("jpeg: SOS: unexpected marker in entropy-coded data");
      ++pos_;  // skip the stuffed zero
    }
    acc_ = b;
    nbits_ = 8;
  }
  return (acc_ >> --nbits_) & 1;
}

int BitReader::receive(int n) {
  int v = 0;
  for (int i = 0; i < n; ++i) v = (v << 1) | get_bit();
  return v;
}

size_t BitReader::byte_pos() const { return pos_; }

int decode_symbol(BitReader& br, const HuffDecoder& dec) {
  int code = 0;
  for (int len = 1; len <= 16; ++len) {
    code = (code << 1) | br.get_bit();
    if (dec.maxcode[len] >= 0 && code <= dec.maxcode[len])
      return dec.vals[dec.valptr[len] + code - dec.mincode[len]];
  }
  throw std::runtime_error("jpeg: SOS: invalid Huffman code");
}

}  // namespace jpegdetail

namespace {

using namespace jpegdetail;

uint8_t clamp_round(double v) {
  double r = std::round(v);  // half away from zero
  if (r < 0.0) return 0;
  if (r > 255.0) return 255;
  return static_cast<uint8_t>(r);
}

// Magnitude category: smallest s with |v| < 2^s.
int category(int v) {
  int a = v < 0 ? -v : v;
  int s = 0;
  while (a) {
    a >>= 1;
    ++s;
  }
  return s;
}

int extend(int v, int s) { return v < (1 << (s - 1)) ? v - (1 << s) + 1 : v; }

struct EncComp {
  std::vector<uint8_t> plane;  // padded to whole blocks per MCU grid
  int pw = 0, ph = 0;          // padded dims
  int hs = 1, vs = 1;          // sampling factors
  int id = 1, tq = 0;
  const HuffEncoder* dc = nullptr;
  const HuffEncoder* ac = nullptr;
  const std::array<int, 64>* qt = nullptr;
  int pred = 0;
};

// Pads `src` (w x h) by edge replication into a pw x ph plane.
std::vector<uint8_t> pad_plane(const std::vector<uint8_t>& src, int w, int h, int pw,
                               int ph) {
  std::vector<uint8_t> out(static_cast<size_t>(pw) * ph);
  for (int y = 0; y < ph; ++y) {
    int sy = std::min(y, h - 1);
    for (int x = 0; x < pw; ++x)
      out[static_cast<size_t>(y) * pw + x] =
          src[static_cast<size_t>(sy) * w + std::min(x, w - 1)];
  }
  return out;
}

void encode_block(BitWriter& bw, EncComp& comp, const double* samples) {
  double freq[64];
  fdct8x8(samples, freq);
  int coef[64];  // zigzag order
  for (int i = 0; i < 64; ++i) {
    int nat = kZigzag[i];
    coef[i] = static_cast<int>(std::llround(freq[nat] / (*comp.qt)[nat]));
  }

  int diff = coef[0] - comp.pred;
  comp.pred = coef[0];
  int s = category(diff);
  bw.put_code(*comp.dc, s);
  if (s) bw.put_bits(static_cast<uint32_t>(diff < 0 ? diff + (1 << s) - 1 : diff), s);

  int run = 0;
  for (int i = 1; i < 64; ++i) {
    if (coef[i] == 0) {
      ++run;
      continue;
    }
    while (run > 15) {
      bw.put_code(*comp.ac, 0xF0);  // sixteen zeros
      run -= 16;
    }
    int as = category(coef[i]);
    bw.put_code(*comp.ac, (run << 4) | as);
    bw.put_bits(static_cast<uint32_t>(coef[i] < 0 ? coef[i] + (1 << as) - 1 : coef[i]), as);
    run = 0;
  }
  if (run > 0) bw.put_code(*comp.ac, 0x00);  // end of block
}

void put_u16(std::vector<uint8_t>& out, int v) {
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

void put_marker(std::vector<uint8_t>& out, uint8_t m) {
  out.push_back(0xFF);
  out.push_back(m);
}

}  // namespace

std::vector<uint8_t> jpeg_encode(const Image& img, int quality) {
  if (img.height < 1 || img.width < 1 || (img.channels != 1 && img.channels != 3))
    throw std::invalid_argument("jpeg: image must be non-empty grayscale or RGB");
  bool color = img.channels == 3;
  std::array<int, 64> qluma = quant_table(kBaseLuma, quality);
  std::array<int, 64> qchroma = quant_table(kBaseChroma, quality);
  HuffEncoder dcl = build_huff_encoder(kDcLumaBits, kDcLumaVals, 12);
  HuffEncoder acl = build_huff_encoder(kAcLumaBits, kAcLumaVals, 162);
  HuffEncoder dcc = build_huff_encoder(kDcChromaBits, kDcChromaVals, 12);
  HuffEncoder acc = build_huff_encoder(kAcChromaBits, kAcChromaVals, 162);

  int w = img.width, h = img.height;
  std::vector<EncComp> comps;
  if (color) {
    // Full-range BT.601, rounded to bytes per plane.
    std::vector<uint8_t> yp(static_cast<size_t>(w) * h), cb(yp.size()), cr(yp.size());
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double r = img.at(y, x, 0), g = img.at(y, x, 1), b = img.at(y, x, 2);
        size_t i = static_cast<size_t>(y) * w + x;
        yp[i] = clamp_round(0.299 * r + 0.587 * g + 0.114 * b);
        cb[i] = clamp_round(128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b);
        cr[i] = clamp_round(128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b);
      }
    // 4:2:0 — 2x2 box average with edge replication for odd extents.
    int cw = (w + 1) / 2, ch = (h + 1) / 2;
    std::vector<uint8_t> cbs(static_cast<size_t>(cw) * ch), crs(cbs.size());
    for (int y = 0; y < ch; ++y)
      for (int x = 0; x < cw; ++x) {
        int y0 = 2 * y, y1 = std::min(2 * y + 1, h - 1);
        int x0 = 2 * x, x1 = std::min(2 * x + 1, w - 1);
        auto box = [&](const std::vector<uint8_t>& p) {
          int sum = p[static_cast<size_t>(y0) * w + x0] + p[static_cast<size_t>(y0) * w + x1] +
                    p[static_cast<size_t>(y1) * w + x0] + p[static_cast<size_t>(y1) * w + x1];
          return clamp_round(sum / 4.0);
        };
        cbs[static_cast<size_t>(y) * cw + x] = box(cb);
        crs[static_cast<size_t>(y) * cw + x] = box(cr);
      }
    int mcux = (w + 15) / 16, mcuy = (h + 15) / 16;
    comps.resize(3);
    comps[0] = {pad_plane(yp, w, h, mcux * 16, mcuy * 16), mcux * 16, mcuy * 16,
                2,  2,  1, 0, &dcl, &acl, &qluma, 0};
    comps[1] = {pad_plane(cbs, cw, ch, mcux * 8, mcuy * 8), mcux * 8, mcuy * 8,
                1,  1,  2, 1, &dcc, &acc, &qchroma, 0};
    comps[2] = {pad_plane(crs, cw, ch, mcux * 8, mcuy * 8), mcux * 8, mcuy * 8,
                1,  1,  3, 1, &dcc, &acc, &qchroma, 0};
  } else {
    std::vector<uint8_t> yp(img.samples.begin(), img.samples.end());
    int bw = (w + 7) / 8, bh = (h + 7) / 8;
    comps.resize(1);
    comps[0] = {pad_plane(yp, w, h, bw * 8, bh * 8), bw * 8, bh * 8,
                1,  1,  1, 0, &dcl, &acl, &qluma, 0};
  }

  std::vector<uint8_t> out;
  put_marker(out, 0xD8);  // SOI
  put_marker(out, 0xE0);  // APP0 / JFIF
  put_u16(out, 16);
  const char jfif[] = "JFIF";
  out.insert(out.end(), jfif, jfif + 5);
  out.insert(out.end(), {1, 1, 0});  // version 1.1, aspect-ratio units
  put_u16(out, 1);
  put_u16(out, 1);
  out.insert(out.end(), {0, 0});  // no thumbnail

  auto emit_dqt = [&](const std::array<int, 64>& qt, int id) {
    put_marker(out, 0xDB);
    put_u16(out, 2 + 1 + 64);
    out.push_back(static_cast<uint8_t>(id));  // 8-bit precision, table id
    for (int i = 0; i < 64; ++i) out.push_back(static_cast<uint8_t>(qt[kZigzag[i]]));
  };
  emit_dqt(qluma, 0);
  if (color) emit_dqt(qchroma, 1);

  put_marker(out, 0xC0);  // SOF0: baseline sequential
  put_u16(out, 8 + 3 * static_cast<int>(comps.size()));
  out.push_back(8);  // sample precision
  put_u16(out, h);
  put_u16(out, w);
  out.push_back(static_cast<uint8_t>(comps.size()));
  for (const EncComp& c : comps) {
    out.push_back(static_cast<uint8_t>(c.id));
    out.push_back(static_cast<uint8_t>((c.hs << 4) | c.vs));
    out.push_back(static_cast<uint8_t>(c.tq));
  }

  auto emit_dht = [&](int cls, int id, const uint8_t* bits, const uint8_t* vals) {
    int n = 0;
    for (int len = 1; len <= 16; ++len) n += bits[len];
    put_marker(out, 0xC4);
    put_u16(out, 2 + 1 + 16 + n);
    out.push_back(static_cast<uint8_t>((cls << 4) | id));
    out.insert(out.end(), bits + 1, bits + 17);
    out.insert(out.end(), vals, vals + n);
  };
  emit_dht(0, 0, kDcLumaBits, kDcLumaVals);
  emit_dht(1, 0, kAcLumaBits, kAcLumaVals);
  if (color) {
    emit_dht(0, 1, kDcChromaBits, kDcChromaVals);
    emit_dht(1, 1, kAcChromaBits, kAcChromaVals);
  }

  put_marker(out, 0xDA);  // SOS
  put_u16(out, 6 + 2 * static_cast<int>(comps.size()));
  out.push_back(static_cast<uint8_t>(comps.size()));
  for (const EncComp& c : comps) {
    out.push_back(static_cast<uint8_t>(c.id));
    int tbl = c.tq;  // luma uses table pair 0, chroma pair 1
    out.push_back(static_cast<uint8_t>((tbl << 4) | tbl));
  }
  out.insert(out.end(), {0, 63, 0});  // full spectral selection

  BitWriter bw(out);
  int hmax = color ? 2 : 1;
  int mcux = comps[0].pw / (8 * hmax), mcuy = comps[0].ph / (8 * hmax);
  double block[64];
  for (int my = 0; my < mcuy; ++my)
    for (int mx = 0; mx < mcux; ++mx)
      for (EncComp& c : comps)
        for (int by = 0; by < c.vs; ++by)
          for (int bx = 0; bx < c.hs; ++bx) {
            int oy = (my * c.vs + by) * 8, ox = (mx * c.hs + bx) * 8;
            for (int y = 0; y < 8; ++y)
              for (int x = 0; x < 8; ++x)
                block[y * 8 + x] =
                    c.plane[static_cast<size_t>(oy + y) * c.pw + ox + x] - 128.0;
            encode_block(bw, c, block);
          }
  bw.flush();
  put_marker(out, 0xD9);  // EOI
  return out;
}

namespace {

struct DecQt {
  bool present = false;
  int q[64] = {};  // natural order
};

struct DecHuff {
  bool present = false;
  std::vector<uint8_t> vals;
  uint8_t bits[17] = {};
  HuffDecoder dec;
};

struct DecComp {
  int id = 0, hs = 1, vs = 1, tq = 0;
  int dc_sel = -1, ac_sel = -1;
  int pw = 0, ph = 0;
  std::vector<double> plane;
  int pred = 0;
};

[[noreturn]] void bad(const std::string& segment, const std::string& what) {
  throw std::runtime_error("jpeg: " + segment + ": " + what);
}

class SegmentReader {
 public:
  SegmentReader(const std::vector<uint8_t>& s, size_t pos, size_t end, std::string name)
      : s_(s), pos_(pos), end_(end), name_(std::move(name)) {}
  uint8_t u8() {
    if (pos_ >= end_) bad(name_, "truncated segment");
    return s_[pos_++];
  }
  int u16() {
    int hi = u8();
    return (hi << 8) | u8();
  }
  size_t remaining() const { return end_ - pos_; }

 private:
  const std::vector<uint8_t>& s_;
  size_t pos_, end_;
  std::string name_;
};

}  // namespace

Image jpeg_decode(const std::vector<uint8_t>& stream) {
  size_t p = 0;
  auto need = [&](size_t n, const char* seg) {
    if (p + n > stream.size()) bad(seg, "unexpected end of stream");
  };
  need(2, "SOI");
  if (stream[0] != 0xFF || stream[1] != 0xD8) bad("SOI", "missing start-of-image marker");
  p = 2;

  DecQt qts[4];
  DecHuff huffs[2][4];  // [class][id]
  std::vector<DecComp> comps;
  int width = 0, height = 0;
  bool have_sof = false, have_scan = false;

  while (true) {
    need(1, "marker");
    if (stream[p] != 0xFF) bad("marker", "expected a marker, found stray data");
    while (p < stream.size() && stream[p] == 0xFF) ++p;  // fill bytes
    need(1, "marker");
    uint8_t m = stream[p++];

    if (m == 0xD9) {  // EOI
      if (!have_scan) bad("EOI", "end of image before any scan data");
      break;
    }
    if (m == 0x01 || (m >= 0xD0 && m <= 0xD7)) continue;  // parameterless

    need(2, "marker");
    int len = (stream[p] << 8) | stream[p + 1];
    if (len < 2) bad("marker", "segment length below 2");
    need(static_cast<size_t>(len), "marker");
    size_t seg_start = p + 2, seg_end = p + len;
    p = seg_end;

    switch (m) {
      case 0xDB: {  // DQT
        SegmentReader r(stream, seg_start, seg_end, "DQT");
        while (r.remaining() > 0) {
          int pqtq = r.u8();
          if ((pqtq >> 4) == 1) bad("DQT", "16-bit quantization tables unsupported");
          if ((pqtq >> 4) > 1) bad("DQT", "invalid table precision");
          int id = pqtq & 15;
          if (id > 3) bad("DQT", "table id out of range");
          for (int i = 0; i < 64; ++i) qts[id].q[kZigzag[i]] = r.u8();
          qts[id].present = true;
        }
        break;
      }
      case 0xC4: {  // DHT
        SegmentReader r(stream, seg_start, seg_end, "DHT");
        while (r.remaining() > 0) {
          int tcth = r.u8();
          int tc = tcth >> 4, th = tcth & 15;
          if (tc > 1) bad("DHT", "arithmetic-coding table class unsupported");
          if (th > 3) bad("DHT", "table id out of range");
          DecHuff& hf = huffs[tc][th];
          int n = 0;
          hf.bits[0] = 0;
          for (int len2 = 1; len2 <= 16; ++len2) {
            hf.bits[len2] = r.u8();
            n += hf.bits[len2];
          }
          if (n > 256) bad("DHT", "more than 256 Huffman values");
          hf.vals.resize(n);
          for (int i = 0; i < n; ++i) hf.vals[i] = r.u8();
          hf.dec = build_huff_decoder(hf.bits, hf.vals.data());
          hf.present = true;
        }
        break;
      }
      case 0xC0: {  // SOF0: baseline
        if (have_sof) bad("SOF0", "multiple frame headers");
        SegmentReader r(stream, seg_start, seg_end, "SOF0");
        int precision = r.u8();
        if (precision != 8) bad("SOF0", "sample precision " + std::to_string(precision) +
                                            " unsupported (only 8)");
        height = r.u16();
        width = r.u16();
        if (height == 0 || width == 0) bad("SOF0", "zero image extent");
        int nc = r.u8();
        if (nc != 1 && nc != 3)
          bad("SOF0", std::to_string(nc) + "-component images unsupported");
        comps.resize(nc);
        for (DecComp& c : comps) {
          c.id = r.u8();
          int hv = r.u8();
          c.hs = hv >> 4;
          c.vs = hv & 15;
          if (c.hs < 1 || c.hs > 2 || c.vs < 1 || c.vs > 2)
            bad("SOF0", "sampling factors beyond 2 unsupported");
          c.tq = r.u8();
          if (c.tq > 3) bad("SOF0", "quantization table id out of range");
        }
        have_sof = true;
        break;
      }
      case 0xC2:
        bad("SOF2", "progressive JPEG unsupported");
      case 0xC1: case 0xC3: case 0xC5: case 0xC6: case 0xC7: case 0xC9:
      case 0xCA: case 0xCB: case 0xCD: case 0xCE: case 0xCF:
        bad("SOF", "non-baseline frame type unsupported");
      case 0xDD:
        bad("DRI", "restart intervals unsupported");
      case 0xDA: {  // SOS
        if (!have_sof) bad("SOS", "scan before frame header");
        SegmentReader r(stream, seg_start, seg_end, "SOS");
        int ns = r.u8();
        if (ns != static_cast<int>(comps.size()))
          bad("SOS", "scan must cover all frame components");
        for (int i = 0; i < ns; ++i) {
          int id = r.u8();
          int tbl = r.u8();
          DecComp* c = nullptr;
          for (DecComp& cc : comps)
            if (cc.id == id) c = &cc;
          if (!c) bad("SOS", "scan references unknown component id");
          c->dc_sel = tbl >> 4;
          c->ac_sel = tbl & 15;
          if (!huffs[0][c->dc_sel].present || !huffs[1][c->ac_sel].present)
            bad("SOS", "scan references an undefined Huffman table");
          if (!qts[c->tq].present) bad("SOS", "scan references an undefined quantization table");
        }
        r.u8();  // spectral start
        r.u8();  // spectral end
        r.u8();  // successive approximation

        int hmax = 1, vmax = 1;
        for (const DecComp& c : comps) {
          hmax = std::max(hmax, c.hs);
          vmax = std::max(vmax, c.vs);
        }
        int mcux = (width + 8 * hmax - 1) / (8 * hmax);
        int mcuy = (height + 8 * vmax - 1) / (8 * vmax);
        for (DecComp& c : comps) {
          c.pw = mcux * c.hs * 8;
          c.ph = mcuy * c.vs * 8;
          c.plane.assign(static_cast<size_t>(c.pw) * c.ph, 0.0);
          c.pred = 0;
        }

        BitReader br(stream, seg_end);
        double freq[64], pix[64];
        for (int my = 0; my < mcuy; ++my)
          for (int mx = 0; mx < mcux; ++mx)
            for (DecComp& c : comps)
              for (int by = 0; by < c.vs; ++by)
                for (int bx = 0; bx < c.hs; ++bx) {
                  int coef[64] = {};
                  int s = decode_symbol(br, huffs[0][c.dc_sel].dec);
                  c.pred += s ? extend(br.receive(s), s) : 0;
                  coef[0] = c.pred;
                  int k = 1;
                  while (k < 64) {
                    int rs = decode_symbol(br, huffs[1][c.ac_sel].dec);
                    int run = rs >> 4, size = rs & 15;
                    if (size == 0) {
                      if (run != 15) break;  // EOB
                      k += 16;               // ZRL
                      continue;
                    }
                    k += run;
                    if (k > 63) bad("SOS", "AC coefficient index overflow");
                    coef[k++] = extend(br.receive(size), size);
                  }
                  for (int i = 0; i < 64; ++i)
                    freq[kZigzag[i]] = static_cast<double>(coef[i]) * qts[c.tq].q[kZigzag[i]];
                  idct8x8(freq, pix);
                  // Planes materialize as 8-bit samples, mirroring the
                  // encoder's byte planes (and what other decoders hand to
                  // their upsampler).
                  int oy = (my * c.vs + by) * 8, ox = (mx * c.hs + bx) * 8;
                  for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x)
                      c.plane[static_cast<size_t>(oy + y) * c.pw + ox + x] =
                          clamp_round(pix[y * 8 + x] + 128.0);
                }
        p = br.byte_pos();
        have_scan = true;
        break;
      }
      default:
        break;  // APPn, COM, anything skippable
    }
  }

  // Materialize at declared geometry. Subsampled planes are upsampled with a
  // triangle filter (bilinear at the quarter-pixel offsets of centered
  // chroma siting — the 9:3:3:1 kernel mainstream decoders default to);
  // replication would cost several dB against those decoders at high quality.
  int hmax = 1, vmax = 1;
  for (const DecComp& c : comps) {
    hmax = std::max(hmax, c.hs);
    vmax = std::max(vmax, c.vs);
  }
  struct Tap {
    int near, far;
    double wfar;
  };
  auto axis_tap = [](int out, int ratio, int limit) {
    if (ratio == 1) return Tap{out, out, 0.0};
    int base = out >> 1;
    int other = std::clamp((out & 1) ? base + 1 : base - 1, 0, limit - 1);
    return Tap{base, other, 0.25};
  };
  Image out(height, width, comps.size() == 1 ? 1 : 3);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      if (comps.size() == 1) {
        out.at(y, x, 0) = clamp_round(comps[0].plane[static_cast<size_t>(y) * comps[0].pw + x]);
        continue;
      }
      auto sample = [&](const DecComp& c) -> double {
        int mh = (height * c.vs + vmax - 1) / vmax;  // meaningful extent, pre-padding
        int mw = (width * c.hs + hmax - 1) / hmax;
        Tap ty = axis_tap(y, vmax / c.vs, mh);
        Tap tx = axis_tap(x, hmax / c.hs, mw);
        auto at = [&](int yy, int xx) { return c.plane[static_cast<size_t>(yy) * c.pw + xx]; };
        double v = (1.0 - ty.wfar) * ((1.0 - tx.wfar) * at(ty.near, tx.near) +
                                      tx.wfar * at(ty.near, tx.far)) +
                   ty.wfar * ((1.0 - tx.wfar) * at(ty.far, tx.near) +
                              tx.wfar * at(ty.far, tx.far));
        // Upsampler output is an 8-bit sample too.
        return clamp_round(v);
      };
      double yv = sample(comps[0]), cb = sample(comps[1]) - 128.0, cr = sample(comps[2]) - 128.0;
      out.at(y, x, 0) = clamp_round(yv + 1.402 * cr);
      out.at(y, x, 1) = clamp_round(yv - 0.344136 * cb - 0.714136 * cr);
      out.at(y, x, 2) = clamp_round(yv + 1.772 * cb);
    }
  return out;
}

}  // namespace hst
