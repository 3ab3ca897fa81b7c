#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "hst/image.hpp"

namespace hst {

// Baseline sequential JFIF codec. Color images go through full-range BT.601
// YCbCr with 4:2:0 chroma subsampling (2x2 box average); grayscale images are
// encoded as a single component. Quantization uses the standard luminance /
// chrominance tables scaled by the usual quality rule, entropy coding the
// standard Huffman tables. Decoding inverts every stage and rejects
// non-baseline features (progressive scans, restart intervals, 16-bit
// tables) with errors naming the offending marker segment.
std::vector<uint8_t> jpeg_encode(const Image& img, int quality);
Image jpeg_decode(const std::vector<uint8_t>& stream);

// Internals exposed for direct unit oracles.
namespace jpegdetail {

extern const uint8_t kZigzag[64];      // natural index of each zigzag position
extern const uint8_t kBaseLuma[64];    // base quant tables, natural order
extern const uint8_t kBaseChroma[64];
extern const uint8_t kDcLumaBits[17];  // code-length counts, 1-indexed
extern const uint8_t kDcLumaVals[12];
extern const uint8_t kDcChromaBits[17];
extern const uint8_t kDcChromaVals[12];
extern const uint8_t kAcLumaBits[17];
extern const uint8_t kAcLumaVals[162];
extern const uint8_t kAcChromaBits[17];
extern const uint8_t kAcChromaVals[162];

// Quality 1..100 -> scaled table (natural order): scale = 5000/q below 50,
// else 200-2q; entry' = clamp(floor((entry*scale + 50)/100), 1, 255).
std::array<int, 64> quant_table(const uint8_t* base, int quality);

// Orthonormal 8x8 DCT-II and its inverse (64-bit, separable); this scaling
// matches the transform the interchange format is defined against.
void fdct8x8(const double* in, double* out);
void idct8x8(const double* in, double* out);

// Canonical Huffman coding built from (bits, vals) as they appear in a DHT
// segment. Encoder: per-symbol code/length; decoder: per-length ranges.
struct HuffEncoder {
  uint16_t code[256] = {};
  uint8_t length[256] = {};
};
HuffEncoder build_huff_encoder(const uint8_t* bits, const uint8_t* vals, int nvals);

struct HuffDecoder {
  int mincode[17] = {};
  int maxcode[17] = {};  // -1 where no codes of that length exist
  int valptr[17] = {};
  const uint8_t* vals = nullptr;
};
HuffDecoder build_huff_decoder(const uint8_t* bits, const uint8_t* vals);

// Entropy-coded byte layer: 0xFF bytes are stuffed with 0x00 on write and
// unstuffed on read; the writer pads the final byte with 1-bits.
class BitWriter {
 public:
  explicit BitWriter(std::vector<uint8_t>& out) : out_(out) {}
  void put_bits(uint32_t v, int n);
  void put_code(const HuffEncoder& enc, int symbol);
  void flush();

 private:
  std::vector<uint8_t>& out_;
  uint32_t acc_ = 0;
  int nbits_ = 0;
};

class BitReader {
 public:
  BitReader(const std::vector<uint8_t>& stream, size_t pos) : s_(stream), pos_(pos) {}
  int get_bit();
  int receive(int n);
  size_t byte_pos() const;  // next whole-byte position after the bits read

 private:
  const std::vector<uint8_t>& s_;
  size_t pos_;
  uint32_t acc_ = 0;
  int nbits_ = 0;
};

int decode_symbol(BitReader& br, const HuffDecoder& dec);

}  // namespace jpegdetail
}  // namespace hst
