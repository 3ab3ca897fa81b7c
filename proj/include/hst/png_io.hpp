#pragma once

#include <string>

#include "hst/image.hpp"

namespace hst {

// Minimal PNG codec: 8-bit grayscale or RGB, no interlacing, no palette,
// no alpha. Reading understands all five scanline filters; writing emits
// unfiltered rows. Unsupported variants raise errors naming the feature.
Image load_png(const std::string& path);
void save_png(const std::string& path, const Image& img);

// Geometry from IHDR alone, without inflating pixel data.
struct PngHeader {
  int width = 0, height = 0, channels = 0;
};
PngHeader read_png_header(const std::string& path);

}  // namespace hst
