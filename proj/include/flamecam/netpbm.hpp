#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace flamecam {

/// 8-bit interleaved image. channels is 1 (PGM) or 3 (PPM, RGB order).
struct Image {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<uint8_t> pixels;

  uint8_t& at(int y, int x, int c = 0) {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  uint8_t at(int y, int x, int c = 0) const {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  bool operator==(const Image&) const = default;
};

Image make_image(int height, int width, int channels, uint8_t fill = 0);

// Binary P5/P6 with maxval 255.
Image read_netpbm(const std::string& path);
void write_netpbm(const Image& image, const std::string& path);
std::vector<uint8_t> encode_netpbm(const Image& image);
Image decode_netpbm(const std::vector<uint8_t>& bytes);

}  // namespace flamecam
