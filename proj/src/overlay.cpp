#include "flamecam/overlay.hpp"

#include <cstdio>
#include <map>

namespace flamecam {

namespace {

using Glyph = std::array<uint8_t, 7>;

const std::map<char, Glyph>& font() {
  static const std::map<char, Glyph> glyphs{
      {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
      {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
      {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
      {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
      {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
      {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
      {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
      {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
      {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
      {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}},
      {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
      {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
      {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
      {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
      {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
      {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
      {'N', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}},
      {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
      {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
      {'m', {0x00, 0x00, 0x1A, 0x15, 0x15, 0x11, 0x11}},
  };
  return glyphs;
}

void put(Image& image, int x, int y, Rgb color) {
  if (x < 0 || y < 0 || x >= image.width || y >= image.height) return;
  if (image.channels == 1) {
    image.at(y, x, 0) = color[0];
    return;
  }
  for (int c = 0; c < 3; ++c) image.at(y, x, c) = color[c];
}

}  // namespace

void draw_text(Image& image, int x, int y, const std::string& text, Rgb color, int scale) {
  const auto& glyphs = font();
  for (size_t i = 0; i < text.size(); ++i) {
    auto it = glyphs.find(text[i]);
    if (it == glyphs.end()) continue;
    const int gx = x + static_cast<int>(i) * 6 * scale;
    for (int row = 0; row < 7; ++row)
      for (int col = 0; col < 5; ++col) {
        if (!(it->second[row] & (0x10 >> col))) continue;
        for (int sy = 0; sy < scale; ++sy)
          for (int sx = 0; sx < scale; ++sx)
            put(image, gx + col * scale + sx, y + row * scale + sy, color);
      }
  }
}

void draw_box(Image& image, const BoundingBox& box, Rgb color) {
  if (box.x1 < box.x0 || box.y1 < box.y0) return;
  for (int x = box.x0; x <= box.x1; ++x) {
    put(image, x, box.y0, color);
    put(image, x, box.y1, color);
  }
  for (int y = box.y0; y <= box.y1; ++y) {
    put(image, box.x0, y, color);
    put(image, box.x1, y, color);
  }
}

Image render_overlay(const SegMask& mask, const std::optional<FlameGeometry>& geometry) {
  Image out = colorize(mask);
  const Rgb green{0, 255, 0};
  if (!geometry) {
    draw_text(out, 2, 2, "NO FLAME", green);
    return out;
  }
  draw_box(out, geometry->bounding_box, green);
  char text[96];
  std::snprintf(text, sizeof text, "L=%.2fm S=%.2fm A=%.3fm2", geometry->length_m,
                geometry->liftoff_m, geometry->area_m2);
  draw_text(out, 2, 2, text, green);
  return out;
}

}  // namespace flamecam
