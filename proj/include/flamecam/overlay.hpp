#pragma once

#include <optional>
#include <string>

#include "flamecam/geometry.hpp"
#include "flamecam/netpbm.hpp"

namespace flamecam {

// Draws text with a built-in 5x7 font at integer scale; unknown glyphs
// render as blanks.
void draw_text(Image& image, int x, int y, const std::string& text, Rgb color,
               int scale = 1);
void draw_box(Image& image, const BoundingBox& box, Rgb color);

/// Colorized mask with the flame bounding box and "L= S= A=" readout.
Image render_overlay(const SegMask& mask,
                     const std::optional<FlameGeometry>& geometry);

}  // namespace flamecam
