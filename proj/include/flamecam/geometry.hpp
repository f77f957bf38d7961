#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "flamecam/infer.hpp"

namespace flamecam {

enum class FlameAxis { kHorizontal, kVertical };  // +x, or -y (upward)

struct SceneCalib {
  double metres_per_pixel = 0.01;
  int nozzle_x = 0;
  int nozzle_y = 0;
  FlameAxis axis = FlameAxis::kHorizontal;
  int64_t min_component_px = 50;
};

struct BoundingBox {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;  // inclusive
  int width() const { return x1 - x0 + 1; }
  int height() const { return y1 - y0 + 1; }
  bool operator==(const BoundingBox&) const = default;
};

struct FlameGeometry {
  double length_m = 0.0;   // L
  double liftoff_m = 0.0;  // S
  double area_m2 = 0.0;    // A
  int64_t flame_px_count = 0;
  BoundingBox bounding_box;
  int component_count = 0;  // components surviving the size filter
  std::array<int64_t, 3> zone_px_count{};  // outer, middle, central
};

struct Components {
  int height = 0;
  int width = 0;
  std::vector<int32_t> labels;  // 0 = background, 1..count
  std::vector<int64_t> sizes;   // sizes[k-1] for label k
  int count() const { return static_cast<int>(sizes.size()); }
};

/// 8-connected labeling. Labels are assigned in order of each component's
/// first pixel in row-major scan.
Components connected_components(const std::vector<uint8_t>& binary, int height,
                                int width);

/// Largest 8-connected flame component (classes 1..3) after dropping
/// components under min_component_px. Returns nullopt when no flame remains.
std::optional<FlameGeometry> characterize(const SegMask& mask,
                                          const SceneCalib& calib);

}  // namespace flamecam
