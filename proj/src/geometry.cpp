#include "flamecam/geometry.hpp"

#include <algorithm>
#include <limits>

#include "flamecam/error.hpp"

namespace flamecam {

Components connected_components(const std::vector<uint8_t>& binary, int height, int width) {
  if (static_cast<size_t>(height) * width != binary.size())
    fail(Errc::kShapeMismatch, "binary mask size mismatch");
  Components cc;
  cc.height = height;
  cc.width = width;
  cc.labels.assign(binary.size(), 0);
  std::vector<int32_t> stack;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const size_t seed = static_cast<size_t>(y) * width + x;
      if (!binary[seed] || cc.labels[seed]) continue;
      const auto label = static_cast<int32_t>(cc.sizes.size() + 1);
      int64_t size = 0;
      cc.labels[seed] = label;
      stack.push_back(static_cast<int32_t>(seed));
      while (!stack.empty()) {
        const int32_t p = stack.back();
        stack.pop_back();
        ++size;
        const int py = p / width, px = p % width;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = py + dy, nx = px + dx;
            if (ny < 0 || ny >= height || nx < 0 || nx >= width) continue;
            const size_t q = static_cast<size_t>(ny) * width + nx;
            if (binary[q] && !cc.labels[q]) {
              cc.labels[q] = label;
              stack.push_back(static_cast<int32_t>(q));
            }
          }
      }
      cc.sizes.push_back(size);
    }
  }
  return cc;
}

std::optional<FlameGeometry> characterize(const SegMask& mask, const SceneCalib& calib) {
  if (!(calib.metres_per_pixel > 0.0))
    fail(Errc::kInvalidArgument, "metres_per_pixel must be > 0");
  if (calib.nozzle_x < 0 || calib.nozzle_x >= mask.width || calib.nozzle_y < 0 ||
      calib.nozzle_y >= mask.height)
    fail(Errc::kInvalidArgument, "nozzle lies outside the image");

  std::vector<uint8_t> binary(mask.labels.size());
  for (size_t i = 0; i < binary.size(); ++i) binary[i] = mask.labels[i] != kBackground;
  const Components cc = connected_components(binary, mask.height, mask.width);

  int chosen = 0;
  int survivors = 0;
  for (int k = 1; k <= cc.count(); ++k) {
    if (cc.sizes[k - 1] < calib.min_component_px) continue;
    ++survivors;
    if (chosen == 0 || cc.sizes[k - 1] > cc.sizes[chosen - 1]) chosen = k;
  }
  if (chosen == 0) return std::nullopt;

  FlameGeometry g;
  g.component_count = survivors;
  g.flame_px_count = cc.sizes[chosen - 1];
  BoundingBox box{mask.width, mask.height, -1, -1};
  int64_t base = std::numeric_limits<int64_t>::max();
  int64_t tip = std::numeric_limits<int64_t>::min();
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      const size_t i = static_cast<size_t>(y) * mask.width + x;
      if (cc.labels[i] != chosen) continue;
      box.x0 = std::min(box.x0, x);
      box.y0 = std::min(box.y0, y);
      box.x1 = std::max(box.x1, x);
      box.y1 = std::max(box.y1, y);
      ++g.zone_px_count[mask.labels[i] - 1];
      const int64_t axial = calib.axis == FlameAxis::kHorizontal ? x - calib.nozzle_x
                                                                 : calib.nozzle_y - y;
      base = std::min(base, axial);
      tip = std::max(tip, axial);
    }
  const double mpp = calib.metres_per_pixel;
  g.bounding_box = box;
  g.length_m = static_cast<double>(tip - base) * mpp;
  g.liftoff_m = static_cast<double>(std::max<int64_t>(0, base)) * mpp;
  g.area_m2 = static_cast<double>(g.flame_px_count) * mpp * mpp;
  return g;
}

}  // namespace flamecam
