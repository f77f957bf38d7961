#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flamecam/geometry.hpp"
#include "flamecam/infer.hpp"
#include "flamecam/netpbm.hpp"

namespace flamecam {

struct FlameSceneSpec {
  uint64_t seed = 1;
  int height = 480;
  int width = 640;
  int nozzle_x = 40;
  int nozzle_y = 240;
  FlameAxis axis = FlameAxis::kHorizontal;
  int liftoff_px = 40;
  int length_px = 300;
  int max_width_px = 120;
  // Intensity per class: background, outer, middle, central.
  std::array<int, 4> intensity{20, 120, 180, 230};
  double noise_sigma = 6.0;
  double metres_per_pixel = 0.01;
};

struct FlameScene {
  Image frame;  // single channel pseudo-IR
  SegMask mask;
  FlameGeometry truth;
};

void validate_scene_spec(const FlameSceneSpec& spec);

/// Three nested teardrop zones along the flame axis, starting at
/// nozzle + lift-off. With u in [0, 1] the normalized axial position,
/// the outer half-width is (max_width/2) * u*sqrt(1-u) / max(u*sqrt(1-u));
/// the middle zone covers 0.65 of that half-width for u in [0.12, 0.95] and
/// the central zone 0.35 of it for u in [0.25, 0.85]. The axis pixel is
/// always flame, so the flame spans exactly length_px + 1 pixels.
FlameScene generate_scene(const FlameSceneSpec& spec);

SceneCalib calib_for(const FlameSceneSpec& spec);

struct DatasetSplit {
  int train = 96;
  int val = 50;
  int test = 55;
};

// Proportions 96/50/55 of n (exact for n = 201).
DatasetSplit default_split(int n);

struct ManifestRow {
  int index = 0;
  std::string frame_path;
  std::string mask_path;
  std::string split;
  double length_m = 0.0;
  double liftoff_m = 0.0;
  double area_m2 = 0.0;
  uint64_t seed = 0;
  int nozzle_x = 0;
  int nozzle_y = 0;
  double metres_per_pixel = 0.0;
  FlameSceneSpec spec;
};

/// n scenes with lift-off, length and width drawn per index from a stream
/// seeded by base.seed + index. Scenes are assigned to train, val, test in
/// index order; a split summing to less than n puts the remainder in train.
std::vector<ManifestRow> generate_dataset(int n, const FlameSceneSpec& base,
                                          const DatasetSplit& split);

// Writes frames/ and masks/ PGMs plus manifest.csv under `dir`.
std::vector<ManifestRow> write_dataset(const std::string& dir, int n,
                                       const FlameSceneSpec& base,
                                       const DatasetSplit& split);
std::vector<ManifestRow> read_manifest(const std::string& path);
std::string manifest_to_csv(const std::vector<ManifestRow>& rows);

struct AugmentParams {
  bool vertical_flip = false;
  bool horizontal_flip = false;
  int shift_x = 0;  // pixels
  int shift_y = 0;
  double rotation_deg = 0.0;

  bool is_identity() const {
    return !vertical_flip && !horizontal_flip && shift_x == 0 &&
           shift_y == 0 && rotation_deg == 0.0;
  }
};

/// Draw order from Xorshift64Star(seed): vflip (p 0.5), hflip (p 0.5),
/// hshift (p 0.66, +-10% of width), vshift (p 0.66, +-10% of height),
/// rotation (p 0.66, +-30 deg). Each step draws its probability check
/// and then, only if applied, its magnitude.
AugmentParams draw_augment_params(uint64_t seed, int height, int width);

struct Augmented {
  Image frame;
  SegMask mask;
};

/// Flips, then integer shifts, then rotation about the image centre.
/// Frame resampled bilinearly with background fill; mask with nearest
/// neighbour and class 0 fill.
Augmented apply_augment(const Image& frame, const SegMask& mask,
                        const AugmentParams& params,
                        uint8_t background_value = 20);
Augmented augment(const Image& frame, const SegMask& mask, uint64_t seed,
                  uint8_t background_value = 20);

}  // namespace flamecam
