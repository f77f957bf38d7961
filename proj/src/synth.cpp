#include "flamecam/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "flamecam/error.hpp"
#include "flamecam/rng.hpp"

namespace flamecam {

namespace fs = std::filesystem;

void validate_scene_spec(const FlameSceneSpec& s) {
  auto bad = [](const std::string& what) { fail(Errc::kInvalidArgument, "scene spec: " + what); };
  if (s.height < 2 || s.width < 2) bad("image too small");
  if (s.nozzle_x < 0 || s.nozzle_x >= s.width || s.nozzle_y < 0 || s.nozzle_y >= s.height)
    bad("nozzle outside the image");
  if (s.liftoff_px < 0 || s.length_px < 1 || s.max_width_px < 1) bad("non-positive extent");
  const int half = s.max_width_px / 2;
  if (s.axis == FlameAxis::kHorizontal) {
    if (s.nozzle_x + s.liftoff_px + s.length_px >= s.width) bad("flame leaves the image");
    if (s.nozzle_y - half < 0 || s.nozzle_y + half >= s.height) bad("flame too wide");
  } else {
    if (s.nozzle_y - s.liftoff_px - s.length_px < 0) bad("flame leaves the image");
    if (s.nozzle_x - half < 0 || s.nozzle_x + half >= s.width) bad("flame too wide");
  }
  const auto& v = s.intensity;
  if (!(v[3] > v[2] && v[2] > v[1] && v[1] > v[0]) || v[0] < 0 || v[3] > 255)
    bad("intensities must satisfy 0 <= background < outer < middle < central <= 255");
  if (s.noise_sigma < 0.0) bad("negative noise");
  if (!(s.metres_per_pixel > 0.0)) bad("metres_per_pixel must be > 0");
}

FlameScene generate_scene(const FlameSceneSpec& s) {
  validate_scene_spec(s);
  // max over t in [0,1] of t*sqrt(1-t), reached at t = 2/3
  const double peak = (2.0 / 3.0) * std::sqrt(1.0 / 3.0);
  const double half_max = s.max_width_px / 2.0;

  FlameScene scene;
  scene.mask = SegMask(s.height, s.width);
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      int u, v;
      if (s.axis == FlameAxis::kHorizontal) {
        u = x - (s.nozzle_x + s.liftoff_px);
        v = y - s.nozzle_y;
      } else {
        u = (s.nozzle_y - s.liftoff_px) - y;
        v = x - s.nozzle_x;
      }
      if (u < 0 || u > s.length_px) continue;
      const double t = static_cast<double>(u) / s.length_px;
      const double half = half_max * t * std::sqrt(1.0 - t) / peak;
      const double av = std::abs(v);
      if (av > half) continue;
      uint8_t cls = kOuterZone;
      if (t >= 0.25 && t <= 0.85 && av <= 0.35 * half) cls = kCentralZone;
      else if (t >= 0.12 && t <= 0.95 && av <= 0.65 * half) cls = kMiddleZone;
      scene.mask.at(y, x) = cls;
    }
  }

  scene.frame = make_image(s.height, s.width, 1);
  Xorshift64Star rng(s.seed);
  for (size_t i = 0; i < scene.frame.pixels.size(); ++i) {
    double value = s.intensity[scene.mask.labels[i]];
    if (s.noise_sigma > 0.0) value += s.noise_sigma * rng.normal();
    scene.frame.pixels[i] = static_cast<uint8_t>(std::clamp(std::nearbyint(value), 0.0, 255.0));
  }

  FlameGeometry& g = scene.truth;
  BoundingBox box{s.width, s.height, -1, -1};
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x) {
      const uint8_t c = scene.mask.at(y, x);
      if (!c) continue;
      ++g.flame_px_count;
      ++g.zone_px_count[c - 1];
      box.x0 = std::min(box.x0, x);
      box.y0 = std::min(box.y0, y);
      box.x1 = std::max(box.x1, x);
      box.y1 = std::max(box.y1, y);
    }
  g.bounding_box = box;
  g.component_count = 1;
  g.length_m = s.length_px * s.metres_per_pixel;
  g.liftoff_m = s.liftoff_px * s.metres_per_pixel;
  g.area_m2 = static_cast<double>(g.flame_px_count) * s.metres_per_pixel * s.metres_per_pixel;
  return scene;
}

SceneCalib calib_for(const FlameSceneSpec& spec) {
  SceneCalib c;
  c.metres_per_pixel = spec.metres_per_pixel;
  c.nozzle_x = spec.nozzle_x;
  c.nozzle_y = spec.nozzle_y;
  c.axis = spec.axis;
  return c;
}

DatasetSplit default_split(int n) {
  DatasetSplit s;
  s.train = static_cast<int>(std::lround(n * 96.0 / 201.0));
  s.val = static_cast<int>(std::lround(n * 50.0 / 201.0));
  s.test = n - s.train - s.val;
  return s;
}

std::vector<ManifestRow> generate_dataset(int n, const FlameSceneSpec& base,
                                          const DatasetSplit& split) {
  if (n < 1) fail(Errc::kInvalidArgument, "dataset needs at least one scene");
  if (split.train < 0 || split.val < 0 || split.test < 0 ||
      split.train + split.val + split.test > n)
    fail(Errc::kInvalidArgument, "split exceeds n");

  const bool horizontal = base.axis == FlameAxis::kHorizontal;
  const int room = horizontal ? base.width - 1 - base.nozzle_x : base.nozzle_y;
  const int lateral = horizontal ? 2 * std::min(base.nozzle_y, base.height - 1 - base.nozzle_y)
                                 : 2 * std::min(base.nozzle_x, base.width - 1 - base.nozzle_x);
  const int train_end = n - split.val - split.test;

  std::vector<ManifestRow> rows;
  for (int i = 0; i < n; ++i) {
    FlameSceneSpec s = base;
    s.seed = base.seed + static_cast<uint64_t>(i);
    Xorshift64Star rng(splitmix64(s.seed) ^ 0x5CE7E5ull);
    s.liftoff_px = static_cast<int>(std::lround(rng.uniform(0.03, 0.15) * room));
    s.length_px = std::max(1, static_cast<int>(std::lround(rng.uniform(0.45, 0.80) * room)));
    s.max_width_px = std::max(1, static_cast<int>(std::lround(rng.uniform(0.3, 0.8) * lateral)));
    validate_scene_spec(s);

    ManifestRow r;
    r.index = i;
    r.spec = s;
    r.split = i < train_end ? "train" : (i < train_end + split.val ? "val" : "test");
    r.seed = s.seed;
    r.nozzle_x = s.nozzle_x;
    r.nozzle_y = s.nozzle_y;
    r.metres_per_pixel = s.metres_per_pixel;
    r.length_m = s.length_px * s.metres_per_pixel;
    r.liftoff_m = s.liftoff_px * s.metres_per_pixel;
    std::ostringstream name;
    name << "scene_" << std::setw(4) << std::setfill('0') << i << ".pgm";
    r.frame_path = "frames/" + name.str();
    r.mask_path = "masks/" + name.str();
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<ManifestRow> write_dataset(const std::string& dir, int n, const FlameSceneSpec& base,
                                       const DatasetSplit& split) {
  auto rows = generate_dataset(n, base, split);
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "frames", ec);
  fs::create_directories(fs::path(dir) / "masks", ec);
  if (ec) fail(Errc::kIo, "cannot create dataset directories under '" + dir + "'");
  for (auto& r : rows) {
    const FlameScene scene = generate_scene(r.spec);
    r.area_m2 = scene.truth.area_m2;
    write_netpbm(scene.frame, (fs::path(dir) / r.frame_path).string());
    write_netpbm(mask_to_image(scene.mask), (fs::path(dir) / r.mask_path).string());
  }
  std::ofstream os(fs::path(dir) / "manifest.csv");
  if (!os) fail(Errc::kIo, "cannot write manifest under '" + dir + "'");
  os << manifest_to_csv(rows);
  return rows;
}

std::string manifest_to_csv(const std::vector<ManifestRow>& rows) {
  std::ostringstream os;
  os << "path,split,L_m,S_m,A_m2,seed,mask_path,nozzle_x,nozzle_y,mpp,axis,height,width,"
        "liftoff_px,length_px,max_width_px,noise_sigma\n";
  os << std::setprecision(17);
  for (const auto& r : rows) {
    const auto& s = r.spec;
    os << r.frame_path << ',' << r.split << ',' << r.length_m << ',' << r.liftoff_m << ','
       << r.area_m2 << ',' << r.seed << ',' << r.mask_path << ',' << r.nozzle_x << ','
       << r.nozzle_y << ',' << r.metres_per_pixel << ','
       << (s.axis == FlameAxis::kHorizontal ? "h" : "v") << ',' << s.height << ','
       << s.width << ',' << s.liftoff_px << ',' << s.length_px << ',' << s.max_width_px
       << ',' << s.noise_sigma << '\n';
  }
  return os.str();
}

std::vector<ManifestRow> read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(Errc::kIo, "cannot open manifest '" + path + "'");
  const fs::path root = fs::path(path).parent_path();
  std::string line;
  std::getline(is, line);
  std::vector<ManifestRow> rows;
  int index = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() < 17) fail(Errc::kInvalidArgument, "manifest row has too few columns");
    try {
      ManifestRow r;
      r.index = index++;
      r.frame_path = (root / f[0]).string();
      r.split = f[1];
      r.length_m = std::stod(f[2]);
      r.liftoff_m = std::stod(f[3]);
      r.area_m2 = std::stod(f[4]);
      r.seed = std::stoull(f[5]);
      r.mask_path = (root / f[6]).string();
      r.nozzle_x = std::stoi(f[7]);
      r.nozzle_y = std::stoi(f[8]);
      r.metres_per_pixel = std::stod(f[9]);
      FlameSceneSpec& s = r.spec;
      s.seed = r.seed;
      s.axis = f[10] == "v" ? FlameAxis::kVertical : FlameAxis::kHorizontal;
      s.height = std::stoi(f[11]);
      s.width = std::stoi(f[12]);
      s.liftoff_px = std::stoi(f[13]);
      s.length_px = std::stoi(f[14]);
      s.max_width_px = std::stoi(f[15]);
      s.noise_sigma = std::stod(f[16]);
      s.nozzle_x = r.nozzle_x;
      s.nozzle_y = r.nozzle_y;
      s.metres_per_pixel = r.metres_per_pixel;
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      fail(Errc::kInvalidArgument, "malformed manifest row: " + line);
    }
  }
  return rows;
}

AugmentParams draw_augment_params(uint64_t seed, int height, int width) {
  Xorshift64Star rng(seed);
  AugmentParams p;
  p.vertical_flip = rng.uniform() < 0.5;
  p.horizontal_flip = rng.uniform() < 0.5;
  if (rng.uniform() < 0.66)
    p.shift_x = static_cast<int>(std::lround(rng.uniform(-0.1, 0.1) * width));
  if (rng.uniform() < 0.66)
    p.shift_y = static_cast<int>(std::lround(rng.uniform(-0.1, 0.1) * height));
  if (rng.uniform() < 0.66) p.rotation_deg = rng.uniform(-30.0, 30.0);
  return p;
}

namespace {

template <typename Get, typename Set>
void remap(int h, int w, Get&& source_of, Set&& set) {
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) set(y, x, source_of(y, x));
}

}  // namespace

Augmented apply_augment(const Image& frame, const SegMask& mask, const AugmentParams& p,
                        uint8_t background) {
  if (frame.height != mask.height || frame.width != mask.width)
    fail(Errc::kShapeMismatch, "frame and mask differ in size");
  const int h = frame.height, w = frame.width, ch = frame.channels;
  Augmented out{frame, mask};

  // Integer remap shared by flips and shifts.
  auto integer_map = [&](auto&& src_xy) {
    Image f = make_image(h, w, ch, background);
    SegMask m(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const auto [sy, sx] = src_xy(y, x);
        if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
        for (int c = 0; c < ch; ++c) f.at(y, x, c) = out.frame.at(sy, sx, c);
        m.at(y, x) = out.mask.at(sy, sx);
      }
    out.frame = std::move(f);
    out.mask = std::move(m);
  };

  if (p.vertical_flip) integer_map([&](int y, int x) { return std::pair{h - 1 - y, x}; });
  if (p.horizontal_flip) integer_map([&](int y, int x) { return std::pair{y, w - 1 - x}; });
  if (p.shift_x || p.shift_y)
    integer_map([&](int y, int x) { return std::pair{y - p.shift_y, x - p.shift_x}; });

  if (p.rotation_deg != 0.0) {
    const double th = p.rotation_deg * M_PI / 180.0;
    const double cs = std::cos(th), sn = std::sin(th);
    const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    Image f = make_image(h, w, ch, background);
    SegMask m(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        // inverse rotation of the output pixel into the source
        const double dx = x - cx, dy = y - cy;
        const double sx = cs * dx + sn * dy + cx;
        const double sy = -sn * dx + cs * dy + cy;
        const long nx = std::lround(sx), ny = std::lround(sy);
        if (nx >= 0 && nx < w && ny >= 0 && ny < h)
          m.at(y, x) = out.mask.at(static_cast<int>(ny), static_cast<int>(nx));
        const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
        const double fx = sx - x0, fy = sy - y0;
        for (int c = 0; c < ch; ++c) {
          auto px = [&](int yy, int xx) -> double {
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) return background;
            return out.frame.at(yy, xx, c);
          };
          const double v = (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
                           fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
          f.at(y, x, c) = static_cast<uint8_t>(std::clamp(std::nearbyint(v), 0.0, 255.0));
        }
      }
    out.frame = std::move(f);
    out.mask = std::move(m);
  }
  return out;
}

Augmented augment(const Image& frame, const SegMask& mask, uint64_t seed, uint8_t background) {
  return apply_augment(frame, mask, draw_augment_params(seed, frame.height, frame.width),
                       background);
}

}  // namespace flamecam
