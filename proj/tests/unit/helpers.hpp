#pragma once

#include <cmath>
#include <filesystem>

#include "flamecam/graph.hpp"
#include "flamecam/rng.hpp"
#include "flamecam/tensor.hpp"

namespace testutil {

inline flamecam::Tensor random_tensor(const flamecam::Shape& shape, uint64_t seed,
                                      double lo = 0.0, double hi = 1.0) {
  flamecam::Xorshift64Star rng(seed);
  std::vector<float> v(static_cast<size_t>(flamecam::shape_product(shape)));
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return flamecam::Tensor(shape, std::move(v));
}

inline double max_abs_diff(const flamecam::Tensor& a, const flamecam::Tensor& b) {
  double m = 0.0;
  auto x = a.f32(), y = b.f32();
  for (size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(double(x[i]) - y[i]));
  return m;
}

inline flamecam::Layer conv(int id, std::vector<int> inputs, int64_t cin, int64_t cout,
                            int64_t k, std::vector<float> w, std::vector<float> b) {
  flamecam::Layer l;
  l.id = id;
  l.kind = flamecam::LayerKind::kConv2D;
  l.inputs = std::move(inputs);
  l.in_channels = cin;
  l.out_channels = cout;
  l.kernel = k;
  l.weights = flamecam::Tensor({cout, cin, k, k}, std::move(w));
  l.bias = flamecam::Tensor({cout}, std::move(b));
  return l;
}

inline flamecam::Layer simple(int id, flamecam::LayerKind kind, std::vector<int> inputs) {
  flamecam::Layer l;
  l.id = id;
  l.kind = kind;
  l.inputs = std::move(inputs);
  return l;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / ("flamecam_unit_" + name)) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

}  // namespace testutil
