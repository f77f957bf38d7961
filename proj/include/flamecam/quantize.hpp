#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "flamecam/graph.hpp"
#include "flamecam/tensor.hpp"

namespace flamecam {

/// Cross-layer equalization over every Conv -> (Leaky)ReLU -> Conv chain
/// where each link is the sole consumer of the previous one. One pass is a
/// full sweep over all such pairs.
ModelGraph equalize_cross_layer(const ModelGraph& graph, int passes = 30);

struct ConvPair {
  int first_conv;
  int activation;
  int second_conv;
};
std::vector<ConvPair> find_equalization_pairs(const ModelGraph& graph);

inline constexpr int kHistogramBins = 2048;

struct TensorStats {
  float min = 0.0f;
  float max = 0.0f;
  int64_t count = 0;
  // Optional histogram over [hist_lo, hist_hi].
  float hist_lo = 0.0f;
  float hist_hi = 0.0f;
  std::vector<int64_t> histogram;

  bool operator==(const TensorStats&) const = default;
};

// Key -1 is the graph input; other keys are layer ids.
struct CalibrationStats {
  std::map<int, TensorStats> tensors;
  int64_t frames = 0;

  bool operator==(const CalibrationStats&) const = default;
};

inline constexpr int kInputTensorKey = -1;

CalibrationStats calibrate(const ModelGraph& graph,
                           const std::vector<Tensor>& frames,
                           bool with_histogram = false);

// Associative and commutative. Histograms are re-binned onto the union range.
CalibrationStats merge_stats(const CalibrationStats& a,
                             const CalibrationStats& b);

std::string stats_to_json(const CalibrationStats& stats);
CalibrationStats stats_from_json(const std::string& text);

enum class CalibrationScheme { kMinMax, kPercentile };

struct QuantizeOptions {
  CalibrationScheme scheme = CalibrationScheme::kMinMax;
  double percentile = 99.9;
};

// Asymmetric int8 params covering [lo, hi] extended to include 0.
QuantParams activation_params(double lo, double hi);
// Symmetric int8, zero_point 0, scale = max|w| / 127 per output channel.
QuantParams weight_params(const Tensor& weights);

ModelGraph quantize_model(const ModelGraph& graph,
                          const CalibrationStats& stats,
                          const QuantizeOptions& options = {});

}  // namespace flamecam
