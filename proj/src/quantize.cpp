#include "flamecam/quantize.hpp"

#include <array>
#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"

#include "flamecam/error.hpp"
#include "flamecam/infer.hpp"

namespace flamecam {

std::vector<ConvPair> find_equalization_pairs(const ModelGraph& graph) {
  std::vector<ConvPair> pairs;
  for (const auto& l : graph.layers) {
    if (l.kind != LayerKind::kConv2D) continue;
    const auto c1 = graph.consumers(l.id);
    if (c1.size() != 1) continue;
    const Layer& act = graph.layer(c1[0]);
    if (act.kind != LayerKind::kReLU && act.kind != LayerKind::kLeakyReLU) continue;
    const auto c2 = graph.consumers(act.id);
    if (c2.size() != 1) continue;
    const Layer& next = graph.layer(c2[0]);
    if (next.kind != LayerKind::kConv2D || next.inputs.size() != 1) continue;
    pairs.push_back({l.id, act.id, next.id});
  }
  return pairs;
}

ModelGraph equalize_cross_layer(const ModelGraph& graph, int passes) {
  if (graph.has_batchnorm())
    fail(Errc::kUnfoldedBatchNorm, "fold batchnorm before cross-layer equalization");
  if (graph.quantized()) fail(Errc::kInvalidArgument, "equalization needs a float graph");
  if (passes < 0) fail(Errc::kInvalidArgument, "passes must be >= 0");
  ModelGraph g = graph;
  const auto pairs = find_equalization_pairs(g);
  for (int pass = 0; pass < passes; ++pass) {
    for (const auto& p : pairs) {
      Layer& a = g.layer(p.first_conv);
      Layer& b = g.layer(p.second_conv);
      const int64_t row = a.in_channels * a.kernel * a.kernel;
      const int64_t kk = b.kernel * b.kernel;
      auto wa = a.weights.f32();
      auto ba = a.bias.f32();
      auto wb = b.weights.f32();
      for (int64_t i = 0; i < a.out_channels; ++i) {
        double r1 = std::abs(ba[i]);
        for (int64_t j = 0; j < row; ++j) r1 = std::max(r1, double{std::abs(wa[i * row + j])});
        double r2 = 0.0;
        for (int64_t o = 0; o < b.out_channels; ++o)
          for (int64_t j = 0; j < kk; ++j)
            r2 = std::max(r2, double{std::abs(wb[(o * b.in_channels + i) * kk + j])});
        if (r1 < 1e-12 || r2 < 1e-12) continue;
        const double s = std::sqrt(r1 / r2);
        for (int64_t j = 0; j < row; ++j)
          wa[i * row + j] = static_cast<float>(wa[i * row + j] / s);
        ba[i] = static_cast<float>(ba[i] / s);
        for (int64_t o = 0; o < b.out_channels; ++o)
          for (int64_t j = 0; j < kk; ++j) {
            float& v = wb[(o * b.in_channels + i) * kk + j];
            v = static_cast<float>(v * s);
          }
      }
    }
  }
  return g;
}

namespace {

void accumulate_minmax(TensorStats& s, std::span<const float> v) {
  if (v.empty()) return;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  if (s.count == 0) {
    s.min = *lo;
    s.max = *hi;
  } else {
    s.min = std::min(s.min, *lo);
    s.max = std::max(s.max, *hi);
  }
  s.count += static_cast<int64_t>(v.size());
}

void accumulate_histogram(TensorStats& s, std::span<const float> v) {
  const double width = (static_cast<double>(s.hist_hi) - s.hist_lo) / kHistogramBins;
  for (float x : v) {
    int64_t b = width > 0.0 ? static_cast<int64_t>((x - s.hist_lo) / width) : 0;
    b = std::clamp<int64_t>(b, 0, kHistogramBins - 1);
    ++s.histogram[b];
  }
}

// Value below which `q` of the histogram mass lies, linear within a bin.
double histogram_quantile(const TensorStats& s, double q) {
  int64_t total = 0;
  for (auto c : s.histogram) total += c;
  if (total == 0) return s.hist_lo;
  const double target = q * static_cast<double>(total);
  const double width = (static_cast<double>(s.hist_hi) - s.hist_lo) / s.histogram.size();
  double cum = 0.0;
  for (size_t b = 0; b < s.histogram.size(); ++b) {
    const double next = cum + static_cast<double>(s.histogram[b]);
    if (next >= target && s.histogram[b] > 0) {
      const double frac = (target - cum) / static_cast<double>(s.histogram[b]);
      return s.hist_lo + (static_cast<double>(b) + frac) * width;
    }
    cum = next;
  }
  return s.hist_hi;
}

}  // namespace

CalibrationStats calibrate(const ModelGraph& graph, const std::vector<Tensor>& frames,
                           bool with_histogram) {
  if (frames.empty()) fail(Errc::kEmptyInput, "calibration needs at least one frame");
  CalibrationStats stats;
  for (const auto& f : frames) {
    accumulate_minmax(stats.tensors[kInputTensorKey], f.f32());
    forward_f32(graph, f, [&](const Layer& l, const Tensor& t) {
      accumulate_minmax(stats.tensors[l.id], t.f32());
    });
    ++stats.frames;
  }
  if (with_histogram) {
    for (auto& [key, s] : stats.tensors) {
      s.hist_lo = s.min;
      s.hist_hi = s.max;
      s.histogram.assign(kHistogramBins, 0);
    }
    for (const auto& f : frames) {
      accumulate_histogram(stats.tensors[kInputTensorKey], f.f32());
      forward_f32(graph, f, [&](const Layer& l, const Tensor& t) {
        accumulate_histogram(stats.tensors[l.id], t.f32());
      });
    }
  }
  return stats;
}

CalibrationStats merge_stats(const CalibrationStats& a, const CalibrationStats& b) {
  CalibrationStats out = a;
  out.frames += b.frames;
  for (const auto& [key, sb] : b.tensors) {
    auto it = out.tensors.find(key);
    if (it == out.tensors.end() || it->second.count == 0) {
      out.tensors[key] = sb;
      continue;
    }
    TensorStats& sa = it->second;
    if (sb.count == 0) continue;
    TensorStats merged;
    merged.min = std::min(sa.min, sb.min);
    merged.max = std::max(sa.max, sb.max);
    merged.count = sa.count + sb.count;
    if (!sa.histogram.empty() && !sb.histogram.empty()) {
      merged.hist_lo = std::min(sa.hist_lo, sb.hist_lo);
      merged.hist_hi = std::max(sa.hist_hi, sb.hist_hi);
      merged.histogram.assign(kHistogramBins, 0);
      for (const TensorStats* src : std::array<const TensorStats*, 2>{&sa, &sb}) {
        if (src->hist_lo == merged.hist_lo && src->hist_hi == merged.hist_hi) {
          for (int i = 0; i < kHistogramBins; ++i) merged.histogram[i] += src->histogram[i];
          continue;
        }
        const double w = (static_cast<double>(src->hist_hi) - src->hist_lo) / kHistogramBins;
        const double mw = (static_cast<double>(merged.hist_hi) - merged.hist_lo) / kHistogramBins;
        for (int i = 0; i < kHistogramBins; ++i) {
          const double centre = src->hist_lo + (i + 0.5) * w;
          auto bin = mw > 0.0 ? static_cast<int64_t>((centre - merged.hist_lo) / mw) : 0;
          merged.histogram[std::clamp<int64_t>(bin, 0, kHistogramBins - 1)] += src->histogram[i];
        }
      }
    }
    sa = merged;
  }
  return out;
}

std::string stats_to_json(const CalibrationStats& stats) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [key, s] : stats.tensors) {
    nlohmann::json j{{"key", key}, {"min", s.min}, {"max", s.max}, {"count", s.count}};
    if (!s.histogram.empty()) {
      j["hist_lo"] = s.hist_lo;
      j["hist_hi"] = s.hist_hi;
      j["histogram"] = s.histogram;
    }
    tensors.push_back(std::move(j));
  }
  return nlohmann::json{{"frames", stats.frames}, {"tensors", tensors}}.dump(1);
}

CalibrationStats stats_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    CalibrationStats stats;
    stats.frames = j.at("frames").get<int64_t>();
    for (const auto& t : j.at("tensors")) {
      TensorStats s;
      s.min = t.at("min").get<float>();
      s.max = t.at("max").get<float>();
      s.count = t.at("count").get<int64_t>();
      if (t.contains("histogram")) {
        s.hist_lo = t.at("hist_lo").get<float>();
        s.hist_hi = t.at("hist_hi").get<float>();
        s.histogram = t.at("histogram").get<std::vector<int64_t>>();
      }
      stats.tensors[t.at("key").get<int>()] = std::move(s);
    }
    return stats;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::kInvalidArgument, std::string("bad calibration stats: ") + e.what());
  }
}

QuantParams activation_params(double lo, double hi) {
  lo = std::min(lo, 0.0);
  hi = std::max(hi, 0.0);
  if (!(hi - lo > 0.0)) return QuantParams::per_tensor(1e-8, 0);
  const double scale = std::max((hi - lo) / 255.0, 1e-8);
  const double zp = std::clamp(std::nearbyint(-128.0 - lo / scale), -128.0, 127.0);
  return QuantParams::per_tensor(scale, static_cast<int32_t>(zp));
}

QuantParams weight_params(const Tensor& weights) {
  const int64_t cout = weights.dim(0);
  const int64_t row = static_cast<int64_t>(weights.size()) / std::max<int64_t>(cout, 1);
  const auto w = weights.f32();
  std::vector<double> scales(static_cast<size_t>(cout));
  for (int64_t o = 0; o < cout; ++o) {
    double m = 0.0;
    for (int64_t j = 0; j < row; ++j) m = std::max(m, double{std::abs(w[o * row + j])});
    scales[o] = std::max(m / 127.0, 1e-8);
  }
  return QuantParams::per_channel(std::move(scales), 0);
}

ModelGraph quantize_model(const ModelGraph& graph, const CalibrationStats& stats,
                          const QuantizeOptions& options) {
  if (graph.quantized()) fail(Errc::kInvalidArgument, "graph is already quantized");
  if (graph.has_batchnorm())
    fail(Errc::kUnfoldedBatchNorm, "fold batchnorm before quantization");
  validate_graph(graph);

  auto range_of = [&](int key) -> std::pair<double, double> {
    auto it = stats.tensors.find(key);
    if (it == stats.tensors.end() || it->second.count == 0)
      fail(Errc::kMissingStats, key == kInputTensorKey
                                    ? std::string("no stats for the graph input")
                                    : "no stats for layer #" + std::to_string(key));
    const TensorStats& s = it->second;
    if (options.scheme == CalibrationScheme::kPercentile) {
      if (s.histogram.empty())
        fail(Errc::kMissingStats, "percentile calibration needs histograms");
      const double tail = 1.0 - options.percentile / 100.0;
      return {histogram_quantile(s, tail), histogram_quantile(s, 1.0 - tail)};
    }
    return {s.min, s.max};
  };

  ModelGraph q = graph;
  {
    const auto [lo, hi] = range_of(kInputTensorKey);
    q.input_quant = activation_params(lo, hi);
  }
  auto tensor_params = [&](const Layer& l) -> const QuantParams& {
    if (l.inputs.empty()) return *q.input_quant;
    return *q.layer(l.inputs[0]).output_quant;
  };

  for (auto& l : q.layers) {
    switch (l.kind) {
      case LayerKind::kMaxPool2x2:
      case LayerKind::kUpsampleNearest2x:
        l.output_quant = tensor_params(l);
        break;
      case LayerKind::kSoftmax:
        l.output_quant = activation_params(0.0, 1.0);
        break;
      case LayerKind::kConv2D: {
        const auto [lo, hi] = range_of(l.id);
        l.output_quant = activation_params(lo, hi);
        const double s_in = tensor_params(l).scale();
        QuantParams wq = weight_params(l.weights);
        const auto w = l.weights.f32();
        const auto b = l.bias.f32();
        const int64_t row = l.in_channels * l.kernel * l.kernel;
        // Keep |bias_q| well inside int32 for filters with tiny weights.
        for (int64_t o = 0; o < l.out_channels; ++o)
          wq.scales[o] = std::max(wq.scales[o], std::abs(b[o]) / (s_in * 0x1.0p30));
        std::vector<int8_t> wv(w.size());
        std::vector<int32_t> bv(b.size());
        std::vector<double> bias_scales(b.size());
        for (int64_t o = 0; o < l.out_channels; ++o) {
          for (int64_t j = 0; j < row; ++j) {
            const double v = std::nearbyint(w[o * row + j] / wq.scales[o]);
            wv[o * row + j] = static_cast<int8_t>(std::clamp(v, -127.0, 127.0));
          }
          bias_scales[o] = s_in * wq.scales[o];
          bv[o] = static_cast<int32_t>(std::nearbyint(b[o] / bias_scales[o]));
        }
        l.weights = Tensor(l.weights.shape(), std::move(wv), wq);
        l.bias = Tensor(l.bias.shape(), std::move(bv),
                        QuantParams::per_channel(std::move(bias_scales), 0));
        break;
      }
      default: {
        const auto [lo, hi] = range_of(l.id);
        l.output_quant = activation_params(lo, hi);
        break;
      }
    }
  }
  validate_graph(q);
  return q;
}

}  // namespace flamecam
