#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "flamecam/graph.hpp"
#include "flamecam/netpbm.hpp"
#include "flamecam/tensor.hpp"

namespace flamecam {

enum FlameClass : uint8_t {
  kBackground = 0,
  kOuterZone = 1,
  kMiddleZone = 2,
  kCentralZone = 3,
};
inline constexpr int kNumFlameClasses = 4;

struct SegMask {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> labels;

  SegMask() = default;
  SegMask(int h, int w, uint8_t fill = 0)
      : height(h), width(w), labels(static_cast<size_t>(h) * w, fill) {}

  uint8_t& at(int y, int x) { return labels[static_cast<size_t>(y) * width + x]; }
  uint8_t at(int y, int x) const {
    return labels[static_cast<size_t>(y) * width + x];
  }
  bool operator==(const SegMask&) const = default;
};

Image mask_to_image(const SegMask& mask);
SegMask image_to_mask(const Image& image, int num_classes = kNumFlameClasses);

// Called with every layer output during a forward pass.
using LayerObserver = std::function<void(const Layer&, const Tensor&)>;

/// Float forward pass. Input is (H, W, C) float32 matching the graph input
/// shape; returns per-pixel class probabilities (H, W, num_classes).
Tensor forward_f32(const ModelGraph& graph, const Tensor& input,
                   const LayerObserver& observer = nullptr);

/// Integer forward pass of a quantized graph. Input is int8 carrying the
/// graph's input QuantParams. Conv accumulates in int32; a ReLU/LeakyReLU
/// that is the sole consumer of a conv is applied before requantization.
/// Returns float probabilities (Softmax runs on dequantized logits).
///
/// Overflow: |acc| <= Cin*K*K*255*127 + |bias|, which stays below 2^31
/// while Cin*K*K < 66000.
Tensor forward_i8(const ModelGraph& graph, const Tensor& input);

Tensor quantize_input(const ModelGraph& graph, const Tensor& input);

// Dispatches to forward_f32 or quantize_input + forward_i8.
Tensor run_model(const ModelGraph& graph, const Tensor& input);

/// Camera frame (480x640x3 uint8, BGR) to model input: channel swap to RGB,
/// exact 2x2 box downscale with round-half-up, scaled to [0, 1].
/// `frame` is (2H, 2W, 3) uint8 stored in an Image; output is (H, W, 3).
Tensor preprocess(const Image& bgr_frame, int out_height = 240,
                  int out_width = 320);

// Argmax per pixel, ties to the lower class index.
SegMask postprocess(const Tensor& probs);

using Rgb = std::array<uint8_t, 3>;
inline constexpr std::array<Rgb, kNumFlameClasses> kPalette{{
    {0, 0, 0},        // background
    {255, 64, 0},     // outer zone
    {255, 200, 0},    // middle zone
    {255, 255, 255},  // central zone
}};

Image colorize(const SegMask& mask);
// Inverse palette lookup; throws on colors outside the palette.
SegMask decolorize(const Image& image);

// Image (1 or 3 channel uint8) to a BGR-ordered 3 channel image, as a
// camera driver would deliver it.
Image to_bgr_frame(const Image& image);

}  // namespace flamecam
