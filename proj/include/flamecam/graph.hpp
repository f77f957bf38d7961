#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "flamecam/tensor.hpp"

namespace flamecam {

enum class LayerKind : uint8_t {
  kConv2D,
  kBatchNorm,
  kReLU,
  kLeakyReLU,
  kMaxPool2x2,
  kUpsampleNearest2x,
  kConcat,
  kSoftmax,
};

const char* layer_kind_name(LayerKind kind);
LayerKind layer_kind_from_name(const std::string& name);

struct ActShape {
  int64_t h = 0;
  int64_t w = 0;
  int64_t c = 0;

  int64_t elements() const { return h * w * c; }
  bool operator==(const ActShape&) const = default;
};

std::string act_shape_to_string(const ActShape& s);
ActShape parse_act_shape(const std::string& text);  // "HxWxC"

/// One node of the network. A layer with no inputs consumes the graph
/// input; there must be exactly one such layer.
struct Layer {
  int id = 0;
  LayerKind kind = LayerKind::kReLU;
  std::vector<int> inputs;

  // Conv2D: stride 1, zero "same" padding of K/2.
  int64_t in_channels = 0;
  int64_t out_channels = 0;
  int64_t kernel = 0;
  Tensor weights;  // (Cout, Cin, K, K); int8 per-channel after quantization
  Tensor bias;     // (Cout); int32 with scale s_in*s_w after quantization

  // BatchNorm (inference statistics).
  std::vector<float> gamma, beta, mean, var;
  double epsilon = 1e-5;

  // LeakyReLU
  float negative_slope = 0.1f;

  // Output activation parameters, present on every layer of a quantized
  // graph.
  std::optional<QuantParams> output_quant;

  bool operator==(const Layer&) const = default;
};

class ModelGraph {
 public:
  std::vector<Layer> layers;  // topological order
  ActShape input_shape;
  int num_classes = 0;
  std::optional<QuantParams> input_quant;  // set on quantized graphs

  bool operator==(const ModelGraph&) const = default;

  bool quantized() const { return input_quant.has_value(); }
  bool has_batchnorm() const;

  // Index into `layers` of the layer with this id; throws if absent.
  size_t index_of(int id) const;
  const Layer& layer(int id) const { return layers[index_of(id)]; }
  Layer& layer(int id) { return layers[index_of(id)]; }

  // Ids of layers that list `id` among their inputs.
  std::vector<int> consumers(int id) const;
  int next_id() const;
};

// Throws Errc::kInvalidGraph on any structural problem; returns the
// per-layer output shapes (aligned with graph.layers) on success.
std::vector<ActShape> validate_graph(const ModelGraph& graph);
std::vector<ActShape> infer_shapes(const ModelGraph& graph,
                                   const ActShape& input_shape);

struct UnetOptions {
  int depth = 2;
  int64_t base_filters = 8;
  ActShape input_shape{64, 64, 3};
  int num_classes = 4;
  bool with_batchnorm = false;
  uint64_t seed = 1;
  // Fraction of the filters of every prunable conv that are made inert
  // (zero weights/bias, and zero gamma/beta when followed by BatchNorm).
  double dead_fraction = 0.0;
};

/// Standard UNet: per encoder level two Conv3x3 [+BN] + ReLU then
/// MaxPool2x2; a bottleneck pair; a mirrored decoder of UpsampleNearest2x,
/// Concat with the matching encoder output and two Conv3x3 [+BN] + ReLU;
/// a 1x1 Conv head and Softmax. Filters double per level.
///
/// Weights come from Xorshift64Star(seed): conv weights uniform in
/// [-a, a] with a = sqrt(6 / (Cin*K*K)) (Kaiming uniform), conv biases
/// uniform in [-0.05, 0.05]; BN gamma in [0.5, 1.5], beta in [-0.1, 0.1],
/// mean in [-0.1, 0.1], var in [0.5, 1.5]. Layers are initialized in
/// topological order, each consuming its draws in storage order.
ModelGraph build_unet(const UnetOptions& options);

// Conv weights + bias, BN gamma + beta. BN running statistics excluded.
int64_t count_parameters(const ModelGraph& graph);

// Indices (into graph.layers) of the Conv2D layers, in topological order.
std::vector<size_t> conv_layer_indices(const ModelGraph& graph);

ModelGraph fold_batchnorm(const ModelGraph& graph);

}  // namespace flamecam
