#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flamecam/graph.hpp"

namespace flamecam {

struct OpCount {
  int64_t macs = 0;
  int64_t flops = 0;
  bool operator==(const OpCount&) const = default;
};

/// Per-layer cost. Conv: MACs = H*W*Cin*Cout*K^2 and
/// FLOPs = 2*H*W*(Cin*K^2 + 1)*Cout over output H, W. MaxPool:
/// FLOPs = K^2*Wout*Hout*Cin. ReLU/LeakyReLU: FLOPs = Win*Hin*Cin.
/// Pool and ReLU MACs are FLOPs/2 (integer division) even though neither
/// multiplies; that halving is the accounting convention, not a bug.
/// BatchNorm (fused at inference), upsampling, concat and softmax cost 0.
OpCount layer_complexity(const Layer& layer, const ActShape& in_shape,
                         const ActShape& out_shape);

struct ComplexityRow {
  int layer_id = 0;
  LayerKind kind = LayerKind::kReLU;
  ActShape in_shape;
  ActShape out_shape;
  OpCount cost;
};

struct ComplexityReport {
  ActShape input_shape;
  std::vector<ComplexityRow> rows;
  OpCount total;
};

ComplexityReport model_complexity(const ModelGraph& graph,
                                  const ActShape& input_shape);
ComplexityReport model_complexity(const ModelGraph& graph);

std::string report_to_csv(const ComplexityReport& report);
std::string report_to_table(const ComplexityReport& report);

}  // namespace flamecam
