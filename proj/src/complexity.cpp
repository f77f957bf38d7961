#include "flamecam/complexity.hpp"

#include <iomanip>
#include <sstream>

#include "flamecam/error.hpp"

namespace flamecam {

OpCount layer_complexity(const Layer& layer, const ActShape& in, const ActShape& out) {
  auto inconsistent = [&](const std::string& what) {
    fail(Errc::kShapeMismatch, std::string(layer_kind_name(layer.kind)) + " #" +
                                   std::to_string(layer.id) + ": " + what);
  };
  switch (layer.kind) {
    case LayerKind::kConv2D: {
      if (in.c != layer.in_channels || out.c != layer.out_channels || in.h != out.h ||
          in.w != out.w)
        inconsistent("conv shapes do not match its parameters");
      const int64_t k2 = layer.kernel * layer.kernel;
      const int64_t hw = out.h * out.w;
      return {hw * in.c * out.c * k2, 2 * hw * (in.c * k2 + 1) * out.c};
    }
    case LayerKind::kMaxPool2x2: {
      if (out.h * 2 != in.h || out.w * 2 != in.w || out.c != in.c)
        inconsistent("pool output must be half the input");
      const int64_t flops = 4 * out.w * out.h * in.c;
      return {flops / 2, flops};
    }
    case LayerKind::kReLU:
    case LayerKind::kLeakyReLU: {
      if (!(in == out)) inconsistent("activation must preserve shape");
      const int64_t flops = in.w * in.h * in.c;
      return {flops / 2, flops};
    }
    case LayerKind::kUpsampleNearest2x:
      if (out.h != 2 * in.h || out.w != 2 * in.w || out.c != in.c)
        inconsistent("upsample output must be twice the input");
      return {};
    case LayerKind::kBatchNorm:
    case LayerKind::kSoftmax:
      if (!(in == out)) inconsistent("layer must preserve shape");
      return {};
    case LayerKind::kConcat:
      if (in.h != out.h || in.w != out.w) inconsistent("concat spatial mismatch");
      return {};
  }
  return {};
}

ComplexityReport model_complexity(const ModelGraph& graph, const ActShape& input_shape) {
  const auto shapes = infer_shapes(graph, input_shape);
  ComplexityReport r;
  r.input_shape = input_shape;
  for (size_t i = 0; i < graph.layers.size(); ++i) {
    const Layer& l = graph.layers[i];
    ComplexityRow row;
    row.layer_id = l.id;
    row.kind = l.kind;
    row.in_shape = l.inputs.empty() ? input_shape : shapes[graph.index_of(l.inputs[0])];
    row.out_shape = shapes[i];
    row.cost = layer_complexity(l, row.in_shape, row.out_shape);
    r.total.macs += row.cost.macs;
    r.total.flops += row.cost.flops;
    r.rows.push_back(row);
  }
  return r;
}

ComplexityReport model_complexity(const ModelGraph& graph) {
  return model_complexity(graph, graph.input_shape);
}

std::string report_to_csv(const ComplexityReport& report) {
  std::ostringstream os;
  os << "layer_id,kind,input,output,macs,flops\n";
  for (const auto& r : report.rows)
    os << r.layer_id << ',' << layer_kind_name(r.kind) << ','
       << act_shape_to_string(r.in_shape) << ',' << act_shape_to_string(r.out_shape) << ','
       << r.cost.macs << ',' << r.cost.flops << '\n';
  os << "total,,," << act_shape_to_string(report.input_shape) << ',' << report.total.macs
     << ',' << report.total.flops << '\n';
  return os.str();
}

std::string report_to_table(const ComplexityReport& report) {
  std::ostringstream os;
  auto line = [&](const std::string& id, const std::string& kind, const std::string& in,
                  const std::string& out, const std::string& macs, const std::string& flops) {
    os << std::left << std::setw(6) << id << std::setw(19) << kind << std::setw(14) << in
       << std::setw(14) << out << std::right << std::setw(16) << macs << std::setw(16)
       << flops << '\n';
  };
  line("id", "kind", "input", "output", "MACs", "FLOPs");
  for (const auto& r : report.rows)
    line(std::to_string(r.layer_id), layer_kind_name(r.kind), act_shape_to_string(r.in_shape),
         act_shape_to_string(r.out_shape), std::to_string(r.cost.macs),
         std::to_string(r.cost.flops));
  line("total", "", act_shape_to_string(report.input_shape), "",
       std::to_string(report.total.macs), std::to_string(report.total.flops));
  return os.str();
}

}  // namespace flamecam
