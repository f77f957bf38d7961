#include "flamecam/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "flamecam/error.hpp"
#include "flamecam/rng.hpp"

namespace flamecam {

namespace {

constexpr std::pair<LayerKind, const char*> kKindNames[] = {
    {LayerKind::kConv2D, "Conv2D"},
    {LayerKind::kBatchNorm, "BatchNorm"},
    {LayerKind::kReLU, "ReLU"},
    {LayerKind::kLeakyReLU, "LeakyReLU"},
    {LayerKind::kMaxPool2x2, "MaxPool2x2"},
    {LayerKind::kUpsampleNearest2x, "UpsampleNearest2x"},
    {LayerKind::kConcat, "Concat"},
    {LayerKind::kSoftmax, "Softmax"},
};

[[noreturn]] void invalid(const Layer& layer, const std::string& what) {
  fail(Errc::kInvalidGraph, std::string(layer_kind_name(layer.kind)) + " #" +
                                std::to_string(layer.id) + ": " + what);
}

}  // namespace

const char* layer_kind_name(LayerKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "?";
}

LayerKind layer_kind_from_name(const std::string& name) {
  for (const auto& [k, n] : kKindNames)
    if (name == n) return k;
  fail(Errc::kMalformedHeader, "unknown layer kind '" + name + "'");
}

std::string act_shape_to_string(const ActShape& s) {
  std::ostringstream os;
  os << s.h << 'x' << s.w << 'x' << s.c;
  return os.str();
}

ActShape parse_act_shape(const std::string& text) {
  ActShape s;
  char x1 = 0, x2 = 0;
  std::istringstream is(text);
  if (!(is >> s.h >> x1 >> s.w >> x2 >> s.c) || x1 != 'x' || x2 != 'x' ||
      s.h <= 0 || s.w <= 0 || s.c <= 0 || !is.eof())
    fail(Errc::kInvalidArgument, "expected HxWxC, got '" + text + "'");
  return s;
}

bool ModelGraph::has_batchnorm() const {
  return std::any_of(layers.begin(), layers.end(), [](const Layer& l) {
    return l.kind == LayerKind::kBatchNorm;
  });
}

size_t ModelGraph::index_of(int id) const {
  for (size_t i = 0; i < layers.size(); ++i)
    if (layers[i].id == id) return i;
  fail(Errc::kInvalidGraph, "no layer with id " + std::to_string(id));
}

std::vector<int> ModelGraph::consumers(int id) const {
  std::vector<int> out;
  for (const auto& l : layers)
    if (std::find(l.inputs.begin(), l.inputs.end(), id) != l.inputs.end())
      out.push_back(l.id);
  return out;
}

int ModelGraph::next_id() const {
  int id = 0;
  for (const auto& l : layers) id = std::max(id, l.id + 1);
  return id;
}

std::vector<ActShape> infer_shapes(const ModelGraph& graph,
                                   const ActShape& input_shape) {
  if (graph.layers.empty()) fail(Errc::kInvalidGraph, "graph has no layers");
  std::vector<ActShape> shapes(graph.layers.size());
  std::unordered_map<int, size_t> position;
  std::set<int> consumed;
  int entry_layers = 0;

  for (size_t i = 0; i < graph.layers.size(); ++i) {
    const Layer& layer = graph.layers[i];
    if (!position.emplace(layer.id, i).second) invalid(layer, "duplicate id");

    std::vector<ActShape> in;
    if (layer.inputs.empty()) {
      ++entry_layers;
      in.push_back(input_shape);
    }
    for (int src : layer.inputs) {
      auto it = position.find(src);
      if (it == position.end() || it->second >= i)
        invalid(layer, "input " + std::to_string(src) +
                           " is not an earlier layer");
      in.push_back(shapes[it->second]);
      consumed.insert(src);
    }
    if (layer.kind == LayerKind::kConcat) {
      if (in.size() < 2) invalid(layer, "concat needs two or more inputs");
    } else if (in.size() != 1) {
      invalid(layer, "expects exactly one input");
    }

    const ActShape& s = in.front();
    ActShape out = s;
    switch (layer.kind) {
      case LayerKind::kConv2D: {
        if (s.c != layer.in_channels)
          invalid(layer, "input has " + std::to_string(s.c) +
                             " channels, conv expects " +
                             std::to_string(layer.in_channels));
        if (layer.kernel < 1 || layer.kernel % 2 == 0)
          invalid(layer, "kernel must be odd and positive");
        if (layer.out_channels < 1) invalid(layer, "no output channels");
        const Shape wshape{layer.out_channels, layer.in_channels, layer.kernel,
                           layer.kernel};
        if (layer.weights.shape() != wshape)
          invalid(layer, "weights " + shape_to_string(layer.weights.shape()) +
                             " expected " + shape_to_string(wshape));
        if (layer.bias.shape() != Shape{layer.out_channels})
          invalid(layer, "bias length mismatch");
        out.c = layer.out_channels;
        break;
      }
      case LayerKind::kBatchNorm: {
        const auto c = static_cast<size_t>(s.c);
        if (layer.gamma.size() != c || layer.beta.size() != c ||
            layer.mean.size() != c || layer.var.size() != c)
          invalid(layer, "parameter length does not match channels");
        break;
      }
      case LayerKind::kReLU:
      case LayerKind::kLeakyReLU:
      case LayerKind::kSoftmax:
        break;
      case LayerKind::kMaxPool2x2:
        if (s.h % 2 || s.w % 2) invalid(layer, "odd spatial size for pooling");
        out.h = s.h / 2;
        out.w = s.w / 2;
        break;
      case LayerKind::kUpsampleNearest2x:
        out.h = s.h * 2;
        out.w = s.w * 2;
        break;
      case LayerKind::kConcat:
        out.c = 0;
        for (const auto& x : in) {
          if (x.h != s.h || x.w != s.w)
            invalid(layer, "concat inputs differ in spatial size");
          out.c += x.c;
        }
        break;
    }
    shapes[i] = out;
  }

  if (entry_layers != 1)
    fail(Errc::kInvalidGraph, "graph must have exactly one input layer");
  int outputs = 0;
  for (const auto& l : graph.layers)
    if (!consumed.count(l.id)) ++outputs;
  if (outputs != 1 || consumed.count(graph.layers.back().id))
    fail(Errc::kInvalidGraph, "graph must have exactly one output layer, last");
  if (shapes.back().c != graph.num_classes)
    fail(Errc::kInvalidGraph, "output channels " +
                                  std::to_string(shapes.back().c) +
                                  " != num_classes " +
                                  std::to_string(graph.num_classes));
  return shapes;
}

std::vector<ActShape> validate_graph(const ModelGraph& graph) {
  return infer_shapes(graph, graph.input_shape);
}

std::vector<size_t> conv_layer_indices(const ModelGraph& graph) {
  std::vector<size_t> out;
  for (size_t i = 0; i < graph.layers.size(); ++i)
    if (graph.layers[i].kind == LayerKind::kConv2D) out.push_back(i);
  return out;
}

namespace {

class UnetBuilder {
 public:
  UnetBuilder(ModelGraph& g, bool bn, uint64_t seed)
      : g_(g), bn_(bn), rng_(seed) {}

  int conv(int input, int64_t cin, int64_t cout, int64_t k) {
    Layer l = make(LayerKind::kConv2D, input);
    l.in_channels = cin;
    l.out_channels = cout;
    l.kernel = k;
    const double bound = std::sqrt(6.0 / static_cast<double>(cin * k * k));
    std::vector<float> w(static_cast<size_t>(cout * cin * k * k));
    for (auto& v : w) v = static_cast<float>(rng_.uniform(-bound, bound));
    std::vector<float> b(static_cast<size_t>(cout));
    for (auto& v : b) v = static_cast<float>(rng_.uniform(-0.05, 0.05));
    l.weights = Tensor({cout, cin, k, k}, std::move(w));
    l.bias = Tensor({cout}, std::move(b));
    return push(std::move(l));
  }

  int batchnorm(int input, int64_t c) {
    Layer l = make(LayerKind::kBatchNorm, input);
    const auto n = static_cast<size_t>(c);
    auto fill = [&](std::vector<float>& v, double lo, double hi) {
      v.resize(n);
      for (auto& x : v) x = static_cast<float>(rng_.uniform(lo, hi));
    };
    fill(l.gamma, 0.5, 1.5);
    fill(l.beta, -0.1, 0.1);
    fill(l.mean, -0.1, 0.1);
    fill(l.var, 0.5, 1.5);
    return push(std::move(l));
  }

  // Conv3x3 [+BN] + ReLU
  int block(int input, int64_t cin, int64_t cout) {
    int x = conv(input, cin, cout, 3);
    if (bn_) x = batchnorm(x, cout);
    return simple(LayerKind::kReLU, x);
  }

  int simple(LayerKind kind, int input) { return push(make(kind, input)); }

  int concat(std::vector<int> inputs) {
    Layer l;
    l.id = next_++;
    l.kind = LayerKind::kConcat;
    l.inputs = std::move(inputs);
    return push(std::move(l));
  }

 private:
  Layer make(LayerKind kind, int input) {
    Layer l;
    l.id = next_++;
    l.kind = kind;
    if (input >= 0) l.inputs = {input};
    return l;
  }
  int push(Layer l) {
    g_.layers.push_back(std::move(l));
    return g_.layers.back().id;
  }

  ModelGraph& g_;
  bool bn_;
  Xorshift64Star rng_;
  int next_ = 0;
};

void make_dead_filters(ModelGraph& g, double fraction) {
  const auto convs = conv_layer_indices(g);
  if (convs.size() <= 4) return;
  for (size_t n = 2; n + 2 < convs.size(); ++n) {
    Layer& conv = g.layers[convs[n]];
    const int64_t cout = conv.out_channels;
    const auto dead = std::min<int64_t>(
        cout - 1, static_cast<int64_t>(std::floor(fraction * cout)));
    if (dead <= 0) continue;
    const int64_t row = conv.in_channels * conv.kernel * conv.kernel;
    auto w = conv.weights.f32();
    auto b = conv.bias.f32();
    for (int64_t f = cout - dead; f < cout; ++f) {
      std::fill(w.begin() + f * row, w.begin() + (f + 1) * row, 0.0f);
      b[f] = 0.0f;
    }
    for (int id : g.consumers(conv.id)) {
      Layer& bn = g.layer(id);
      if (bn.kind != LayerKind::kBatchNorm) continue;
      for (int64_t f = cout - dead; f < cout; ++f) {
        bn.gamma[f] = 0.0f;
        bn.beta[f] = 0.0f;
      }
    }
  }
}

}  // namespace

ModelGraph build_unet(const UnetOptions& o) {
  if (o.depth < 1) fail(Errc::kInvalidArgument, "depth must be >= 1");
  if (o.base_filters < 1) fail(Errc::kInvalidArgument, "zero filters");
  if (o.num_classes < 1) fail(Errc::kInvalidArgument, "num_classes must be >= 1");
  const int64_t div = int64_t{1} << o.depth;
  if (o.input_shape.h <= 0 || o.input_shape.w <= 0 || o.input_shape.c <= 0 ||
      o.input_shape.h % div || o.input_shape.w % div)
    fail(Errc::kInvalidArgument,
         "input " + act_shape_to_string(o.input_shape) +
             " spatial dims must be divisible by 2^depth = " +
             std::to_string(div));
  if (o.dead_fraction < 0.0 || o.dead_fraction >= 1.0)
    fail(Errc::kInvalidArgument, "dead_fraction must be in [0, 1)");

  ModelGraph g;
  g.input_shape = o.input_shape;
  g.num_classes = o.num_classes;
  UnetBuilder b(g, o.with_batchnorm, o.seed);

  std::vector<int> skips;
  std::vector<int64_t> skip_channels;
  int x = -1;
  int64_t c = o.input_shape.c;
  for (int level = 0; level < o.depth; ++level) {
    const int64_t f = o.base_filters << level;
    x = b.block(x, c, f);
    x = b.block(x, f, f);
    skips.push_back(x);
    skip_channels.push_back(f);
    x = b.simple(LayerKind::kMaxPool2x2, x);
    c = f;
  }
  const int64_t fb = o.base_filters << o.depth;
  x = b.block(x, c, fb);
  x = b.block(x, fb, fb);
  c = fb;
  for (int level = o.depth - 1; level >= 0; --level) {
    const int64_t f = o.base_filters << level;
    const int up = b.simple(LayerKind::kUpsampleNearest2x, x);
    x = b.concat({skips[level], up});
    x = b.block(x, skip_channels[level] + c, f);
    x = b.block(x, f, f);
    c = f;
  }
  x = b.conv(x, c, o.num_classes, 1);
  b.simple(LayerKind::kSoftmax, x);

  if (o.dead_fraction > 0.0) make_dead_filters(g, o.dead_fraction);
  validate_graph(g);
  return g;
}

int64_t count_parameters(const ModelGraph& graph) {
  int64_t n = 0;
  for (const auto& l : graph.layers) {
    if (l.kind == LayerKind::kConv2D)
      n += static_cast<int64_t>(l.weights.size() + l.bias.size());
    else if (l.kind == LayerKind::kBatchNorm)
      n += static_cast<int64_t>(l.gamma.size() + l.beta.size());
  }
  return n;
}

ModelGraph fold_batchnorm(const ModelGraph& graph) {
  if (!graph.has_batchnorm()) return graph;
  if (graph.quantized())
    fail(Errc::kInvalidGraph, "cannot fold batchnorm in a quantized graph");

  ModelGraph out = graph;
  std::vector<Layer> kept;
  kept.reserve(out.layers.size());
  std::unordered_map<int, int> rewire;  // bn id -> conv id

  for (auto& layer : out.layers) {
    if (layer.kind != LayerKind::kBatchNorm) {
      for (auto& src : layer.inputs)
        if (auto it = rewire.find(src); it != rewire.end()) src = it->second;
      kept.push_back(std::move(layer));
      continue;
    }
    if (layer.inputs.size() != 1)
      invalid(layer, "batchnorm has no conv predecessor");
    const int src = layer.inputs[0];
    auto conv_it = std::find_if(kept.begin(), kept.end(),
                                [&](const Layer& l) { return l.id == src; });
    if (conv_it == kept.end() || conv_it->kind != LayerKind::kConv2D)
      invalid(layer, "batchnorm has no conv predecessor");
    if (graph.consumers(src).size() != 1)
      invalid(layer, "conv feeding batchnorm has other consumers");

    Layer& conv = *conv_it;
    const int64_t row = conv.in_channels * conv.kernel * conv.kernel;
    auto w = conv.weights.f32();
    auto b = conv.bias.f32();
    for (int64_t o = 0; o < conv.out_channels; ++o) {
      const double inv_std =
          1.0 / std::sqrt(static_cast<double>(layer.var[o]) + layer.epsilon);
      const double k = layer.gamma[o] * inv_std;
      for (int64_t j = 0; j < row; ++j)
        w[o * row + j] = static_cast<float>(k * w[o * row + j]);
      b[o] = static_cast<float>(k * (static_cast<double>(b[o]) - layer.mean[o]) +
                                layer.beta[o]);
    }
    rewire[layer.id] = conv.id;
  }
  out.layers = std::move(kept);
  validate_graph(out);
  return out;
}

}  // namespace flamecam
