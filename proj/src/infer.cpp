#include "flamecam/infer.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

#include "flamecam/error.hpp"

namespace flamecam {

Image mask_to_image(const SegMask& mask) {
  Image im = make_image(mask.height, mask.width, 1);
  im.pixels = mask.labels;
  return im;
}

SegMask image_to_mask(const Image& image, int num_classes) {
  if (image.channels != 1) fail(Errc::kInvalidArgument, "mask image must be single channel");
  SegMask m(image.height, image.width);
  for (size_t i = 0; i < image.pixels.size(); ++i) {
    if (image.pixels[i] >= num_classes)
      fail(Errc::kInvalidArgument, "mask value " + std::to_string(image.pixels[i]) +
                                       " is not a class id");
    m.labels[i] = image.pixels[i];
  }
  return m;
}

namespace {

struct Dims {
  int64_t h, w, c;
};

Dims dims_of(const Tensor& t) {
  if (t.rank() != 3) fail(Errc::kShapeMismatch, "activation must be (H, W, C)");
  return {t.dim(0), t.dim(1), t.dim(2)};
}

// Repack (Cout, Cin, K, K) to [ky][kx][ci][co] so the inner loop runs over
// contiguous output channels.
template <typename Out, typename In>
std::vector<Out> pack_weights(std::span<const In> w, int64_t cout, int64_t cin,
                              int64_t k) {
  std::vector<Out> p(w.size());
  for (int64_t o = 0; o < cout; ++o)
    for (int64_t i = 0; i < cin; ++i)
      for (int64_t ky = 0; ky < k; ++ky)
        for (int64_t kx = 0; kx < k; ++kx)
          p[((ky * k + kx) * cin + i) * cout + o] =
              static_cast<Out>(w[((o * cin + i) * k + ky) * k + kx]);
  return p;
}

Tensor conv2d_f32(const Tensor& in, const Layer& l) {
  const auto [h, w, cin] = dims_of(in);
  const int64_t k = l.kernel, pad = k / 2, cout = l.out_channels;
  const auto packed = pack_weights<float>(l.weights.f32(), cout, cin, k);
  const auto bias = l.bias.f32();
  const auto x = in.f32();
  std::vector<float> out(static_cast<size_t>(h * w * cout));
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t xx = 0; xx < w; ++xx) {
      float* o = out.data() + (y * w + xx) * cout;
      std::copy(bias.begin(), bias.end(), o);
      for (int64_t ky = 0; ky < k; ++ky) {
        const int64_t iy = y + ky - pad;
        if (iy < 0 || iy >= h) continue;
        for (int64_t kx = 0; kx < k; ++kx) {
          const int64_t ix = xx + kx - pad;
          if (ix < 0 || ix >= w) continue;
          const float* ip = x.data() + (iy * w + ix) * cin;
          const float* wk = packed.data() + (ky * k + kx) * cin * cout;
          for (int64_t ci = 0; ci < cin; ++ci) {
            const float a = ip[ci];
            if (a == 0.0f) continue;
            const float* wr = wk + ci * cout;
            for (int64_t co = 0; co < cout; ++co) o[co] += a * wr[co];
          }
        }
      }
    }
  }
  return Tensor({h, w, cout}, std::move(out));
}

Tensor batchnorm_f32(const Tensor& in, const Layer& l) {
  const auto [h, w, c] = dims_of(in);
  std::vector<float> scale(static_cast<size_t>(c)), shift(static_cast<size_t>(c));
  for (int64_t i = 0; i < c; ++i) {
    const double k = l.gamma[i] / std::sqrt(static_cast<double>(l.var[i]) + l.epsilon);
    scale[i] = static_cast<float>(k);
    shift[i] = static_cast<float>(l.beta[i] - k * l.mean[i]);
  }
  std::vector<float> out(in.f32().begin(), in.f32().end());
  for (int64_t p = 0; p < h * w; ++p)
    for (int64_t i = 0; i < c; ++i) out[p * c + i] = out[p * c + i] * scale[i] + shift[i];
  return Tensor(in.shape(), std::move(out));
}

template <typename T>
std::vector<T> maxpool(std::span<const T> x, int64_t h, int64_t w, int64_t c) {
  const int64_t oh = h / 2, ow = w / 2;
  std::vector<T> out(static_cast<size_t>(oh * ow * c));
  for (int64_t y = 0; y < oh; ++y)
    for (int64_t xx = 0; xx < ow; ++xx)
      for (int64_t i = 0; i < c; ++i) {
        const auto at = [&](int64_t dy, int64_t dx) {
          return x[((2 * y + dy) * w + 2 * xx + dx) * c + i];
        };
        out[(y * ow + xx) * c + i] =
            std::max({at(0, 0), at(0, 1), at(1, 0), at(1, 1)});
      }
  return out;
}

template <typename T>
std::vector<T> upsample(std::span<const T> x, int64_t h, int64_t w, int64_t c) {
  std::vector<T> out(static_cast<size_t>(4 * h * w * c));
  for (int64_t y = 0; y < 2 * h; ++y)
    for (int64_t xx = 0; xx < 2 * w; ++xx)
      std::copy_n(x.data() + ((y / 2) * w + xx / 2) * c, c,
                  out.data() + (y * 2 * w + xx) * c);
  return out;
}

std::vector<float> softmax(std::span<const float> logits, int64_t pixels, int64_t c) {
  std::vector<float> out(logits.size());
  std::vector<double> e(static_cast<size_t>(c));
  for (int64_t p = 0; p < pixels; ++p) {
    const float* z = logits.data() + p * c;
    const float m = *std::max_element(z, z + c);
    double sum = 0.0;
    for (int64_t i = 0; i < c; ++i) sum += e[i] = std::exp(static_cast<double>(z[i]) - m);
    for (int64_t i = 0; i < c; ++i) out[p * c + i] = static_cast<float>(e[i] / sum);
  }
  return out;
}

void check_input(const ModelGraph& graph, const Tensor& input) {
  const Shape expected{graph.input_shape.h, graph.input_shape.w, graph.input_shape.c};
  if (input.shape() != expected)
    fail(Errc::kShapeMismatch, "input " + shape_to_string(input.shape()) +
                                   " does not match model input " +
                                   shape_to_string(expected));
}

// Frees each intermediate once its last consumer has run.
class ActivationStore {
 public:
  explicit ActivationStore(const ModelGraph& g) : g_(g), out_(g.layers.size()) {
    remaining_.resize(g.layers.size(), 0);
    for (const auto& l : g.layers)
      for (int src : l.inputs) ++remaining_[g.index_of(src)];
  }
  const Tensor& get(int id) const { return out_[g_.index_of(id)]; }
  void put(size_t index, Tensor t) { out_[index] = std::move(t); }
  void release_inputs(const Layer& l) {
    for (int src : l.inputs) {
      const size_t i = g_.index_of(src);
      if (--remaining_[i] == 0) out_[i] = Tensor();
    }
  }
  Tensor take(size_t index) { return std::move(out_[index]); }

 private:
  const ModelGraph& g_;
  std::vector<Tensor> out_;
  std::vector<int> remaining_;
};

}  // namespace

Tensor forward_f32(const ModelGraph& graph, const Tensor& input,
                   const LayerObserver& observer) {
  if (graph.quantized()) fail(Errc::kInvalidArgument, "forward_f32 needs a float graph");
  if (input.dtype() != DType::kFloat32) fail(Errc::kInvalidArgument, "input must be float");
  check_input(graph, input);
  for (float v : input.f32())
    if (!std::isfinite(v)) fail(Errc::kNonFinite, "input contains a non-finite value");
  validate_graph(graph);

  ActivationStore store(graph);
  for (size_t i = 0; i < graph.layers.size(); ++i) {
    const Layer& l = graph.layers[i];
    const Tensor& x = l.inputs.empty() ? input : store.get(l.inputs[0]);
    Tensor y;
    switch (l.kind) {
      case LayerKind::kConv2D:
        y = conv2d_f32(x, l);
        break;
      case LayerKind::kBatchNorm:
        y = batchnorm_f32(x, l);
        break;
      case LayerKind::kReLU:
      case LayerKind::kLeakyReLU: {
        const float slope = l.kind == LayerKind::kReLU ? 0.0f : l.negative_slope;
        std::vector<float> v(x.f32().begin(), x.f32().end());
        for (auto& a : v)
          if (a < 0.0f) a = l.kind == LayerKind::kReLU ? 0.0f : a * slope;
        y = Tensor(x.shape(), std::move(v));
        break;
      }
      case LayerKind::kMaxPool2x2: {
        const auto [h, w, c] = dims_of(x);
        y = Tensor({h / 2, w / 2, c}, maxpool(x.f32(), h, w, c));
        break;
      }
      case LayerKind::kUpsampleNearest2x: {
        const auto [h, w, c] = dims_of(x);
        y = Tensor({2 * h, 2 * w, c}, upsample(x.f32(), h, w, c));
        break;
      }
      case LayerKind::kConcat: {
        const auto [h, w, c0] = dims_of(x);
        int64_t c = 0;
        for (int src : l.inputs) c += store.get(src).dim(2);
        std::vector<float> v(static_cast<size_t>(h * w * c));
        int64_t offset = 0;
        for (int src : l.inputs) {
          const Tensor& t = store.get(src);
          const int64_t ct = t.dim(2);
          const auto d = t.f32();
          for (int64_t p = 0; p < h * w; ++p)
            std::copy_n(d.data() + p * ct, ct, v.data() + p * c + offset);
          offset += ct;
        }
        (void)c0;
        y = Tensor({h, w, c}, std::move(v));
        break;
      }
      case LayerKind::kSoftmax: {
        const auto [h, w, c] = dims_of(x);
        y = Tensor(x.shape(), softmax(x.f32(), h * w, c));
        break;
      }
    }
    if (observer) observer(l, y);
    store.release_inputs(l);
    store.put(i, std::move(y));
  }
  return store.take(graph.layers.size() - 1);
}

namespace {

const QuantParams& need_quant(const Layer& l) {
  if (!l.output_quant)
    fail(Errc::kMissingQuantParams, std::string(layer_kind_name(l.kind)) + " #" +
                                        std::to_string(l.id) + " has no output quant params");
  return *l.output_quant;
}

Tensor requantize(const Tensor& x, const QuantParams& to) {
  const QuantParams& from = *x.quant();
  if (from == to) return x;
  const double m = from.scale() / to.scale();
  const int32_t zi = from.zero_point(), zo = to.zero_point();
  std::vector<int8_t> v(x.size());
  const auto d = x.i8();
  for (size_t i = 0; i < v.size(); ++i) {
    const double q = std::nearbyint((d[i] - zi) * m) + zo;
    v[i] = static_cast<int8_t>(std::clamp(q, -128.0, 127.0));
  }
  return Tensor(x.shape(), std::move(v), to);
}

enum class Fused { kNone, kReLU, kLeaky };

Tensor conv2d_i8(const Tensor& in, const Layer& l, Fused act, float slope,
                 const QuantParams& out_q) {
  const auto [h, w, cin] = dims_of(in);
  const int64_t k = l.kernel, pad = k / 2, cout = l.out_channels;
  if (l.weights.dtype() != DType::kInt8 || l.bias.dtype() != DType::kInt32)
    fail(Errc::kMissingQuantParams, "conv #" + std::to_string(l.id) + " is not quantized");
  const auto packed = pack_weights<int32_t>(l.weights.i8(), cout, cin, k);
  const auto bias = l.bias.i32();
  const auto x = in.i8();
  const QuantParams& wq = *l.weights.quant();
  const double s_in = in.quant()->scale();
  const int32_t zp_in = in.quant()->zero_point();
  const double s_out = out_q.scale();
  const int32_t zp_out = out_q.zero_point();
  std::vector<double> mult(static_cast<size_t>(cout));
  for (int64_t co = 0; co < cout; ++co) mult[co] = s_in * wq.scale(co) / s_out;

  std::vector<int8_t> out(static_cast<size_t>(h * w * cout));
  std::vector<int32_t> acc(static_cast<size_t>(cout));
  std::vector<int32_t> centred(static_cast<size_t>(cin));
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t xx = 0; xx < w; ++xx) {
      std::copy(bias.begin(), bias.end(), acc.begin());
      for (int64_t ky = 0; ky < k; ++ky) {
        const int64_t iy = y + ky - pad;
        if (iy < 0 || iy >= h) continue;
        for (int64_t kx = 0; kx < k; ++kx) {
          const int64_t ix = xx + kx - pad;
          if (ix < 0 || ix >= w) continue;
          const int8_t* ip = x.data() + (iy * w + ix) * cin;
          const int32_t* wk = packed.data() + (ky * k + kx) * cin * cout;
          for (int64_t ci = 0; ci < cin; ++ci) {
            const int32_t a = ip[ci] - zp_in;
            if (a == 0) continue;
            const int32_t* wr = wk + ci * cout;
            for (int64_t co = 0; co < cout; ++co) acc[co] += a * wr[co];
          }
        }
      }
      int8_t* o = out.data() + (y * w + xx) * cout;
      for (int64_t co = 0; co < cout; ++co) {
        double r = acc[co] * mult[co];
        if (r < 0.0) {
          if (act == Fused::kReLU) r = 0.0;
          else if (act == Fused::kLeaky) r *= slope;
        }
        const double q = std::nearbyint(r) + zp_out;
        o[co] = static_cast<int8_t>(std::clamp(q, -128.0, 127.0));
      }
    }
  }
  return Tensor({h, w, cout}, std::move(out), out_q);
}

}  // namespace

Tensor quantize_input(const ModelGraph& graph, const Tensor& input) {
  if (!graph.input_quant) fail(Errc::kMissingQuantParams, "graph has no input quant params");
  check_input(graph, input);
  const double s = graph.input_quant->scale();
  const int32_t zp = graph.input_quant->zero_point();
  std::vector<int8_t> q(input.size());
  const auto x = input.f32();
  for (size_t i = 0; i < q.size(); ++i) {
    if (!std::isfinite(x[i])) fail(Errc::kNonFinite, "input contains a non-finite value");
    q[i] = quantize_value(x[i], s, zp);
  }
  return Tensor(input.shape(), std::move(q), *graph.input_quant);
}

Tensor forward_i8(const ModelGraph& graph, const Tensor& input) {
  if (!graph.input_quant) fail(Errc::kMissingQuantParams, "graph is not quantized");
  if (input.dtype() != DType::kInt8 || input.quant() != graph.input_quant)
    fail(Errc::kMissingQuantParams, "input must be int8 with the graph's input params");
  check_input(graph, input);
  validate_graph(graph);
#ifndef NDEBUG
  for (const auto& l : graph.layers)
    if (l.kind == LayerKind::kConv2D)
      assert(l.in_channels * l.kernel * l.kernel < 66000);
#endif

  ActivationStore store(graph);
  std::vector<bool> fused_into_conv(graph.layers.size(), false);
  for (size_t i = 0; i < graph.layers.size(); ++i) {
    const Layer& l = graph.layers[i];
    const Tensor& x = l.inputs.empty() ? input : store.get(l.inputs[0]);
    Tensor y;
    switch (l.kind) {
      case LayerKind::kConv2D: {
        Fused act = Fused::kNone;
        float slope = 0.0f;
        const QuantParams* out_q = &need_quant(l);
        const auto consumers = graph.consumers(l.id);
        if (consumers.size() == 1) {
          const size_t ci = graph.index_of(consumers[0]);
          const Layer& next = graph.layers[ci];
          if (next.kind == LayerKind::kReLU || next.kind == LayerKind::kLeakyReLU) {
            act = next.kind == LayerKind::kReLU ? Fused::kReLU : Fused::kLeaky;
            slope = next.negative_slope;
            out_q = &need_quant(next);
            fused_into_conv[ci] = true;
          }
        }
        y = conv2d_i8(x, l, act, slope, *out_q);
        break;
      }
      case LayerKind::kBatchNorm:
        fail(Errc::kUnfoldedBatchNorm, "quantized graph contains a BatchNorm layer");
      case LayerKind::kReLU:
      case LayerKind::kLeakyReLU: {
        if (fused_into_conv[i]) {
          y = x;
          break;
        }
        const QuantParams& from = *x.quant();
        const QuantParams& to = need_quant(l);
        const double m = from.scale() / to.scale();
        const float slope = l.kind == LayerKind::kReLU ? 0.0f : l.negative_slope;
        std::vector<int8_t> v(x.size());
        const auto d = x.i8();
        for (size_t j = 0; j < v.size(); ++j) {
          double r = (d[j] - from.zero_point()) * m;
          if (r < 0.0) r *= slope;
          v[j] = static_cast<int8_t>(
              std::clamp(std::nearbyint(r) + to.zero_point(), -128.0, 127.0));
        }
        y = Tensor(x.shape(), std::move(v), to);
        break;
      }
      case LayerKind::kMaxPool2x2: {
        const auto [h, w, c] = dims_of(x);
        y = Tensor({h / 2, w / 2, c}, maxpool(x.i8(), h, w, c), *x.quant());
        break;
      }
      case LayerKind::kUpsampleNearest2x: {
        const auto [h, w, c] = dims_of(x);
        y = Tensor({2 * h, 2 * w, c}, upsample(x.i8(), h, w, c), *x.quant());
        break;
      }
      case LayerKind::kConcat: {
        const QuantParams& to = need_quant(l);
        const auto [h, w, c0] = dims_of(x);
        (void)c0;
        int64_t c = 0;
        for (int src : l.inputs) c += store.get(src).dim(2);
        std::vector<int8_t> v(static_cast<size_t>(h * w * c));
        int64_t offset = 0;
        for (int src : l.inputs) {
          const Tensor t = requantize(store.get(src), to);
          const int64_t ct = t.dim(2);
          const auto d = t.i8();
          for (int64_t p = 0; p < h * w; ++p)
            std::copy_n(d.data() + p * ct, ct, v.data() + p * c + offset);
          offset += ct;
        }
        y = Tensor({h, w, c}, std::move(v), to);
        break;
      }
      case LayerKind::kSoftmax: {
        const auto [h, w, c] = dims_of(x);
        const double s = x.quant()->scale();
        const int32_t zp = x.quant()->zero_point();
        std::vector<float> logits(x.size());
        const auto d = x.i8();
        for (size_t j = 0; j < logits.size(); ++j)
          logits[j] = static_cast<float>(dequantize_value(d[j], s, zp));
        y = Tensor(x.shape(), softmax(logits, h * w, c));
        break;
      }
    }
    store.release_inputs(l);
    store.put(i, std::move(y));
  }
  Tensor out = store.take(graph.layers.size() - 1);
  if (out.dtype() != DType::kFloat32) {
    // Graph without a trailing Softmax: hand back dequantized values.
    std::vector<float> v(out.size());
    const auto d = out.i8();
    for (size_t j = 0; j < v.size(); ++j)
      v[j] = static_cast<float>(
          dequantize_value(d[j], out.quant()->scale(), out.quant()->zero_point()));
    out = Tensor(out.shape(), std::move(v));
  }
  return out;
}

Tensor run_model(const ModelGraph& graph, const Tensor& input) {
  if (graph.quantized()) return forward_i8(graph, quantize_input(graph, input));
  return forward_f32(graph, input);
}

Tensor preprocess(const Image& bgr, int out_height, int out_width) {
  if (bgr.channels != 3 || bgr.height != 2 * out_height || bgr.width != 2 * out_width)
    fail(Errc::kShapeMismatch,
         "preprocess expects a " + std::to_string(2 * out_height) + "x" +
             std::to_string(2 * out_width) + "x3 frame, got " +
             std::to_string(bgr.height) + "x" + std::to_string(bgr.width) + "x" +
             std::to_string(bgr.channels));
  std::vector<float> out(static_cast<size_t>(out_height) * out_width * 3);
  for (int y = 0; y < out_height; ++y)
    for (int x = 0; x < out_width; ++x)
      for (int c = 0; c < 3; ++c) {
        const int src = 2 - c;  // BGR -> RGB
        const int sum = bgr.at(2 * y, 2 * x, src) + bgr.at(2 * y, 2 * x + 1, src) +
                        bgr.at(2 * y + 1, 2 * x, src) + bgr.at(2 * y + 1, 2 * x + 1, src);
        const int mean = (sum + 2) / 4;  // round half up
        out[(static_cast<size_t>(y) * out_width + x) * 3 + c] =
            static_cast<float>(mean) / 255.0f;
      }
  return Tensor({out_height, out_width, 3}, std::move(out));
}

SegMask postprocess(const Tensor& probs) {
  const auto [h, w, c] = dims_of(probs);
  if (c < 1 || c > 255) fail(Errc::kShapeMismatch, "bad class count");
  SegMask m(static_cast<int>(h), static_cast<int>(w));
  const auto p = probs.f32();
  for (int64_t i = 0; i < h * w; ++i) {
    const float* row = p.data() + i * c;
    int64_t best = 0;
    for (int64_t k = 1; k < c; ++k)
      if (row[k] > row[best]) best = k;
    m.labels[i] = static_cast<uint8_t>(best);
  }
  return m;
}

Image colorize(const SegMask& mask) {
  Image im = make_image(mask.height, mask.width, 3);
  for (size_t i = 0; i < mask.labels.size(); ++i) {
    const uint8_t k = mask.labels[i];
    if (k >= kPalette.size()) fail(Errc::kInvalidArgument, "class id out of range");
    std::copy(kPalette[k].begin(), kPalette[k].end(), im.pixels.begin() + 3 * i);
  }
  return im;
}

SegMask decolorize(const Image& image) {
  if (image.channels != 3) fail(Errc::kInvalidArgument, "colorized mask must be RGB");
  SegMask m(image.height, image.width);
  for (size_t i = 0; i < m.labels.size(); ++i) {
    const Rgb px{image.pixels[3 * i], image.pixels[3 * i + 1], image.pixels[3 * i + 2]};
    auto it = std::find(kPalette.begin(), kPalette.end(), px);
    if (it == kPalette.end()) fail(Errc::kInvalidArgument, "color not in palette");
    m.labels[i] = static_cast<uint8_t>(it - kPalette.begin());
  }
  return m;
}

Image to_bgr_frame(const Image& image) {
  Image out = make_image(image.height, image.width, 3);
  const size_t n = static_cast<size_t>(image.height) * image.width;
  for (size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c)
      out.pixels[3 * i + c] = image.channels == 1 ? image.pixels[i]
                                                  : image.pixels[3 * i + (2 - c)];
  return out;
}

}  // namespace flamecam
