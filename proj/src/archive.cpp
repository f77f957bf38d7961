#include "flamecam/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"

#include "flamecam/error.hpp"

namespace flamecam {

static_assert(std::endian::native == std::endian::little,
              "archive payloads are written in host order");

using nlohmann::json;

namespace {

json quant_to_json(const QuantParams& q) {
  return json{{"scales", q.scales}, {"zero_points", q.zero_points}, {"axis", q.axis}};
}

QuantParams quant_from_json(const json& j) {
  QuantParams q;
  q.scales = j.at("scales").get<std::vector<double>>();
  q.zero_points = j.at("zero_points").get<std::vector<int32_t>>();
  q.axis = j.at("axis").get<int>();
  return q;
}

class PayloadWriter {
 public:
  json add(const Tensor& t) {
    const auto bytes = t.bytes();
    json ref{{"dtype", dtype_name(t.dtype())},
             {"shape", t.shape()},
             {"offset", payload_.size()},
             {"nbytes", bytes.size()}};
    if (t.quant()) ref["quant"] = quant_to_json(*t.quant());
    payload_.insert(payload_.end(), bytes.begin(), bytes.end());
    return ref;
  }
  json add(const std::vector<float>& v) {
    return add(Tensor({static_cast<int64_t>(v.size())}, v));
  }
  const std::vector<uint8_t>& payload() const { return payload_; }

 private:
  std::vector<uint8_t> payload_;
};

class PayloadReader {
 public:
  PayloadReader(const uint8_t* data, size_t size) : data_(data), size_(size) {}

  Tensor get(const json& ref) const {
    const DType dtype = dtype_from_name(ref.at("dtype").get<std::string>());
    const Shape shape = ref.at("shape").get<Shape>();
    const auto offset = ref.at("offset").get<uint64_t>();
    const auto nbytes = ref.at("nbytes").get<uint64_t>();
    if (static_cast<uint64_t>(shape_product(shape)) * dtype_size(dtype) != nbytes)
      fail(Errc::kSizeMismatch, "tensor byte length disagrees with its shape");
    if (offset > size_ || nbytes > size_ - offset)
      fail(Errc::kTruncatedPayload, "tensor extends past end of payload");
    const uint8_t* p = data_ + offset;
    const size_t n = static_cast<size_t>(nbytes / dtype_size(dtype));
    auto copy = [&](auto proto) {
      std::vector<decltype(proto)> v(n);
      if (nbytes) std::memcpy(v.data(), p, nbytes);
      return v;
    };
    switch (dtype) {
      case DType::kFloat32:
        if (ref.contains("quant"))
          fail(Errc::kMalformedHeader, "float tensor with quant params");
        return Tensor(shape, copy(float{}));
      case DType::kInt8:
      case DType::kInt32: {
        if (!ref.contains("quant"))
          fail(Errc::kMissingQuantParams, "integer tensor without quant params");
        auto q = quant_from_json(ref.at("quant"));
        if (dtype == DType::kInt8) return Tensor(shape, copy(int8_t{}), q);
        return Tensor(shape, copy(int32_t{}), q);
      }
    }
    fail(Errc::kMalformedHeader, "bad dtype");
  }

  std::vector<float> get_floats(const json& ref) const {
    const Tensor t = get(ref);
    const auto s = t.f32();
    return {s.begin(), s.end()};
  }

 private:
  const uint8_t* data_;
  size_t size_;
};

}  // namespace

std::vector<uint8_t> encode_model_archive(const ModelGraph& graph) {
  PayloadWriter payload;
  json layers = json::array();
  for (const auto& l : graph.layers) {
    json jl{{"id", l.id}, {"kind", layer_kind_name(l.kind)}, {"inputs", l.inputs}};
    switch (l.kind) {
      case LayerKind::kConv2D:
        jl["in_channels"] = l.in_channels;
        jl["out_channels"] = l.out_channels;
        jl["kernel"] = l.kernel;
        jl["weights"] = payload.add(l.weights);
        jl["bias"] = payload.add(l.bias);
        break;
      case LayerKind::kBatchNorm:
        jl["epsilon"] = l.epsilon;
        jl["gamma"] = payload.add(l.gamma);
        jl["beta"] = payload.add(l.beta);
        jl["mean"] = payload.add(l.mean);
        jl["var"] = payload.add(l.var);
        break;
      case LayerKind::kLeakyReLU:
        jl["negative_slope"] = l.negative_slope;
        break;
      default:
        break;
    }
    if (l.output_quant) jl["output_quant"] = quant_to_json(*l.output_quant);
    layers.push_back(std::move(jl));
  }
  json header{{"format", "FLMCAM01"},
              {"version", 1},
              {"input_shape", {graph.input_shape.h, graph.input_shape.w,
                               graph.input_shape.c}},
              {"num_classes", graph.num_classes},
              {"layers", std::move(layers)},
              {"payload_bytes", payload.payload().size()}};
  if (graph.input_quant) header["input_quant"] = quant_to_json(*graph.input_quant);

  const std::string text = header.dump();
  std::vector<uint8_t> out(std::begin(kArchiveMagic), std::end(kArchiveMagic));
  const uint64_t len = text.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(len >> (8 * i)));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.payload().begin(), payload.payload().end());
  return out;
}

ModelGraph decode_model_archive(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 8 ||
      std::memcmp(bytes.data(), kArchiveMagic, sizeof(kArchiveMagic)) != 0)
    fail(Errc::kBadMagic, "not a FLMCAM01 archive");
  if (bytes.size() < 16) fail(Errc::kTruncatedPayload, "archive ends in header length");
  uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<uint64_t>(bytes[8 + i]) << (8 * i);
  if (len > bytes.size() - 16) fail(Errc::kTruncatedPayload, "archive ends in header");

  json header;
  try {
    header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
  } catch (const json::exception& e) {
    fail(Errc::kMalformedHeader, std::string("header is not valid JSON: ") + e.what());
  }

  const size_t payload_start = 16 + static_cast<size_t>(len);
  const size_t payload_size = bytes.size() - payload_start;
  try {
    const auto declared = header.at("payload_bytes").get<uint64_t>();
    if (payload_size < declared)
      fail(Errc::kTruncatedPayload, "payload shorter than declared");
    if (payload_size > declared)
      fail(Errc::kSizeMismatch, "payload longer than declared");
    PayloadReader reader(bytes.data() + payload_start, payload_size);

    ModelGraph g;
    const auto shape = header.at("input_shape").get<std::vector<int64_t>>();
    if (shape.size() != 3) fail(Errc::kMalformedHeader, "input_shape must have 3 extents");
    g.input_shape = {shape[0], shape[1], shape[2]};
    g.num_classes = header.at("num_classes").get<int>();
    if (header.contains("input_quant")) g.input_quant = quant_from_json(header["input_quant"]);

    for (const auto& jl : header.at("layers")) {
      Layer l;
      l.id = jl.at("id").get<int>();
      l.kind = layer_kind_from_name(jl.at("kind").get<std::string>());
      l.inputs = jl.at("inputs").get<std::vector<int>>();
      switch (l.kind) {
        case LayerKind::kConv2D:
          l.in_channels = jl.at("in_channels").get<int64_t>();
          l.out_channels = jl.at("out_channels").get<int64_t>();
          l.kernel = jl.at("kernel").get<int64_t>();
          l.weights = reader.get(jl.at("weights"));
          l.bias = reader.get(jl.at("bias"));
          break;
        case LayerKind::kBatchNorm:
          l.epsilon = jl.at("epsilon").get<double>();
          l.gamma = reader.get_floats(jl.at("gamma"));
          l.beta = reader.get_floats(jl.at("beta"));
          l.mean = reader.get_floats(jl.at("mean"));
          l.var = reader.get_floats(jl.at("var"));
          break;
        case LayerKind::kLeakyReLU:
          l.negative_slope = jl.at("negative_slope").get<float>();
          break;
        default:
          break;
      }
      if (jl.contains("output_quant")) l.output_quant = quant_from_json(jl["output_quant"]);
      g.layers.push_back(std::move(l));
    }
    validate_graph(g);
    return g;
  } catch (const json::exception& e) {
    fail(Errc::kMalformedHeader, std::string("bad header field: ") + e.what());
  }
}

void write_model_archive(const ModelGraph& graph, const std::string& path) {
  const auto bytes = encode_model_archive(graph);
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(Errc::kIo, "cannot open '" + path + "' for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) fail(Errc::kIo, "write to '" + path + "' failed");
}

ModelGraph read_model_archive(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(Errc::kIo, "cannot open '" + path + "'");
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                             std::istreambuf_iterator<char>());
  return decode_model_archive(bytes);
}

}  // namespace flamecam
