#include "flamecam/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "flamecam/error.hpp"

namespace flamecam {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::kInvalidArgument: return "invalid argument";
    case Errc::kShapeMismatch: return "shape mismatch";
    case Errc::kNonFinite: return "non-finite value";
    case Errc::kInvalidGraph: return "invalid graph";
    case Errc::kBadMagic: return "bad magic";
    case Errc::kTruncatedPayload: return "truncated payload";
    case Errc::kSizeMismatch: return "header/payload size mismatch";
    case Errc::kMalformedHeader: return "malformed header";
    case Errc::kMissingQuantParams: return "missing quant params";
    case Errc::kMissingStats: return "missing calibration stats";
    case Errc::kUnfoldedBatchNorm: return "unfolded batchnorm";
    case Errc::kProtectedLayer: return "protected layer";
    case Errc::kEmptyLayer: return "empty layer";
    case Errc::kEmptyInput: return "empty input";
    case Errc::kDivisionByZero: return "division by zero";
    case Errc::kIo: return "i/o error";
  }
  return "unknown";
}

const char* dtype_name(DType dtype) {
  switch (dtype) {
    case DType::kFloat32: return "f32";
    case DType::kInt8: return "i8";
    case DType::kInt32: return "i32";
  }
  return "?";
}

DType dtype_from_name(const std::string& name) {
  if (name == "f32") return DType::kFloat32;
  if (name == "i8") return DType::kInt8;
  if (name == "i32") return DType::kInt32;
  fail(Errc::kMalformedHeader, "unknown dtype '" + name + "'");
}

size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::kFloat32: return 4;
    case DType::kInt8: return 1;
    case DType::kInt32: return 4;
  }
  return 0;
}

QuantParams QuantParams::per_tensor(double scale, int32_t zero_point) {
  return QuantParams{{scale}, {zero_point}, -1};
}

QuantParams QuantParams::per_channel(std::vector<double> scales, int axis) {
  QuantParams q;
  q.zero_points.assign(scales.size(), 0);
  q.scales = std::move(scales);
  q.axis = axis;
  return q;
}

int8_t quantize_value(double real, double scale, int32_t zero_point) {
  const double q = std::nearbyint(real / scale) + zero_point;
  return static_cast<int8_t>(std::clamp(q, -128.0, 127.0));
}

double dequantize_value(int32_t q, double scale, int32_t zero_point) {
  return scale * static_cast<double>(q - zero_point);
}

int64_t shape_product(const Shape& shape) {
  int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) fail(Errc::kShapeMismatch, "negative extent");
    n *= d;
  }
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

namespace {

void check_quant(const Shape& shape, const QuantParams& q) {
  if (q.scales.empty() || q.scales.size() != q.zero_points.size())
    fail(Errc::kMissingQuantParams, "quant params are empty or ragged");
  if (q.per_channel()) {
    if (static_cast<size_t>(q.axis) >= shape.size() ||
        static_cast<int64_t>(q.scales.size()) != shape[q.axis])
      fail(Errc::kShapeMismatch, "per-channel quant params do not match axis");
  } else if (q.scales.size() != 1) {
    fail(Errc::kShapeMismatch, "per-tensor quant params must have one pair");
  }
  for (double s : q.scales)
    if (!(s > 0.0)) fail(Errc::kInvalidArgument, "quant scale must be > 0");
}

template <typename V>
void check_size(const Shape& shape, const V& data) {
  if (shape_product(shape) != static_cast<int64_t>(data.size()))
    fail(Errc::kShapeMismatch, "shape " + shape_to_string(shape) +
                                   " does not match data length " +
                                   std::to_string(data.size()));
}

}  // namespace

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_size(shape_, std::get<0>(data_));
}

Tensor::Tensor(Shape shape, std::vector<int8_t> data, QuantParams quant)
    : shape_(std::move(shape)), data_(std::move(data)), quant_(std::move(quant)) {
  check_size(shape_, std::get<1>(data_));
  check_quant(shape_, *quant_);
}

Tensor::Tensor(Shape shape, std::vector<int32_t> data, QuantParams quant)
    : shape_(std::move(shape)), data_(std::move(data)), quant_(std::move(quant)) {
  check_size(shape_, std::get<2>(data_));
  check_quant(shape_, *quant_);
}

Tensor Tensor::zeros(Shape shape) {
  const auto n = static_cast<size_t>(shape_product(shape));
  return Tensor(std::move(shape), std::vector<float>(n, 0.0f));
}

size_t Tensor::size() const {
  return std::visit([](const auto& v) { return v.size(); }, data_);
}

namespace {
template <typename T, typename V>
auto& get_checked(V& data) {
  auto* p = std::get_if<std::vector<T>>(&data);
  if (!p) fail(Errc::kInvalidArgument, "tensor dtype mismatch");
  return *p;
}
}  // namespace

std::span<const float> Tensor::f32() const { return get_checked<float>(data_); }
std::span<float> Tensor::f32() { return get_checked<float>(data_); }
std::span<const int8_t> Tensor::i8() const { return get_checked<int8_t>(data_); }
std::span<int8_t> Tensor::i8() { return get_checked<int8_t>(data_); }
std::span<const int32_t> Tensor::i32() const {
  return get_checked<int32_t>(data_);
}
std::span<int32_t> Tensor::i32() { return get_checked<int32_t>(data_); }

std::span<const uint8_t> Tensor::bytes() const {
  return std::visit(
      [](const auto& v) {
        return std::span<const uint8_t>(
            reinterpret_cast<const uint8_t*>(v.data()),
            v.size() * sizeof(typename std::decay_t<decltype(v)>::value_type));
      },
      data_);
}

bool Tensor::operator==(const Tensor& other) const {
  if (shape_ != other.shape_ || data_.index() != other.data_.index() ||
      quant_ != other.quant_)
    return false;
  // Bitwise, so that NaN payloads and signed zeros compare scalar-exact.
  const auto a = bytes();
  const auto b = other.bytes();
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size()) == 0);
}

}  // namespace flamecam
