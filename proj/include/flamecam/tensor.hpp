#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace flamecam {

using Shape = std::vector<int64_t>;

enum class DType : uint8_t { kFloat32, kInt8, kInt32 };

const char* dtype_name(DType dtype);
DType dtype_from_name(const std::string& name);
size_t dtype_size(DType dtype);

/// Affine quantization parameters: real = scale * (q - zero_point).
/// axis < 0 means per-tensor (one pair); otherwise one pair per slice of
/// the given axis.
struct QuantParams {
  std::vector<double> scales;
  std::vector<int32_t> zero_points;
  int axis = -1;

  static QuantParams per_tensor(double scale, int32_t zero_point);
  static QuantParams per_channel(std::vector<double> scales, int axis);

  bool per_channel() const { return axis >= 0; }
  double scale(size_t i = 0) const { return scales[per_channel() ? i : 0]; }
  int32_t zero_point(size_t i = 0) const {
    return zero_points[per_channel() ? i : 0];
  }

  bool operator==(const QuantParams&) const = default;
};

int8_t quantize_value(double real, double scale, int32_t zero_point);
double dequantize_value(int32_t q, double scale, int32_t zero_point);

/// Dense row-major array. Activations are (H, W, C) channels-last; conv
/// weights are (Cout, Cin, K, K). Integer tensors always carry QuantParams,
/// float tensors never do.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<float> data);
  Tensor(Shape shape, std::vector<int8_t> data, QuantParams quant);
  Tensor(Shape shape, std::vector<int32_t> data, QuantParams quant);

  static Tensor zeros(Shape shape);

  const Shape& shape() const { return shape_; }
  int64_t dim(size_t i) const { return shape_.at(i); }
  size_t rank() const { return shape_.size(); }
  size_t size() const;
  DType dtype() const { return static_cast<DType>(data_.index()); }
  bool empty() const { return size() == 0; }

  const std::optional<QuantParams>& quant() const { return quant_; }

  std::span<const float> f32() const;
  std::span<float> f32();
  std::span<const int8_t> i8() const;
  std::span<int8_t> i8();
  std::span<const int32_t> i32() const;
  std::span<int32_t> i32();

  // Raw little-endian bytes of the payload (host is assumed little-endian).
  std::span<const uint8_t> bytes() const;

  bool operator==(const Tensor& other) const;

 private:
  Shape shape_;
  std::variant<std::vector<float>, std::vector<int8_t>, std::vector<int32_t>>
      data_;
  std::optional<QuantParams> quant_;
};

int64_t shape_product(const Shape& shape);
std::string shape_to_string(const Shape& shape);

}  // namespace flamecam
