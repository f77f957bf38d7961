#include <cmath>

#include "doctest.h"
#include "flamecam/error.hpp"
#include "flamecam/infer.hpp"
#include "flamecam/quantize.hpp"
#include "helpers.hpp"

using namespace flamecam;
using testutil::conv;
using testutil::simple;

namespace {

// conv(1->1) -> relu -> conv(1->1)
ModelGraph pair_graph(float w1, float b1, float w2) {
  ModelGraph g;
  g.input_shape = {3, 3, 1};
  g.num_classes = 1;
  g.layers.push_back(conv(1, {}, 1, 1, 1, {w1}, {b1}));
  g.layers.push_back(simple(2, LayerKind::kReLU, {1}));
  g.layers.push_back(conv(3, {2}, 1, 1, 1, {w2}, {0.0f}));
  return g;
}

}  // namespace

TEST_CASE("CLE hand pair") {
  const ModelGraph g = pair_graph(4.0f, 0.0f, 1.0f);
  const auto pairs = find_equalization_pairs(g);
  REQUIRE(pairs.size() == 1);
  const ModelGraph e = equalize_cross_layer(g, 1);
  CHECK(e.layers[0].weights.f32()[0] == doctest::Approx(2.0));
  CHECK(e.layers[2].weights.f32()[0] == doctest::Approx(2.0));
}

TEST_CASE("CLE fixed point") {
  const ModelGraph g = pair_graph(1.5f, 0.5f, 1.5f);
  CHECK(equalize_cross_layer(g, 30) == g);
}

TEST_CASE("CLE preserves the float function") {
  UnetOptions o;
  o.input_shape = {16, 16, 3};
  o.seed = 12;
  const ModelGraph g = build_unet(o);
  for (int passes : {1, 30}) {
    const ModelGraph e = equalize_cross_layer(g, passes);
    for (uint64_t s = 0; s < 10; ++s) {
      const Tensor x = testutil::random_tensor({16, 16, 3}, s);
      CHECK(testutil::max_abs_diff(forward_f32(g, x), forward_f32(e, x)) <= 1e-4);
    }
  }
}

TEST_CASE("CLE requires folded BN") {
  UnetOptions o;
  o.with_batchnorm = true;
  CHECK_THROWS_AS(equalize_cross_layer(build_unet(o)), Error);
}

TEST_CASE("CLE skips pairs across pool or concat") {
  UnetOptions o;
  o.depth = 1;
  o.base_filters = 2;
  o.input_shape = {4, 4, 1};
  const ModelGraph g = build_unet(o);
  for (const auto& p : find_equalization_pairs(g)) {
    CHECK(g.layer(p.first_conv).kind == LayerKind::kConv2D);
    CHECK(g.layer(p.second_conv).inputs == std::vector<int>{p.activation});
  }
}

TEST_CASE("calibration of a constant frame") {
  ModelGraph g = pair_graph(2.0f, 1.0f, 3.0f);
  const Tensor x({3, 3, 1}, std::vector<float>(9, 0.5f));
  const auto st = calibrate(g, {x});
  CHECK(st.tensors.at(1).min == st.tensors.at(1).max);
  CHECK(st.tensors.at(1).min == doctest::Approx(2.0));
  CHECK(st.tensors.at(kInputTensorKey).min == 0.5f);
}

TEST_CASE("calibration is idempotent on duplicates") {
  UnetOptions o;
  o.input_shape = {8, 8, 3};
  const ModelGraph g = build_unet(o);
  const Tensor x = testutil::random_tensor({8, 8, 3}, 4);
  const auto one = calibrate(g, {x});
  auto two = calibrate(g, {x, x});
  CHECK(two.frames == 2);
  for (const auto& [id, s] : one.tensors) {
    CHECK(two.tensors.at(id).min == s.min);
    CHECK(two.tensors.at(id).max == s.max);
  }
}

TEST_CASE("calibration min/max match exhaustive recording") {
  UnetOptions o;
  o.input_shape = {8, 8, 3};
  const ModelGraph g = build_unet(o);
  std::vector<Tensor> frames;
  for (uint64_t s = 0; s < 3; ++s) frames.push_back(testutil::random_tensor({8, 8, 3}, s));
  std::map<int, std::vector<float>> seen;
  for (const auto& f : frames)
    forward_f32(g, f, [&](const Layer& l, const Tensor& t) {
      auto& v = seen[l.id];
      v.insert(v.end(), t.f32().begin(), t.f32().end());
    });
  const auto st = calibrate(g, frames);
  for (const auto& [id, v] : seen) {
    CHECK(st.tensors.at(id).min == *std::min_element(v.begin(), v.end()));
    CHECK(st.tensors.at(id).max == *std::max_element(v.begin(), v.end()));
    CHECK(st.tensors.at(id).count == static_cast<int64_t>(v.size()));
  }
  CHECK_THROWS_AS(calibrate(g, {}), Error);
}

TEST_CASE("stats merge and json round trip") {
  UnetOptions o;
  o.input_shape = {8, 8, 3};
  const ModelGraph g = build_unet(o);
  const Tensor a = testutil::random_tensor({8, 8, 3}, 1), b = testutil::random_tensor({8, 8, 3}, 2);
  const auto sa = calibrate(g, {a}, true), sb = calibrate(g, {b}, true);
  const auto ab = merge_stats(sa, sb), ba = merge_stats(sb, sa);
  const auto both = calibrate(g, {a, b});
  for (const auto& [id, s] : both.tensors) {
    CHECK(ab.tensors.at(id).min == s.min);
    CHECK(ab.tensors.at(id).max == s.max);
    CHECK(ba.tensors.at(id).min == s.min);
  }
  CHECK(stats_from_json(stats_to_json(ab)) == ab);
}

TEST_CASE("quantization parameter arithmetic") {
  const Tensor w({1, 1, 1, 2}, std::vector<float>{1.27f, -0.5f});
  CHECK(weight_params(w).scale(0) == doctest::Approx(0.01));
  CHECK(weight_params(w).zero_point(0) == 0);
  const QuantParams a = activation_params(0.0, 2.55);
  CHECK(a.scale() == doctest::Approx(0.01));
  CHECK(a.zero_point() == -128);
  const QuantParams d = activation_params(0.0, 0.0);
  CHECK(d.scale() == doctest::Approx(1e-8));
}

TEST_CASE("quantized model structure and rounding bound") {
  UnetOptions o;
  o.input_shape = {8, 8, 3};
  const ModelGraph g = build_unet(o);
  const ModelGraph q = quantize_model(g, calibrate(g, {testutil::random_tensor({8, 8, 3}, 1)}));
  CHECK(q.quantized());
  CHECK_NOTHROW(validate_graph(q));
  for (size_t i = 0; i < g.layers.size(); ++i) {
    const Layer& fl = g.layers[i];
    const Layer& ql = q.layers[i];
    CHECK(ql.output_quant.has_value());
    if (fl.kind != LayerKind::kConv2D) continue;
    REQUIRE(ql.weights.dtype() == DType::kInt8);
    CHECK(ql.bias.dtype() == DType::kInt32);
    const auto fw = fl.weights.f32();
    const auto qw = ql.weights.i8();
    const size_t per = fw.size() / fl.out_channels;
    for (size_t j = 0; j < fw.size(); ++j) {
      const double s = ql.weights.quant()->scale(j / per);
      CHECK(std::abs(qw[j] * s - fw[j]) <= s / 2 + 1e-12);
    }
  }
}

TEST_CASE("quantization is monotone") {
  int prev = -129;
  for (double x = -3; x <= 3; x += 0.013) {
    const int q = quantize_value(x, 0.02, 5);
    CHECK(q >= prev);
    prev = q;
  }
}

TEST_CASE("missing stats") {
  UnetOptions o;
  o.input_shape = {8, 8, 3};
  const ModelGraph g = build_unet(o);
  auto st = calibrate(g, {testutil::random_tensor({8, 8, 3}, 1)});
  st.tensors.erase(st.tensors.begin()->first == kInputTensorKey ? std::next(st.tensors.begin())->first
                                                                : st.tensors.begin()->first);
  try {
    quantize_model(g, st);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kMissingStats);
  }
}

TEST_CASE("percentile scheme needs histograms") {
  UnetOptions o;
  o.input_shape = {8, 8, 3};
  const ModelGraph g = build_unet(o);
  QuantizeOptions p;
  p.scheme = CalibrationScheme::kPercentile;
  const auto plain = calibrate(g, {testutil::random_tensor({8, 8, 3}, 1)});
  CHECK_THROWS_AS(quantize_model(g, plain, p), Error);
  const auto hist = calibrate(g, {testutil::random_tensor({8, 8, 3}, 1)}, true);
  CHECK(quantize_model(g, hist, p).quantized());
}
