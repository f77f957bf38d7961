#include <cmath>

#include "doctest.h"
#include "flamecam/error.hpp"
#include "flamecam/metrics.hpp"
#include "helpers.hpp"

using namespace flamecam;

TEST_CASE("class weight scalar values") {
  CHECK(class_weight(0.0) == doctest::Approx(1.0 / std::log(1.02)).epsilon(1e-12));
  CHECK(class_weight(0.0) == doctest::Approx(50.4983).epsilon(1e-5));
  CHECK(class_weight(0.98) == doctest::Approx(1.4427).epsilon(1e-5));
}

TEST_CASE("class weights from masks") {
  // 8553 of 10000 background pixels
  SegMask m(100, 100);
  for (size_t i = 8553; i < m.labels.size(); ++i) m.labels[i] = 1;
  const auto w = class_weights({m});
  CHECK(w.probabilities[0] == doctest::Approx(0.8553));
  CHECK(std::abs(w.weights[0] - 1.5901) <= 1e-3);
  CHECK(w.weights[2] == doctest::Approx(1.0 / std::log(1.02)));
  CHECK_THROWS_AS(class_weights({}), Error);
}

TEST_CASE("dice and jaccard hand cases") {
  SegMask a(1, 8), b(1, 8);
  a.labels = {1, 1, 1, 1, 0, 0, 0, 0};
  b.labels = {0, 0, 1, 1, 1, 1, 0, 0};
  CHECK(dice_per_class(a, b)[1] == doctest::Approx(0.5));
  CHECK(jaccard_per_class(a, b)[1] == doctest::Approx(1.0 / 3));
  CHECK(dice_macro(a, a) == 1.0);
  CHECK(jaccard_macro(a, a) == 1.0);

  SegMask c(1, 4), d(1, 4);
  c.labels = {2, 2, 0, 0};
  d.labels = {0, 0, 2, 2};
  CHECK(dice_per_class(c, d)[2] == 0.0);
  CHECK(dice_macro(c, d, MacroScope::kFlameOnly) == 0.0);
  CHECK_THROWS_AS(dice_macro(a, c), Error);
}

TEST_CASE("dice-jaccard identity and symmetry on random pairs") {
  Xorshift64Star rng(8);
  for (int t = 0; t < 200; ++t) {
    SegMask a(9, 11), b(9, 11);
    for (auto& v : a.labels) v = static_cast<uint8_t>(rng.uniform_int(0, 3));
    for (auto& v : b.labels) v = static_cast<uint8_t>(rng.uniform_int(0, 3));
    const auto d = dice_per_class(a, b), j = jaccard_per_class(a, b);
    for (int c = 0; c < 4; ++c) CHECK(std::abs(d[c] - 2 * j[c] / (1 + j[c])) <= 1e-12);
    CHECK(dice_macro(a, b) == dice_macro(b, a));
  }
}

TEST_CASE("weighted cross-entropy") {
  SegMask truth(1, 2);
  truth.labels = {0, 3};
  const Tensor onehot({1, 2, 4}, std::vector<float>{1, 0, 0, 0, 0, 0, 0, 1});
  const ClassWeights ones{{}, {1, 1, 1, 1}};
  CHECK(weighted_ce(onehot, truth, ones) == doctest::Approx(0.0));
  const Tensor uniform({1, 2, 4}, std::vector<float>(8, 0.25f));
  CHECK(weighted_ce(uniform, truth, ones) == doctest::Approx(std::log(4.0)));
  const ClassWeights twos{{}, {2, 2, 2, 2}};
  CHECK(weighted_ce(uniform, truth, twos) == doctest::Approx(2 * weighted_ce(uniform, truth, ones)));
}

TEST_CASE("percentage errors") {
  const std::vector<double> t{100, 200}, p{110, 180};
  CHECK(mape(t, t) == 0.0);
  CHECK(rmspe(t, t) == 0.0);
  CHECK(mape(p, t) == 10.0);
  CHECK(rmspe(p, t) == 10.0);
  const std::vector<double> t1{100}, p1{90};
  CHECK(mape(p1, t1) == 10.0);
  CHECK(rmspe(p1, t1) == 10.0);
  const std::vector<double> z{0.0, 1.0};
  try {
    mape(z, z);
    FAIL("expected division by zero");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kDivisionByZero);
  }
  CHECK_THROWS_AS(rmspe(z, z), Error);
}
