#include "doctest.h"
#include "flamecam/error.hpp"
#include "flamecam/infer.hpp"
#include "flamecam/prune.hpp"
#include "flamecam/synth.hpp"
#include "helpers.hpp"

using namespace flamecam;
using testutil::conv;
using testutil::simple;

namespace {

// conv0 -> relu -> conv1 -> relu -> conv2(target) -> relu -> conv3 -> relu -> conv4 -> relu -> conv5
// so conv2 and conv3 are prunable with two protected at each end.
ModelGraph chain(std::vector<float> target_w, std::vector<float> target_b) {
  ModelGraph g;
  g.input_shape = {2, 2, 1};
  g.num_classes = 1;
  int id = 1;
  auto add = [&](Layer l) {
    g.layers.push_back(std::move(l));
    return id++;
  };
  int prev = add(conv(id, {}, 1, 1, 1, {1}, {0}));
  prev = add(simple(id, LayerKind::kReLU, {prev}));
  prev = add(conv(id, {prev}, 1, 1, 1, {1}, {0}));
  prev = add(simple(id, LayerKind::kReLU, {prev}));
  prev = add(conv(id, {prev}, 1, 2, 1, std::move(target_w), std::move(target_b)));
  prev = add(simple(id, LayerKind::kReLU, {prev}));
  prev = add(conv(id, {prev}, 2, 1, 1, {1, 1}, {0}));
  prev = add(simple(id, LayerKind::kReLU, {prev}));
  prev = add(conv(id, {prev}, 1, 1, 1, {1}, {0}));
  prev = add(simple(id, LayerKind::kReLU, {prev}));
  add(conv(id, {prev}, 1, 1, 1, {1}, {0}));
  return g;
}

}  // namespace

TEST_CASE("protected layers are first two and last two convs") {
  UnetOptions o;
  const ModelGraph g = build_unet(o);
  const auto convs = conv_layer_indices(g);
  const auto p = protected_convs(g);
  CHECK(p.size() == 4);
  CHECK(p.count(g.layers[convs[0]].id));
  CHECK(p.count(g.layers[convs[1]].id));
  CHECK(p.count(g.layers[convs[convs.size() - 2]].id));
  CHECK(p.count(g.layers[convs.back()].id));
}

TEST_CASE("APoZ extremes and a half-zero map") {
  // filter 0 always negative, filter 1 always positive for inputs in [0, 1]
  const ModelGraph g = chain({-1.0f, 1.0f}, {-0.5f, 0.5f});
  std::vector<Tensor> frames{testutil::random_tensor({2, 2, 1}, 1),
                             testutil::random_tensor({2, 2, 1}, 2)};
  const auto r = compute_apoz(g, frames);
  CHECK(r.at(5, 0).apoz == 1.0);
  CHECK(r.at(5, 1).apoz == 0.0);
  CHECK(r.at(5, 0).prunable);
  CHECK_FALSE(r.at(1, 0).prunable);

  // input map {0.2, 0.8, 0.2, 0.8}: w=1, b=-0.5 gives two zeros of four
  const ModelGraph h = chain({1.0f, 1.0f}, {-0.5f, 0.5f});
  const Tensor x({2, 2, 1}, std::vector<float>{0.2f, 0.8f, 0.2f, 0.8f});
  int zeros = 0;
  forward_f32(h, x, [&](const Layer& l, const Tensor& t) {
    if (l.id != 6) return;
    for (size_t i = 0; i < t.size(); i += 2) zeros += t.f32()[i] == 0.0f;
  });
  CHECK(compute_apoz(h, {x}).at(5, 0).apoz == doctest::Approx(zeros / 4.0));
  CHECK(zeros == 2);
}

TEST_CASE("removing filters: parameter arithmetic") {
  UnetOptions o;
  o.input_shape = {16, 16, 3};
  const ModelGraph g = build_unet(o);
  const auto protect = protected_convs(g);
  const Layer* target = nullptr;
  for (const Layer& l : g.layers)
    if (l.kind == LayerKind::kConv2D && !protect.count(l.id) && g.consumers(l.id).size() == 1) {
      const Layer& act = g.layer(g.consumers(l.id)[0]);
      const auto next = g.consumers(act.id);
      if (next.size() == 1 && g.layer(next[0]).kind == LayerKind::kConv2D) {
        target = &l;
        break;
      }
    }
  REQUIRE(target);
  const Layer& next = g.layer(g.consumers(g.consumers(target->id)[0])[0]);
  const int64_t k = 3;
  std::set<FilterId> victims;
  for (int64_t i = 0; i < k; ++i) victims.insert({target->id, i * 2});
  const auto res = remove_filters(g, victims);
  const int64_t own = k * (target->in_channels * target->kernel * target->kernel + 1);
  const int64_t downstream = k * next.kernel * next.kernel * next.out_channels;
  CHECK(count_parameters(g) - count_parameters(res.graph) == own + downstream);
  CHECK(res.channels.at(target->id).size() == size_t(target->out_channels - k));
  CHECK(res.graph.layer(target->id).out_channels == target->out_channels - k);
}

TEST_CASE("removing an inert filter keeps the function") {
  UnetOptions o;
  o.input_shape = {16, 16, 3};
  o.dead_fraction = 0.25;
  const ModelGraph g = build_unet(o);
  const auto protect = protected_convs(g);
  std::set<FilterId> victims;
  for (const Layer& l : g.layers)
    if (l.kind == LayerKind::kConv2D && !protect.count(l.id))
      victims.insert({l.id, l.out_channels - 1});
  const ModelGraph p = remove_filters(g, victims).graph;
  for (uint64_t s = 0; s < 5; ++s) {
    const Tensor x = testutil::random_tensor({16, 16, 3}, s);
    CHECK(forward_f32(g, x) == forward_f32(p, x));
  }
}

TEST_CASE("pruning through a concat") {
  UnetOptions d;
  d.depth = 2;
  d.base_filters = 4;
  d.input_shape = {8, 8, 3};
  const ModelGraph h = build_unet(d);
  const Layer* cat = nullptr;
  for (const Layer& l : h.layers)
    if (l.kind == LayerKind::kConcat) {
      cat = &l;
      break;
    }
  REQUIRE(cat);
  // skip input chain: Concat <- ReLU <- Conv (level-2 encoder, prunable)
  const Layer& skip_act = h.layer(cat->inputs[0]);
  const Layer& skip_conv = h.layer(skip_act.inputs[0]);
  REQUIRE(skip_conv.kind == LayerKind::kConv2D);
  REQUIRE_FALSE(protected_convs(h).count(skip_conv.id));
  const Layer& dec = h.layer(h.consumers(cat->id)[0]);
  const auto res = remove_filters(h, {{skip_conv.id, 1}});
  CHECK(res.graph.layer(dec.id).in_channels == dec.in_channels - 1);
  CHECK_NOTHROW(validate_graph(res.graph));
}

TEST_CASE("remove_filters errors") {
  UnetOptions o;
  o.input_shape = {16, 16, 3};
  const ModelGraph g = build_unet(o);
  const int first = g.layers[conv_layer_indices(g)[0]].id;
  try {
    remove_filters(g, {{first, 0}});
    FAIL("expected protected-layer error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kProtectedLayer);
  }
  const auto protect = protected_convs(g);
  for (const Layer& l : g.layers)
    if (l.kind == LayerKind::kConv2D && !protect.count(l.id)) {
      std::set<FilterId> all;
      for (int64_t i = 0; i < l.out_channels; ++i) all.insert({l.id, i});
      try {
        remove_filters(g, all);
        FAIL("expected empty-layer error");
      } catch (const Error& e) {
        CHECK(e.code() == Errc::kEmptyLayer);
      }
      break;
    }
}

TEST_CASE("prune loop") {
  UnetOptions o;
  o.input_shape = {24, 32, 3};
  o.base_filters = 6;
  o.seed = 5;
  const ModelGraph g = build_unet(o);
  FlameSceneSpec base;
  base.height = 48;
  base.width = 64;
  base.nozzle_x = 4;
  base.nozzle_y = 24;
  std::vector<Tensor> frames;
  std::vector<SegMask> ref;
  for (const auto& r : generate_dataset(4, base, {4, 0, 0})) {
    frames.push_back(preprocess(to_bgr_frame(generate_scene(r.spec).frame), 24, 32));
    ref.push_back(postprocess(forward_f32(g, frames.back())));
  }

  SUBCASE("budget and monotone history") {
    const auto res = prune_loop(g, frames, ref);
    const double d0 = evaluate_dice(g, frames, ref);
    CHECK(evaluate_dice(res.graph, frames, ref) >= 0.97 * d0 - 1e-12);
    for (size_t i = 1; i < res.history.size(); ++i)
      if (res.history[i].accepted) CHECK(res.history[i].params < res.history[i - 1].params);
    CHECK(history_to_csv(res.history).rfind("round,params,macs,flops,dice,removed,accepted\n", 0) == 0);
  }

  SUBCASE("zero budget stops after one failed round") {
    PruneOptions strict;
    strict.max_drop = 0.0;
    strict.step_fraction = 0.5;
    const auto res = prune_loop(g, frames, ref, strict);
    CHECK(res.graph == g);
    REQUIRE(res.history.size() == 2);
    CHECK_FALSE(res.history[1].accepted);
  }

  SUBCASE("float graph only") {
    ModelGraph q = g;
    q.input_quant = QuantParams::per_tensor(1.0, 0);
    CHECK_THROWS_AS(prune_loop(q, frames, ref), Error);
  }
}
