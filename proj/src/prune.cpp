#include "flamecam/prune.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "flamecam/complexity.hpp"
#include "flamecam/error.hpp"
#include "flamecam/metrics.hpp"

namespace flamecam {

const FilterApoz& ApozReport::at(int layer_id, int64_t filter) const {
  for (const auto& f : filters)
    if (f.layer_id == layer_id && f.filter == filter) return f;
  fail(Errc::kInvalidArgument, "no APoZ entry for layer #" + std::to_string(layer_id));
}

std::set<int> protected_convs(const ModelGraph& graph) {
  const auto convs = conv_layer_indices(graph);
  std::set<int> out;
  for (size_t n = 0; n < convs.size(); ++n)
    if (n < 2 || n + 2 >= convs.size()) out.insert(graph.layers[convs[n]].id);
  return out;
}

namespace {

// The layer whose output decides a conv filter's APoZ: its activation when
// reached through an optional BatchNorm, else the conv itself.
int scored_layer(const ModelGraph& g, int conv_id) {
  int id = conv_id;
  for (int hop = 0; hop < 2; ++hop) {
    const auto c = g.consumers(id);
    if (c.size() != 1) break;
    const Layer& next = g.layer(c[0]);
    if (next.kind == LayerKind::kReLU || next.kind == LayerKind::kLeakyReLU) return next.id;
    if (next.kind != LayerKind::kBatchNorm) break;
    id = next.id;
  }
  return conv_id;
}

}  // namespace

ApozReport compute_apoz(const ModelGraph& graph, const std::vector<Tensor>& frames) {
  if (frames.empty()) fail(Errc::kEmptyInput, "APoZ needs at least one frame");
  if (graph.quantized()) fail(Errc::kInvalidArgument, "APoZ needs a float graph");

  const auto protect = protected_convs(graph);
  std::map<int, int> watched;  // scored layer id -> conv id
  std::map<int, std::vector<int64_t>> zeros;
  std::map<int, int64_t> positions;
  for (size_t i : conv_layer_indices(graph)) {
    const Layer& conv = graph.layers[i];
    watched[scored_layer(graph, conv.id)] = conv.id;
    zeros[conv.id].assign(static_cast<size_t>(conv.out_channels), 0);
    positions[conv.id] = 0;
  }

  for (const auto& f : frames) {
    forward_f32(graph, f, [&](const Layer& l, const Tensor& t) {
      auto it = watched.find(l.id);
      if (it == watched.end()) return;
      auto& z = zeros[it->second];
      const int64_t c = t.dim(2);
      const auto v = t.f32();
      const bool leaky = l.kind == LayerKind::kLeakyReLU;
      for (size_t j = 0; j < v.size(); ++j) {
        const bool zero = leaky ? std::abs(v[j]) <= 1e-9f : v[j] == 0.0f;
        if (zero) ++z[j % static_cast<size_t>(c)];
      }
      positions[it->second] += static_cast<int64_t>(v.size()) / c;
    });
  }

  ApozReport report;
  report.frames = static_cast<int64_t>(frames.size());
  for (size_t i : conv_layer_indices(graph)) {
    const Layer& conv = graph.layers[i];
    const int64_t row = conv.in_channels * conv.kernel * conv.kernel;
    const auto w = conv.weights.f32();
    for (int64_t k = 0; k < conv.out_channels; ++k) {
      FilterApoz fa;
      fa.layer_id = conv.id;
      fa.filter = k;
      fa.apoz = static_cast<double>(zeros[conv.id][k]) /
                static_cast<double>(std::max<int64_t>(positions[conv.id], 1));
      for (int64_t j = 0; j < row; ++j) fa.weight_l1 += std::abs(w[k * row + j]);
      fa.weight_l1 += std::abs(conv.bias.f32()[k]);
      fa.prunable = !protect.count(conv.id);
      report.filters.push_back(fa);
    }
  }
  return report;
}

PruneResult remove_filters(const ModelGraph& graph, const std::set<FilterId>& victims) {
  if (graph.quantized()) fail(Errc::kInvalidArgument, "prune the float graph, then quantize");
  const auto shapes = validate_graph(graph);
  const auto protect = protected_convs(graph);

  std::map<int, std::set<int64_t>> by_layer;
  for (const auto& [id, k] : victims) {
    const Layer& l = graph.layer(id);
    if (l.kind != LayerKind::kConv2D)
      fail(Errc::kInvalidArgument, "layer #" + std::to_string(id) + " is not a conv");
    if (protect.count(id))
      fail(Errc::kProtectedLayer, "conv #" + std::to_string(id) + " is protected");
    if (k < 0 || k >= l.out_channels)
      fail(Errc::kInvalidArgument, "filter index out of range");
    by_layer[id].insert(k);
  }
  for (const auto& [id, ks] : by_layer)
    if (static_cast<int64_t>(ks.size()) >= graph.layer(id).out_channels)
      fail(Errc::kEmptyLayer, "pruning would remove every filter of conv #" +
                                  std::to_string(id));

  ModelGraph out = graph;
  ChannelMap kept;
  std::vector<int64_t> input_all(static_cast<size_t>(graph.input_shape.c));
  for (size_t j = 0; j < input_all.size(); ++j) input_all[j] = static_cast<int64_t>(j);

  for (size_t i = 0; i < out.layers.size(); ++i) {
    Layer& l = out.layers[i];
    const std::vector<int64_t>& in_kept =
        l.inputs.empty() ? input_all : kept.at(l.inputs[0]);
    switch (l.kind) {
      case LayerKind::kConv2D: {
        std::vector<int64_t> rows;
        const auto& drop = by_layer[l.id];
        for (int64_t k = 0; k < l.out_channels; ++k)
          if (!drop.count(k)) rows.push_back(k);
        const int64_t kk = l.kernel * l.kernel;
        const auto w = l.weights.f32();
        const auto b = l.bias.f32();
        std::vector<float> nw;
        std::vector<float> nb;
        nw.reserve(rows.size() * in_kept.size() * kk);
        for (int64_t o : rows) {
          for (int64_t c : in_kept) {
            const float* src = w.data() + (o * l.in_channels + c) * kk;
            nw.insert(nw.end(), src, src + kk);
          }
          nb.push_back(b[o]);
        }
        const auto cout = static_cast<int64_t>(rows.size());
        const auto cin = static_cast<int64_t>(in_kept.size());
        l.weights = Tensor({cout, cin, l.kernel, l.kernel}, std::move(nw));
        l.bias = Tensor({cout}, std::move(nb));
        l.out_channels = cout;
        l.in_channels = cin;
        kept[l.id] = std::move(rows);
        break;
      }
      case LayerKind::kBatchNorm: {
        auto slice = [&](std::vector<float>& v) {
          std::vector<float> s;
          for (int64_t c : in_kept) s.push_back(v[c]);
          v = std::move(s);
        };
        slice(l.gamma);
        slice(l.beta);
        slice(l.mean);
        slice(l.var);
        kept[l.id] = in_kept;
        break;
      }
      case LayerKind::kConcat: {
        std::vector<int64_t> merged;
        int64_t offset = 0;
        for (int src : l.inputs) {
          for (int64_t c : kept.at(src)) merged.push_back(offset + c);
          offset += shapes[graph.index_of(src)].c;
        }
        kept[l.id] = std::move(merged);
        break;
      }
      default:
        kept[l.id] = in_kept;
        break;
    }
  }
  validate_graph(out);
  return {std::move(out), std::move(kept)};
}

double evaluate_dice(const ModelGraph& graph, const std::vector<Tensor>& frames,
                     const std::vector<SegMask>& reference) {
  if (frames.empty()) fail(Errc::kEmptyInput, "Dice needs at least one frame");
  if (frames.size() != reference.size())
    fail(Errc::kInvalidArgument, "frames and reference masks differ in count");
  double sum = 0.0;
  for (size_t i = 0; i < frames.size(); ++i)
    sum += dice_macro(postprocess(run_model(graph, frames[i])), reference[i]);
  return sum / static_cast<double>(frames.size());
}

PruneLoopResult prune_loop(const ModelGraph& graph, const std::vector<Tensor>& frames,
                           const std::vector<SegMask>& reference, const PruneOptions& opt) {
  if (frames.empty()) fail(Errc::kEmptyInput, "initial Dice is unevaluable without frames");
  if (!(opt.step_fraction > 0.0) || opt.step_fraction > 1.0)
    fail(Errc::kInvalidArgument, "step_fraction must be in (0, 1]");
  if (opt.max_drop < 0.0) fail(Errc::kInvalidArgument, "max_drop must be >= 0");

  auto row_for = [&](const ModelGraph& g, int round, int64_t removed, double dice) {
    const auto cost = model_complexity(g).total;
    return PruneRound{round, removed, count_parameters(g), cost.macs, cost.flops, dice, true};
  };

  PruneLoopResult result{graph, {}};
  const double dice0 = evaluate_dice(graph, frames, reference);
  result.history.push_back(row_for(graph, 0, 0, dice0));

  for (int round = 1; round <= opt.max_rounds; ++round) {
    const ModelGraph& current = result.graph;
    const ApozReport report = compute_apoz(current, frames);

    std::vector<const FilterApoz*> candidates;
    for (const auto& f : report.filters)
      if (f.prunable) candidates.push_back(&f);
    if (candidates.empty()) break;
    std::map<int, size_t> position;
    for (size_t i = 0; i < current.layers.size(); ++i) position[current.layers[i].id] = i;
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](const FilterApoz* a, const FilterApoz* b) {
                       if (a->apoz != b->apoz) return a->apoz > b->apoz;
                       if (a->weight_l1 != b->weight_l1) return a->weight_l1 < b->weight_l1;
                       if (a->layer_id != b->layer_id)
                         return position[a->layer_id] < position[b->layer_id];
                       return a->filter < b->filter;
                     });

    const auto quota = static_cast<size_t>(
        std::ceil(opt.step_fraction * static_cast<double>(candidates.size()) - 1e-9));
    std::map<int, int64_t> remaining;
    for (const auto* c : candidates) remaining.try_emplace(c->layer_id, current.layer(c->layer_id).out_channels);
    std::set<FilterId> victims;
    for (const auto* c : candidates) {
      if (victims.size() >= quota) break;
      if (remaining[c->layer_id] <= 1) continue;
      --remaining[c->layer_id];
      victims.insert({c->layer_id, c->filter});
    }
    if (victims.empty()) break;

    PruneResult pruned = remove_filters(current, victims);
    const double dice = evaluate_dice(pruned.graph, frames, reference);
    PruneRound row = row_for(pruned.graph, round, static_cast<int64_t>(victims.size()), dice);
    const double drop = dice0 > 0.0 ? (dice0 - dice) / dice0 : 0.0;
    if (drop > opt.max_drop) {
      row.accepted = false;
      result.history.push_back(row);
      break;
    }
    result.history.push_back(row);
    result.graph = std::move(pruned.graph);
  }
  return result;
}

std::string history_to_csv(const std::vector<PruneRound>& history) {
  std::ostringstream os;
  os << "round,params,macs,flops,dice,removed,accepted\n" << std::setprecision(10);
  for (const auto& r : history)
    os << r.round << ',' << r.params << ',' << r.macs << ',' << r.flops << ',' << r.dice
       << ',' << r.removed << ',' << (r.accepted ? 1 : 0) << '\n';
  return os.str();
}

}  // namespace flamecam
