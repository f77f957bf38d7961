#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "flamecam/graph.hpp"
#include "flamecam/infer.hpp"

namespace flamecam {

struct FilterApoz {
  int layer_id = 0;
  int64_t filter = 0;
  double apoz = 0.0;
  double weight_l1 = 0.0;  // secondary ranking key
  bool prunable = false;
};

struct ApozReport {
  std::vector<FilterApoz> filters;  // grouped by conv, in filter order
  int64_t frames = 0;

  const FilterApoz& at(int layer_id, int64_t filter) const;
};

// Ids of the first two and last two Conv2D layers.
std::set<int> protected_convs(const ModelGraph& graph);

/// Fraction of exactly-zero post-activation values per conv filter over all
/// frames and positions. The activation is the first ReLU/LeakyReLU after
/// the conv (through an optional BatchNorm); LeakyReLU counts |a| <= 1e-9.
/// Convs with no activation are scored on their raw output.
ApozReport compute_apoz(const ModelGraph& graph,
                        const std::vector<Tensor>& frames);

using FilterId = std::pair<int, int64_t>;  // (layer id, filter index)

// layer id -> surviving original output channel indices, in order.
using ChannelMap = std::map<int, std::vector<int64_t>>;

struct PruneResult {
  ModelGraph graph;
  ChannelMap channels;
};

/// Structured removal of conv filters. Downstream consumers lose the matching
/// input columns, through BatchNorm, activations, pooling, upsampling and
/// Concat (with per-input offset translation).
PruneResult remove_filters(const ModelGraph& graph,
                           const std::set<FilterId>& victims);

struct PruneRound {
  int round = 0;
  int64_t removed = 0;
  int64_t params = 0;
  int64_t macs = 0;
  int64_t flops = 0;
  double dice = 0.0;
  bool accepted = true;
};

struct PruneOptions {
  double step_fraction = 0.03;
  double max_drop = 0.03;  // relative Dice drop from the input model
  int max_rounds = 1000;
};

struct PruneLoopResult {
  ModelGraph graph;
  std::vector<PruneRound> history;  // row 0 is the input model
};

// Mean macro Dice of the model's masks against the reference masks.
double evaluate_dice(const ModelGraph& graph, const std::vector<Tensor>& frames,
                     const std::vector<SegMask>& reference);

/// Iterative APoZ pruning without fine-tuning: each round re-scores APoZ,
/// removes ceil(step * prunable filters) filters ranked by APoZ descending
/// (ties: smaller L1 weight norm first), and evaluates Dice. Stops on the
/// first round whose relative Dice drop exceeds max_drop and returns the
/// last model within budget.
PruneLoopResult prune_loop(const ModelGraph& graph,
                           const std::vector<Tensor>& frames,
                           const std::vector<SegMask>& reference,
                           const PruneOptions& options = {});

std::string history_to_csv(const std::vector<PruneRound>& history);

}  // namespace flamecam
