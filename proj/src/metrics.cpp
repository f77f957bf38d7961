#include "flamecam/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "flamecam/error.hpp"

namespace flamecam {

double class_weight(double p) { return 1.0 / std::log(1.02 + p); }

ClassWeights class_weights(const std::vector<SegMask>& masks, int num_classes) {
  if (masks.empty()) fail(Errc::kEmptyInput, "class weights need at least one mask");
  std::vector<int64_t> counts(static_cast<size_t>(num_classes), 0);
  int64_t total = 0;
  for (const auto& m : masks) {
    for (uint8_t v : m.labels) {
      if (v >= num_classes) fail(Errc::kInvalidArgument, "mask value out of range");
      ++counts[v];
    }
    total += static_cast<int64_t>(m.labels.size());
  }
  if (total == 0) fail(Errc::kEmptyInput, "masks contain no pixels");
  ClassWeights w;
  for (auto c : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(total);
    w.probabilities.push_back(p);
    w.weights.push_back(class_weight(p));
  }
  return w;
}

namespace {

struct Overlap {
  std::vector<int64_t> pred, truth, both;
};

Overlap overlap(const SegMask& pred, const SegMask& truth, int num_classes) {
  if (pred.height != truth.height || pred.width != truth.width)
    fail(Errc::kShapeMismatch, "masks differ in shape");
  Overlap o;
  o.pred.assign(static_cast<size_t>(num_classes), 0);
  o.truth = o.both = o.pred;
  for (size_t i = 0; i < pred.labels.size(); ++i) {
    const uint8_t p = pred.labels[i], t = truth.labels[i];
    if (p >= num_classes || t >= num_classes)
      fail(Errc::kInvalidArgument, "mask value out of range");
    ++o.pred[p];
    ++o.truth[t];
    if (p == t) ++o.both[p];
  }
  return o;
}

double macro(const std::vector<double>& per_class, const Overlap& o, MacroScope scope) {
  double sum = 0.0;
  int n = 0;
  const size_t first = scope == MacroScope::kFlameOnly ? 1 : 0;
  for (size_t c = first; c < per_class.size(); ++c) {
    if (o.pred[c] == 0 && o.truth[c] == 0) continue;
    sum += per_class[c];
    ++n;
  }
  return n ? sum / n : 1.0;
}

}  // namespace

std::vector<double> dice_per_class(const SegMask& pred, const SegMask& truth, int num_classes) {
  const Overlap o = overlap(pred, truth, num_classes);
  std::vector<double> d(static_cast<size_t>(num_classes), 1.0);
  for (size_t c = 0; c < d.size(); ++c) {
    const int64_t denom = o.pred[c] + o.truth[c];
    if (denom) d[c] = 2.0 * static_cast<double>(o.both[c]) / static_cast<double>(denom);
  }
  return d;
}

double dice_macro(const SegMask& pred, const SegMask& truth, MacroScope scope,
                  int num_classes) {
  return macro(dice_per_class(pred, truth, num_classes), overlap(pred, truth, num_classes),
               scope);
}

std::vector<double> jaccard_per_class(const SegMask& pred, const SegMask& truth,
                                      int num_classes) {
  const Overlap o = overlap(pred, truth, num_classes);
  std::vector<double> j(static_cast<size_t>(num_classes), 1.0);
  for (size_t c = 0; c < j.size(); ++c) {
    const int64_t uni = o.pred[c] + o.truth[c] - o.both[c];
    if (uni) j[c] = static_cast<double>(o.both[c]) / static_cast<double>(uni);
  }
  return j;
}

double jaccard_macro(const SegMask& pred, const SegMask& truth, MacroScope scope,
                     int num_classes) {
  return macro(jaccard_per_class(pred, truth, num_classes), overlap(pred, truth, num_classes),
               scope);
}

double weighted_ce(const Tensor& probs, const SegMask& truth, const ClassWeights& weights) {
  if (probs.rank() != 3 || probs.dim(0) != truth.height || probs.dim(1) != truth.width)
    fail(Errc::kShapeMismatch, "probabilities and mask differ in shape");
  const int64_t c = probs.dim(2);
  if (static_cast<int64_t>(weights.weights.size()) != c)
    fail(Errc::kShapeMismatch, "one weight per class required");
  const auto p = probs.f32();
  double sum = 0.0;
  for (size_t i = 0; i < truth.labels.size(); ++i) {
    const uint8_t t = truth.labels[i];
    if (t >= c) fail(Errc::kInvalidArgument, "mask value out of range");
    const double q = std::max(static_cast<double>(p[i * c + t]), 1e-12);
    sum += weights.weights[t] * std::log(q);
  }
  return truth.labels.empty() ? 0.0 : -sum / static_cast<double>(truth.labels.size());
}

namespace {
std::vector<double> relative_errors(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) fail(Errc::kShapeMismatch, "length mismatch");
  if (truth.empty()) fail(Errc::kEmptyInput, "no values");
  std::vector<double> r(truth.size());
  for (size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == 0.0) fail(Errc::kDivisionByZero, "truth value is zero");
    r[i] = (pred[i] - truth[i]) / truth[i];
  }
  return r;
}
}  // namespace

double mape(std::span<const double> pred, std::span<const double> truth) {
  double sum = 0.0;
  const auto r = relative_errors(pred, truth);
  for (double e : r) sum += std::abs(e);
  return 100.0 * sum / static_cast<double>(r.size());
}

double rmspe(std::span<const double> pred, std::span<const double> truth) {
  double sum = 0.0;
  const auto r = relative_errors(pred, truth);
  for (double e : r) sum += e * e;
  return 100.0 * std::sqrt(sum / static_cast<double>(r.size()));
}

}  // namespace flamecam
