#pragma once

#include <span>
#include <vector>

#include "flamecam/infer.hpp"
#include "flamecam/tensor.hpp"

namespace flamecam {

struct ClassWeights {
  std::vector<double> probabilities;
  std::vector<double> weights;
};

// W = 1 / ln(1.02 + P)
double class_weight(double probability);
ClassWeights class_weights(const std::vector<SegMask>& masks,
                           int num_classes = kNumFlameClasses);

/// Which classes enter the macro average: all classes, or only the three
/// flame zones. A class enters the average when it is present in either
/// mask; a class absent from both scores 1.0 in the per-class vector.
enum class MacroScope { kAllClasses, kFlameOnly };

std::vector<double> dice_per_class(const SegMask& pred, const SegMask& truth,
                                   int num_classes = kNumFlameClasses);
double dice_macro(const SegMask& pred, const SegMask& truth,
                  MacroScope scope = MacroScope::kAllClasses,
                  int num_classes = kNumFlameClasses);

std::vector<double> jaccard_per_class(const SegMask& pred,
                                      const SegMask& truth,
                                      int num_classes = kNumFlameClasses);
double jaccard_macro(const SegMask& pred, const SegMask& truth,
                     MacroScope scope = MacroScope::kAllClasses,
                     int num_classes = kNumFlameClasses);

// -(1/N) sum_p W[truth(p)] * ln(max(prob_true, 1e-12))
double weighted_ce(const Tensor& probs, const SegMask& truth,
                   const ClassWeights& weights);

// Percent errors; any zero truth value throws Errc::kDivisionByZero.
double mape(std::span<const double> pred, std::span<const double> truth);
double rmspe(std::span<const double> pred, std::span<const double> truth);

}  // namespace flamecam
