#pragma once

#include "wsseg/types.hpp"

namespace wsseg {

/// Pairwise same-label indicator over the flattened map: A(i, j) = [M(i) == M(j)].
Matrix affinity_label(const LabelMap& labels, int num_classes);

/// Sum (not mean) of per-pixel softmax cross-entropy over non-ignored pixels.
struct CrossEntropySum {
  double sum = 0.0;
  std::size_t count = 0;
};

/// `logits` is pixels x classes; `targets` has one entry per pixel (kIgnoreLabel skipped).
/// When `grad` is given, d(sum)/d(logits) is written into it.
CrossEntropySum cross_entropy_sum(const Matrix& logits, const std::vector<int>& targets, Matrix* grad = nullptr);

/// Mean softmax cross-entropy over non-ignored pixels.
double segmentation_loss(const Matrix& logits, const std::vector<int>& targets);

inline constexpr double kAffinityClamp = 1e-7;

/// Mean binary cross-entropy between an affinity (probabilities, clamped to
/// [1e-7, 1 - 1e-7]) and a binary label. When `grad_logits` is given it receives
/// d(mean)/d(z) for affinity = sigmoid(z); entries at the clamp get zero.
double affinity_loss(const Matrix& affinity, const Matrix& label, Matrix* grad_logits = nullptr);

struct LossBreakdown {
  double seg_loss = 0.0;
  double aff_loss = 0.0;
  double total = 0.0;
  double lambda = 0.0;
};

/// total = seg + lambda * aff.
LossBreakdown total_loss(double seg_loss, double aff_loss, double lambda);

}  // namespace wsseg
