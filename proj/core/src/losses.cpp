#include "wsseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wsseg {

Matrix affinity_label(const LabelMap& labels, int num_classes) {
  for (int v : labels.labels) {
    if (v < 0 || v >= num_classes) {
      throw std::out_of_range("affinity_label: label " + std::to_string(v) + " outside [0, " +
                              std::to_string(num_classes) + ")");
    }
  }
  // One-hot product O^T O, written out directly.
  const auto n = static_cast<Eigen::Index>(labels.size());
  Matrix a(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int li = labels.labels[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = li == labels.labels[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
  }
  return a;
}

CrossEntropySum cross_entropy_sum(const Matrix& logits, const std::vector<int>& targets, Matrix* grad) {
  if (static_cast<Eigen::Index>(targets.size()) != logits.rows()) {
    throw ShapeError("cross entropy: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(logits.rows()) + " pixels");
  }
  const Eigen::Index classes = logits.cols();
  if (grad) grad->setZero(logits.rows(), classes);
  CrossEntropySum out;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int t = targets[static_cast<std::size_t>(i)];
    if (t == kIgnoreLabel) continue;
    if (t < 0 || t >= classes) {
      throw std::out_of_range("cross entropy: target " + std::to_string(t) + " outside [0, " +
                              std::to_string(classes) + ")");
    }
    const auto row = logits.row(i);
    const double m = row.maxCoeff();
    const double z = (row.array() - m).exp().sum();
    out.sum += std::log(z) + m - row(t);
    ++out.count;
    if (grad) {
      grad->row(i) = ((row.array() - m).exp() / z).matrix();
      (*grad)(i, t) -= 1.0;
    }
  }
  if (!std::isfinite(out.sum)) throw NumericError("cross entropy is not finite");
  return out;
}

double segmentation_loss(const Matrix& logits, const std::vector<int>& targets) {
  const CrossEntropySum ce = cross_entropy_sum(logits, targets);
  return ce.count == 0 ? 0.0 : ce.sum / static_cast<double>(ce.count);
}

double affinity_loss(const Matrix& affinity, const Matrix& label, Matrix* grad_logits) {
  if (affinity.rows() != label.rows() || affinity.cols() != label.cols()) {
    throw ShapeError("affinity_loss: affinity and label shapes differ");
  }
  const double n = static_cast<double>(affinity.size());
  if (grad_logits) grad_logits->setZero(affinity.rows(), affinity.cols());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < affinity.rows(); ++i) {
    for (Eigen::Index j = 0; j < affinity.cols(); ++j) {
      const double raw = affinity(i, j);
      const double p = std::clamp(raw, kAffinityClamp, 1.0 - kAffinityClamp);
      const double y = label(i, j);
      sum -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
      if (grad_logits && raw == p) (*grad_logits)(i, j) = (p - y) / n;
    }
  }
  if (!std::isfinite(sum)) throw NumericError("affinity loss is not finite");
  return sum / n;
}

LossBreakdown total_loss(double seg_loss, double aff_loss, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("loss weight lambda must be non-negative");
  return LossBreakdown{seg_loss, aff_loss, seg_loss + lambda * aff_loss, lambda};
}

}  // namespace wsseg
