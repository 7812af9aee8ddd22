#pragma once

#include "wsseg/types.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace wsseg {

/// Rows are ground truth, columns prediction. Ground-truth pixels equal to
/// kIgnoreLabel are skipped.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  void add(const LabelMap& ground_truth, const LabelMap& prediction);

  int num_classes() const { return num_classes_; }
  std::int64_t at(int gt, int pred) const { return counts_[static_cast<std::size_t>(gt) * num_classes_ + pred]; }
  std::int64_t total() const;

 private:
  int num_classes_;
  std::vector<std::int64_t> counts_;
};

struct MiouResult {
  // Empty for classes absent from both ground truth and prediction; those are
  // left out of the mean.
  std::vector<std::optional<double>> per_class;
  double mean = 0.0;
};

MiouResult miou(const ConfusionMatrix& confusion);
MiouResult miou(std::span<const LabelMap> predictions, std::span<const LabelMap> ground_truths, int num_classes);

/// Tab-separated `index name iou` lines (`-` for excluded classes) and a final `mean` line.
std::string format_miou_report(const MiouResult& result, const std::vector<std::string>& class_names);

}  // namespace wsseg
