#include "wsseg/metrics.hpp"

#include "wsseg/config.hpp"

#include <numeric>

namespace wsseg {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : num_classes_(num_classes), counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
  if (num_classes < 1) throw std::invalid_argument("confusion matrix needs at least one class");
}

void ConfusionMatrix::add(const LabelMap& gt, const LabelMap& pred) {
  if (gt.height != pred.height || gt.width != pred.width || gt.size() != pred.size()) {
    throw ShapeError("prediction " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                     " does not match ground truth " + std::to_string(gt.height) + "x" + std::to_string(gt.width));
  }
  auto check = [this](int v, const char* what) {
    if (v < 0 || v >= num_classes_) {
      throw std::out_of_range(std::string(what) + " label " + std::to_string(v) + " outside [0, " +
                              std::to_string(num_classes_) + ")");
    }
  };
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const int g = gt.labels[i];
    if (g == kIgnoreLabel) continue;
    const int p = pred.labels[i];
    check(g, "ground-truth");
    check(p, "predicted");
    ++counts_[static_cast<std::size_t>(g) * num_classes_ + p];
  }
}

std::int64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0});
}

MiouResult miou(const ConfusionMatrix& cm) {
  const int c = cm.num_classes();
  MiouResult out;
  out.per_class.resize(static_cast<std::size_t>(c));
  double sum = 0.0;
  int used = 0;
  for (int k = 0; k < c; ++k) {
    std::int64_t gt_total = 0, pred_total = 0;
    for (int j = 0; j < c; ++j) {
      gt_total += cm.at(k, j);
      pred_total += cm.at(j, k);
    }
    const std::int64_t tp = cm.at(k, k);
    const std::int64_t uni = gt_total + pred_total - tp;
    if (uni == 0) continue;
    const double iou = static_cast<double>(tp) / static_cast<double>(uni);
    out.per_class[static_cast<std::size_t>(k)] = iou;
    sum += iou;
    ++used;
  }
  out.mean = used == 0 ? 0.0 : sum / used;
  return out;
}

MiouResult miou(std::span<const LabelMap> predictions, std::span<const LabelMap> ground_truths, int num_classes) {
  if (predictions.size() != ground_truths.size()) {
    throw ShapeError(std::to_string(predictions.size()) + " predictions for " +
                     std::to_string(ground_truths.size()) + " ground truths");
  }
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < predictions.size(); ++i) cm.add(ground_truths[i], predictions[i]);
  return miou(cm);
}

std::string format_miou_report(const MiouResult& result, const std::vector<std::string>& class_names) {
  std::string out;
  for (std::size_t k = 0; k < result.per_class.size(); ++k) {
    const std::string name = k < class_names.size() ? class_names[k] : std::to_string(k);
    out += std::to_string(k) + "\t" + name + "\t" +
           (result.per_class[k] ? format_double(*result.per_class[k]) : std::string("-")) + "\n";
  }
  out += "mean\t\t" + format_double(result.mean) + "\n";
  return out;
}

}  // namespace wsseg
