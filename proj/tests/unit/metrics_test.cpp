#include "wsseg/metrics.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

namespace wsseg {
namespace {

TEST(Miou, IdenticalPredictionIsPerfect) {
  std::mt19937_64 rng(1);
  LabelMap gt(6, 6);
  for (int& v : gt.labels) v = testing::random_int(rng, 0, 2);
  const std::vector<LabelMap> p{gt};
  EXPECT_DOUBLE_EQ(miou(p, p, 3).mean, 1.0);
}

TEST(Miou, DisjointSquaresScoreZeroForThatClass) {
  LabelMap gt(4, 4, 0), pred(4, 4, 0);
  gt.at(0, 0) = gt.at(0, 1) = 1;
  pred.at(3, 2) = pred.at(3, 3) = 1;
  const MiouResult r = miou(std::vector<LabelMap>{pred}, std::vector<LabelMap>{gt}, 2);
  ASSERT_TRUE(r.per_class[1].has_value());
  EXPECT_EQ(*r.per_class[1], 0.0);
  EXPECT_DOUBLE_EQ(*r.per_class[0], 12.0 / 16.0);
  EXPECT_DOUBLE_EQ(r.mean, 0.375);
}

TEST(Miou, MatchesLoopCountedConfusion) {
  std::mt19937_64 rng(2);
  LabelMap gt(10, 10), pred(10, 10);
  for (int& v : gt.labels) v = testing::random_int(rng, 0, 2);
  for (int& v : pred.labels) v = testing::random_int(rng, 0, 2);
  gt.labels[7] = kIgnoreLabel;
  long long cm[3][3] = {};
  for (std::size_t i = 0; i < gt.size(); ++i)
    if (gt.labels[i] != kIgnoreLabel) ++cm[gt.labels[i]][pred.labels[i]];
  double sum = 0;
  const MiouResult r = miou(std::vector<LabelMap>{pred}, std::vector<LabelMap>{gt}, 3);
  for (int c = 0; c < 3; ++c) {
    long long row = 0, col = 0;
    for (int k = 0; k < 3; ++k) row += cm[c][k], col += cm[k][c];
    const double iou = static_cast<double>(cm[c][c]) / static_cast<double>(row + col - cm[c][c]);
    EXPECT_DOUBLE_EQ(*r.per_class[c], iou);
    sum += iou;
  }
  EXPECT_DOUBLE_EQ(r.mean, sum / 3);
}

TEST(Miou, AbsentClassesAreExcluded) {
  LabelMap gt(2, 2, 0), pred(2, 2, 0);
  gt.at(1, 1) = pred.at(1, 1) = 2;
  const MiouResult r = miou(std::vector<LabelMap>{pred}, std::vector<LabelMap>{gt}, 4);
  EXPECT_FALSE(r.per_class[1].has_value());
  EXPECT_FALSE(r.per_class[3].has_value());
  EXPECT_DOUBLE_EQ(r.mean, 1.0);
}

TEST(ConfusionMatrix, IgnoreAndValidation) {
  ConfusionMatrix cm(2);
  LabelMap gt(1, 3), pred(1, 3);
  gt.labels = {0, kIgnoreLabel, 1};
  pred.labels = {1, 1, 1};
  cm.add(gt, pred);
  EXPECT_EQ(cm.total(), 2);
  EXPECT_EQ(cm.at(0, 1), 1);
  EXPECT_EQ(cm.at(1, 1), 1);
  EXPECT_THROW(cm.add(gt, LabelMap(2, 2)), ShapeError);
  pred.labels = {5, 0, 0};
  EXPECT_THROW(cm.add(gt, pred), std::out_of_range);
}

TEST(Miou, ReportFormat) {
  MiouResult r;
  r.per_class = {0.5, std::nullopt, 1.0};
  r.mean = 0.75;
  EXPECT_EQ(format_miou_report(r, {"__background__", "cat", "dog"}),
            "0\t__background__\t0.5\n1\tcat\t-\n2\tdog\t1\nmean\t\t0.75\n");
}

}  // namespace
}  // namespace wsseg
