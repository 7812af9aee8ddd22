#include "wsseg/rfm.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace wsseg::rfm {
namespace {

Matrix random_attention(std::mt19937_64& rng, int n) {
  Matrix a = testing::random_matrix(rng, n, n, 0.0, 1.0);
  return a.array().colwise() / a.rowwise().sum().array();
}

CamStack stack_of(const Matrix& maps, int h, int w) {
  CamStack s;
  s.height = h;
  s.width = w;
  s.maps = maps;
  for (int c = 0; c < maps.rows(); ++c) s.class_ids.push_back(c);
  s.normalized = true;
  return s;
}

TEST(AffinityMap, Examples) {
  EXPECT_TRUE((affinity_map(Matrix::Zero(4, 3)).array() == 0.5).all());
  Matrix fu = Matrix::Zero(2, 3);
  fu(0, 1) = fu(1, 1) = 1.0;
  EXPECT_NEAR(affinity_map(fu)(0, 1), 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(affinity_map(fu)(0, 1), 0.7311, 1e-4);
}

TEST(AffinityMap, MatchesLoopAndIsSymmetric) {
  std::mt19937_64 rng(1);
  const Matrix fu = testing::random_matrix(rng, 9, 4);
  const Matrix a = affinity_map(fu);
  for (int i = 0; i < 9; ++i)
    for (int j = 0; j < 9; ++j) {
      double dot = 0;
      for (int k = 0; k < 4; ++k) dot += fu(i, k) * fu(j, k);
      EXPECT_NEAR(a(i, j), 1.0 / (1.0 + std::exp(-dot)), 1e-14);
    }
  EXPECT_LT((a - a.transpose()).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_GT(a.minCoeff(), 0.0);
  EXPECT_LT(a.maxCoeff(), 1.0);
}

TEST(AttentionScore, Examples) {
  std::mt19937_64 rng(2);
  const Matrix a = testing::random_matrix(rng, 8, 8);
  EXPECT_EQ(attention_score(a, a), 0.0);
  Matrix eye = Matrix::Identity(2, 2), swap(2, 2);
  swap << 0, 1, 1, 0;
  EXPECT_EQ(attention_score(eye, swap), 4.0);
  const Matrix b = testing::random_matrix(rng, 8, 8);
  double loop = 0;
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) loop += std::abs(a(i, j) - b(i, j));
  EXPECT_NEAR(attention_score(a, b), loop, 1e-12);
  EXPECT_THROW(attention_score(a, Matrix::Zero(3, 3)), ShapeError);
}

TEST(AttentionFilter, WorkedExample) {
  const std::vector<double> s{5, 1, 3, 2};
  const FilterMask m = attention_filter(s, 2);
  EXPECT_EQ(m.selected, (std::vector<int>{0, 1, 0, 0}));
  EXPECT_EQ(m.num_selected, 1);
  EXPECT_FALSE(m.fallback);
}

TEST(AttentionFilter, EqualScoresFallBackToAllEligible) {
  const std::vector<double> s{9, 2, 2, 2};
  const FilterMask m = attention_filter(s, 2);
  EXPECT_TRUE(m.fallback);
  EXPECT_EQ(m.selected, (std::vector<int>{0, 1, 1, 1}));
  EXPECT_EQ(m.num_selected, 3);
}

TEST(AttentionFilter, MatchesBruteForce) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix r = testing::random_matrix(rng, 12, 1, 0, 10);
    const std::vector<double> s(r.data(), r.data() + 12);
    const int n0 = trial % 2 == 0 ? 6 : testing::random_int(rng, 1, 12);
    const FilterMask m = attention_filter(s, n0);
    double mean = 0;
    for (int l = n0; l <= 12; ++l) mean += s[l - 1];
    mean /= 13 - n0;
    std::vector<int> expected(12, 0);
    int count = 0;
    for (int l = n0; l <= 12; ++l) {
      expected[l - 1] = s[l - 1] < mean ? 1 : 0;
      count += expected[l - 1];
    }
    if (count == 0) {
      for (int l = n0; l <= 12; ++l) expected[l - 1] = 1;
    }
    EXPECT_EQ(m.selected, expected);
    EXPECT_EQ(m.fallback, count == 0);
    EXPECT_EQ(m.num_selected, count == 0 ? 13 - n0 : count);
  }
  const std::vector<double> s{1, 2};
  EXPECT_THROW(attention_filter(s, 0), std::invalid_argument);
  EXPECT_THROW(attention_filter(s, 3), std::invalid_argument);
}

TEST(RefiningMap, Examples) {
  std::mt19937_64 rng(4);
  const Matrix a = random_attention(rng, 5);
  FilterMask one{{1}, 1, 1, false};
  EXPECT_LT((refining_map(Matrix::Ones(5, 5), one, std::vector<Matrix>{a}) - a).cwiseAbs().maxCoeff(), 1e-15);

  Matrix af(2, 2), as(2, 2), expected(2, 2);
  af << 0.5, 1, 1, 0.5;
  as << 2, 2, 2, 2;
  expected << 1, 2, 2, 1;
  EXPECT_EQ(refining_map(af, one, std::vector<Matrix>{as}), expected);
}

TEST(RefiningMap, MatchesLoop) {
  std::mt19937_64 rng(5);
  const int n = 6;
  const Matrix af = affinity_map(testing::random_matrix(rng, n, 3));
  std::vector<Matrix> att;
  for (int l = 0; l < 4; ++l) att.push_back(random_attention(rng, n));
  const FilterMask m{{0, 1, 0, 1}, 2, 2, false};
  const Matrix r = refining_map(af, m, att);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) EXPECT_NEAR(r(i, j), af(i, j) * (att[1](i, j) + att[3](i, j)) / 2.0, 1e-15);
  EXPECT_GE(r.minCoeff(), 0.0);
}

TEST(Sinkhorn, Examples) {
  const Matrix u = sinkhorn_normalize(Matrix::Ones(2, 2));
  EXPECT_TRUE((u.array() == 0.5).all());
  Matrix m(2, 2), expected(2, 2);
  m << 1, 3, 3, 1;
  expected << 0.25, 0.75, 0.75, 0.25;
  EXPECT_LT((sinkhorn_normalize(m) - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Sinkhorn, RandomPositiveMatricesBecomeDoublyStochastic) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix m = testing::random_matrix(rng, 6, 6, 0.01, 1.0);
    EXPECT_LT(doubly_stochastic_error(sinkhorn_normalize(m)), 1e-3);
  }
}

TEST(Sinkhorn, ZeroRowIsGuardedAndDeterministic) {
  Matrix m = Matrix::Ones(3, 3);
  m.row(1).setZero();
  const Matrix a = sinkhorn_normalize(m), b = sinkhorn_normalize(m);
  EXPECT_TRUE(a.allFinite());
  EXPECT_TRUE(a == b);
  EXPECT_THROW(sinkhorn_normalize(-Matrix::Ones(2, 2)), std::invalid_argument);
  EXPECT_THROW(sinkhorn_normalize(Matrix::Ones(2, 3)), ShapeError);
}

TEST(BoxMask, Examples) {
  RowVector c = RowVector::Zero(6 * 8);
  c(2 * 8 + 3) = 1.0;
  EXPECT_EQ(class_box_mask(c, 6, 8, 0.4), (BoxMask{2, 3, 2, 3}));
  EXPECT_EQ(class_box_mask(RowVector::Zero(48), 6, 8, 0.4), (BoxMask{0, 0, 5, 7}));
  c.setZero();
  c(1 * 8 + 1) = 0.9;
  c(4 * 8 + 6) = 0.5;
  c(5 * 8 + 0) = 0.3;  // below the threshold
  EXPECT_EQ(class_box_mask(c, 6, 8, 0.4), (BoxMask{1, 1, 4, 6}));
}

TEST(RefineCam, IdentityPropagationKeepsCam) {
  std::mt19937_64 rng(7);
  Matrix maps = testing::random_matrix(rng, 3, 9, 0, 1);
  for (int c = 1; c < 3; ++c) maps.row(c) /= maps.row(c).maxCoeff();
  maps.row(0) = complement_background(maps);
  const std::vector<BoxMask> full(2, BoxMask{0, 0, 2, 2});
  const CamStack out = refine_cam(Matrix::Identity(9, 9), stack_of(maps, 3, 3), 2, AlphaMode::kMatrix, full);
  EXPECT_LT((out.maps - maps).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(RefineCam, AveragingMatrixFlattensChannel) {
  std::mt19937_64 rng(8);
  Matrix maps = testing::random_matrix(rng, 2, 9, 0, 1);
  const std::vector<BoxMask> full{BoxMask{0, 0, 2, 2}};
  const CamStack out =
      refine_cam(Matrix::Constant(9, 9, 1.0 / 9), stack_of(maps, 3, 3), 1, AlphaMode::kMatrix, full);
  EXPECT_LT((out.maps.row(1).array() - 1.0).abs().maxCoeff(), 1e-12);
  EXPECT_LT(out.maps.row(0).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(RefineCam, MatchesRepeatedMatrixVector) {
  std::mt19937_64 rng(9);
  const Matrix t = sinkhorn_normalize(testing::random_matrix(rng, 9, 9, 0.01, 1), {1e-12, 100000});
  Matrix maps = testing::random_matrix(rng, 2, 9, 0, 1);
  const std::vector<BoxMask> box{BoxMask{0, 1, 1, 2}};
  const CamStack out = refine_cam(t, stack_of(maps, 3, 3), 2, AlphaMode::kMatrix, box);

  const Matrix sym = (t + t.transpose()) / 2;
  Vector mask = Vector::Zero(9);
  for (int y = 0; y <= 1; ++y)
    for (int x = 1; x <= 2; ++x) mask(y * 3 + x) = 1;
  Vector v = maps.row(1).transpose();
  v = sym * v.cwiseProduct(mask);
  v = sym * v.cwiseProduct(mask);
  v /= v.maxCoeff();
  EXPECT_LT((out.maps.row(1).transpose() - v).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((out.maps.row(0).array() - (1.0 - v.transpose().array())).abs().maxCoeff(), 1e-12);
}

TEST(RefineCam, ElementwiseAlphaPowersEntries) {
  std::mt19937_64 rng(10);
  const Matrix t = testing::random_matrix(rng, 4, 4, 0, 1);
  Matrix maps = testing::random_matrix(rng, 2, 4, 0, 1);
  const std::vector<BoxMask> full{BoxMask{0, 0, 1, 1}};
  const CamStack out = refine_cam(t, stack_of(maps, 2, 2), 3, AlphaMode::kElementwise, full);
  const Matrix sym = ((t + t.transpose()) / 2).array().pow(3);
  Vector v = sym * maps.row(1).transpose();
  v /= v.maxCoeff();
  EXPECT_LT((out.maps.row(1).transpose() - v).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(RefineCam, RejectsBadArguments) {
  const CamStack s = stack_of(Matrix::Ones(2, 4), 2, 2);
  const std::vector<BoxMask> full{BoxMask{0, 0, 1, 1}};
  EXPECT_THROW(refine_cam(Matrix::Identity(4, 4), s, 0, AlphaMode::kMatrix, full), std::invalid_argument);
  EXPECT_THROW(refine_cam(Matrix::Identity(3, 3), s, 1, AlphaMode::kMatrix, full), ShapeError);
  EXPECT_THROW(refine_cam(Matrix::Identity(4, 4), s, 1, AlphaMode::kMatrix, {}), ShapeError);
}

TEST(Par, ConstantScoresAreFixed) {
  std::mt19937_64 rng(11);
  const Image img = testing::random_image(rng, 6, 7);
  const Matrix scores = Matrix::Constant(3, 42, 0.3);
  EXPECT_LT((par_refine(img, scores) - scores).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Par, ZeroIterationsIsIdentity) {
  std::mt19937_64 rng(12);
  const Image img = testing::random_image(rng, 4, 4);
  const Matrix scores = testing::random_matrix(rng, 2, 16);
  ParOptions o;
  o.iterations = 0;
  EXPECT_TRUE(par_refine(img, scores, o) == scores);
}

TEST(Par, SingleIterationMatchesHandKernel) {
  Image img(3, 3);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x)
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = x == 2 ? 1.0 : 0.1 * y;
  Matrix scores(1, 9);
  scores << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  ParOptions o;
  o.iterations = 1;
  o.dilations = {1, 2};
  o.sigma_rgb = 0.5;
  const Matrix out = par_refine(img, scores, o);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) {
      double num = 0, den = 0;
      for (int d : o.dilations)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (dy == 0 && dx == 0) continue;
            const int ny = y + dy * d, nx = x + dx * d;
            if (ny < 0 || ny > 2 || nx < 0 || nx > 2) continue;
            double dist = 0;
            for (int c = 0; c < 3; ++c) dist += std::pow(img.at(c, y, x) - img.at(c, ny, nx), 2);
            const double k = std::exp(-dist / (2 * 0.25));
            num += k * scores(0, ny * 3 + nx);
            den += k;
          }
      EXPECT_NEAR(out(0, y * 3 + x), num / den, 1e-12) << y << "," << x;
    }
}

TEST(PseudoLabel, DominanceAndTies) {
  Matrix s(3, 4);
  s << 0.9, 0.9, 0.9, 0.5,  //
      0.1, 1.0, 0.2, 0.5,   //
      0.0, 0.0, 0.3, 0.1;
  const LabelMap l = to_pseudo_label(s, 2, 2, {0, 4, 9});
  EXPECT_EQ(l.labels, (std::vector<int>{0, 4, 0, 0}));
  Matrix bg = Matrix::Zero(2, 4);
  bg.row(0).setConstant(1.0);
  EXPECT_EQ(to_pseudo_label(bg, 2, 2, {0, 1}).labels, std::vector<int>(4, 0));
}

TEST(RefinePseudoLabels, FullPipelineIsConsistent) {
  std::mt19937_64 rng(13);
  const int h = 3, w = 4, n = h * w;
  Matrix maps = testing::random_matrix(rng, 3, n, 0, 1);
  for (int c = 1; c < 3; ++c) maps.row(c) /= maps.row(c).maxCoeff();
  maps.row(0) = complement_background(maps);
  std::vector<Matrix> att;
  for (int l = 0; l < 4; ++l) att.push_back(random_attention(rng, n));
  RefineConfig cfg;
  cfg.eligible_start = 2;
  const PseudoLabelResult r = refine_pseudo_labels(stack_of(maps, h, w), testing::random_matrix(rng, n, 5), att,
                                                   testing::random_image(rng, h, w), cfg);
  EXPECT_EQ(r.scores.size(), 4u);
  EXPECT_EQ(r.filter.selected[0], 0);
  EXPECT_LT(doubly_stochastic_error(r.refining_normalized), 1e-3);
  EXPECT_EQ(r.boxes.size(), 2u);
  EXPECT_GE(r.refined.maps.minCoeff(), 0.0);
  EXPECT_EQ(r.labels.height, h);
  for (int v : r.labels.labels) EXPECT_TRUE(v >= 0 && v <= 2);
}

}  // namespace
}  // namespace wsseg::rfm
