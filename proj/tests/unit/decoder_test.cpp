#include "wsseg/decoder.hpp"

#include "wsseg/image.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

namespace wsseg {
namespace {

DecoderConfig toy_decoder(int blocks = 2, int input = 6, int hidden = 8) {
  DecoderConfig c;
  c.input_dim = input;
  c.num_blocks = blocks;
  c.hidden = hidden;
  c.depth = 1;
  c.heads = 2;
  c.ffn_expansion = 2;
  c.num_classes = 3;
  c.seed = 4;
  return c;
}

std::vector<Matrix> random_features(std::mt19937_64& rng, int blocks, int tokens, int dim) {
  std::vector<Matrix> f;
  for (int l = 0; l < blocks; ++l) f.push_back(testing::random_matrix(rng, tokens, dim));
  return f;
}

TEST(Decoder, ZeroMlpGivesZeroOutput) {
  Decoder d(toy_decoder());
  for (auto* lin : {&d.mlp_fc1(1), &d.mlp_fc2(1)}) {
    lin->weight().value.setZero();
    lin->bias().value.setZero();
  }
  std::mt19937_64 rng(1);
  EXPECT_TRUE(d.per_layer_mlp(1, testing::random_matrix(rng, 5, 6)).isZero());
}

TEST(Decoder, MlpShapeAtFullWidth) {
  DecoderConfig c;
  c.num_blocks = 1;
  c.depth = 0;
  Decoder d(c);
  EXPECT_EQ(d.per_layer_mlp(1, Matrix::Zero(400, 768)).cols(), 256);
  EXPECT_EQ(d.per_layer_mlp(1, Matrix::Zero(400, 768)).rows(), 400);
}

TEST(Decoder, MlpMatchesHandComputation) {
  DecoderConfig c = toy_decoder(1, 3, 2);
  Decoder d(c);
  // W_fc^2 is applied first: x -> ReLU(W2 x + b2) -> W1 h + b1.
  d.mlp_fc2(1).weight().value << 1, -1, 2, 0.5, 1, -3;
  d.mlp_fc2(1).bias().value << 0.1, -0.2;
  d.mlp_fc1(1).weight().value << 2, 1, -1, 3;
  d.mlp_fc1(1).bias().value << 0, 1;
  Matrix x(2, 3);
  x << 1, 2, 3, -1, 0, 1;
  Matrix expected(2, 2);
  for (int i = 0; i < 2; ++i) {
    const double h0 = std::max(0.0, 1 * x(i, 0) - 1 * x(i, 1) + 2 * x(i, 2) + 0.1);
    const double h1 = std::max(0.0, 0.5 * x(i, 0) + 1 * x(i, 1) - 3 * x(i, 2) - 0.2);
    expected(i, 0) = 2 * h0 + 1 * h1;
    expected(i, 1) = -1 * h0 + 3 * h1 + 1;
  }
  EXPECT_LT((d.per_layer_mlp(1, x) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Decoder, FuseInputWidthFollowsLayerStart) {
  DecoderConfig c = toy_decoder(4);
  c.layer_start = 1;
  EXPECT_EQ(Decoder(c).fuse().weight().value.cols(), 4 * 8);
  c.layer_start = 4;
  Decoder last(c);
  EXPECT_EQ(last.fuse().weight().value.cols(), 8);
  EXPECT_THROW(last.mlp_fc1(3), std::out_of_range);
  c.layer_start = 5;
  EXPECT_THROW(Decoder{c}, ConfigError);
}

TEST(Decoder, IdentityFuseReturnsMlpOutput) {
  Decoder d(toy_decoder(1));
  d.fuse().weight().value.setIdentity();
  d.fuse().bias().value.setZero();
  std::mt19937_64 rng(2);
  const std::vector<Matrix> f = random_features(rng, 1, 9, 6);
  EXPECT_LT((d.fuse_features(f) - d.per_layer_mlp(1, f[0])).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Decoder, FullScaleSegmentShape) {
  DecoderConfig c;
  c.depth = 1;
  Decoder d(c);
  const SegPrediction p = d.decode_segment(Matrix::Zero(400, 256), 20, 20, 320, 320);
  EXPECT_EQ(p.logits.rows(), 320 * 320);
  EXPECT_EQ(p.classes(), 21);
}

TEST(Decoder, IdentityPathExposesLeadingChannels) {
  Decoder d(toy_decoder());
  auto& reg = d.parameters();
  for (const char* n : {"decoder/phi1/attn/out/weight", "decoder/phi1/attn/out/bias", "decoder/phi1/ffn/fc2/weight",
                        "decoder/phi1/ffn/fc2/bias"}) {
    reg.at(n).value.setZero();
  }
  d.head().weight().value = Matrix::Identity(3, 8);
  d.head().bias().value.setZero();
  std::mt19937_64 rng(3);
  const Matrix fused = testing::random_matrix(rng, 6, 8);
  const SegPrediction p = d.decode_segment(fused, 2, 3, 2, 3);
  EXPECT_LT((p.logits - fused.leftCols(3)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Decoder, ForwardIsCompositionAndDeterministic) {
  Decoder d(toy_decoder(3));
  std::mt19937_64 rng(4);
  const std::vector<Matrix> f = random_features(rng, 3, 12, 6);
  const DecoderOutput out = d.forward(f, 3, 4, 6, 8);
  const Matrix fused = d.fuse_features(f);
  EXPECT_TRUE(out.fused == fused);
  EXPECT_TRUE(out.prediction.logits == d.decode_segment(fused, 3, 4, 6, 8).logits);
  EXPECT_TRUE(d.forward(f, 3, 4, 6, 8).prediction.logits == out.prediction.logits);
  EXPECT_EQ(out.prediction.height, 6);
  EXPECT_EQ(out.prediction.width, 8);
}

TEST(Decoder, GradientsMatchFiniteDifferences) {
  DecoderConfig c = toy_decoder(2, 5, 8);
  c.positional = true;
  Decoder d(c);
  std::mt19937_64 rng(5);
  const std::vector<Matrix> f = random_features(rng, 2, 16, 5);
  const Matrix g = testing::random_matrix(rng, 6 * 6, 3);
  const Matrix gf = testing::random_matrix(rng, 16, 8);
  auto loss = [&] {
    const DecoderOutput o = d.forward(f, 4, 4, 6, 6);
    return o.prediction.logits.cwiseProduct(g).sum() + o.fused.cwiseProduct(gf).sum();
  };
  DecoderTrace trace;
  d.forward(f, 4, 4, 6, 6, &trace);
  d.parameters().zero_grad();
  d.backward(trace, g, &gf);
  const double h = 1e-4;
  for (nn::Parameter* p : d.parameters().all()) {
    Matrix fd(p->value.rows(), p->value.cols());
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double keep = p->value.data()[i];
      p->value.data()[i] = keep + h;
      const double up = loss();
      p->value.data()[i] = keep - h;
      const double down = loss();
      p->value.data()[i] = keep;
      fd.data()[i] = (up - down) / (2 * h);
    }
    // The key bias cancels inside the row softmax, so both sides sit at roundoff there.
    EXPECT_LT((p->grad - fd).norm(), 1e-6 + 1e-3 * fd.norm()) << p->name;
  }
}

TEST(Decoder, DefaultParameterBudget) {
  Decoder d(DecoderConfig{});
  EXPECT_LT(d.parameter_count(), 6'000'000u);
  std::size_t total = 0;
  for (const nn::Parameter* p : std::as_const(d).parameters().all()) total += static_cast<std::size_t>(p->value.size());
  EXPECT_EQ(total, d.parameter_count());
}

TEST(Decoder, ArchiveNamesFollowConvention) {
  Decoder d(toy_decoder(2));
  const auto names = d.state().names();
  for (const char* n : {"decoder/mlp1/fc1/weight", "decoder/mlp2/fc2/bias", "decoder/fuse/weight",
                        "decoder/phi1/ln1/weight", "decoder/head/weight"}) {
    EXPECT_NE(std::find(names.begin(), names.end(), n), names.end()) << n;
  }
}

TEST(Decoder, StateRoundTrip) {
  Decoder a(toy_decoder());
  DecoderConfig other = toy_decoder();
  other.seed = 99;
  Decoder b(other);
  // Archives hold float32, so compare two decoders that both went through one.
  a.load_state(a.state());
  b.load_state(a.state());
  std::mt19937_64 rng(6);
  const std::vector<Matrix> f = random_features(rng, 2, 4, 6);
  EXPECT_TRUE(a.forward(f, 2, 2, 4, 4).prediction.logits == b.forward(f, 2, 2, 4, 4).prediction.logits);
}

TEST(Decoder, WrongBlockCountRejected) {
  Decoder d(toy_decoder(2));
  std::mt19937_64 rng(7);
  EXPECT_THROW(d.forward(random_features(rng, 3, 4, 6), 2, 2, 4, 4), ShapeError);
  EXPECT_THROW(d.per_layer_mlp(1, Matrix::Zero(4, 5)), ShapeError);
}

}  // namespace
}  // namespace wsseg
