#include "wsseg/decoder.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace {

using wsseg::Matrix;

struct Setup {
  wsseg::Decoder decoder;
  std::vector<Matrix> features;
  int grid;
  int image;
};

// Full-width decoder over a 12-block stack; argument is the token grid side.
Setup make_setup(int grid) {
  wsseg::DecoderConfig config;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Matrix> features;
  for (int l = 0; l < config.num_blocks; ++l) {
    Matrix f(grid * grid, config.input_dim);
    for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = n(rng);
    features.push_back(std::move(f));
  }
  return {wsseg::Decoder(config), std::move(features), grid, grid * 16};
}

void BM_DecoderForward(benchmark::State& state) {
  const Setup s = make_setup(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(s.decoder.forward(s.features, s.grid, s.grid, s.image, s.image));
}
BENCHMARK(BM_DecoderForward)->Arg(10)->Arg(20)->Unit(benchmark::kMillisecond);

void BM_DecoderBackward(benchmark::State& state) {
  Setup s = make_setup(static_cast<int>(state.range(0)));
  wsseg::DecoderTrace trace;
  const auto out = s.decoder.forward(s.features, s.grid, s.grid, s.image, s.image, &trace);
  const Matrix grad = Matrix::Constant(out.prediction.logits.rows(), out.prediction.logits.cols(), 1e-3);
  for (auto _ : state) {
    s.decoder.parameters().zero_grad();
    s.decoder.backward(trace, grad);
    benchmark::ClobberMemory();
  }
}
BENCHMARK(BM_DecoderBackward)->Arg(10)->Arg(20)->Unit(benchmark::kMillisecond);

}  // namespace
