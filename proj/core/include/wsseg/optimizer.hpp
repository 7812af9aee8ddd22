#pragma once

#include "wsseg/archive.hpp"
#include "wsseg/nn.hpp"

#include <vector>

namespace wsseg {

/// Adam with decoupled weight decay (p -= lr * wd * p before the Adam update).
class AdamW {
 public:
  struct Options {
    double learning_rate = 2e-3;
    double weight_decay = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  AdamW(nn::ParameterRegistry& registry, Options options);

  /// Applies one update using the registry's accumulated gradients.
  void step(double learning_rate);
  void step() { step(options_.learning_rate); }

  long long steps_taken() const { return t_; }
  const Options& options() const { return options_; }

  TensorArchive state() const;
  void load_state(const TensorArchive& archive);

 private:
  std::vector<nn::Parameter*> params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  Options options_;
  long long t_ = 0;
};

}  // namespace wsseg
