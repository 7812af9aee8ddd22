#pragma once

#include "wsseg/archive.hpp"
#include "wsseg/types.hpp"

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

// Minimal trainable layers with hand-written backward passes. Activations are
// (tokens x channels); weights follow the (out x in) convention.
namespace wsseg::nn {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

/// Owns every trainable tensor. Parameter addresses are stable for the
/// registry's lifetime (including across moves).
class ParameterRegistry {
 public:
  Parameter& add(std::string name, Matrix init);

  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;

  void zero_grad();
  std::size_t scalar_count() const;

  TensorArchive to_archive() const;
  /// Every registered tensor must be present with a matching shape.
  void load_archive(const TensorArchive& archive);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Matrix fan_in_uniform(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in);

class Linear {
 public:
  Linear() = default;
  Linear(ParameterRegistry& registry, const std::string& name, int in, int out, std::mt19937_64& rng);

  Matrix forward(const Matrix& x) const;
  /// Accumulates weight/bias gradients; returns d(loss)/d(x).
  Matrix backward(const Matrix& x, const Matrix& grad_out) const;

  Parameter& weight() const { return *weight_; }
  Parameter& bias() const { return *bias_; }

 private:
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
};

class LayerNorm {
 public:
  struct Cache {
    Matrix normalized;
    Vector inv_std;
  };

  LayerNorm() = default;
  LayerNorm(ParameterRegistry& registry, const std::string& name, int dim);

  Matrix forward(const Matrix& x, Cache* cache = nullptr) const;
  Matrix backward(const Cache& cache, const Matrix& grad_out) const;

  static constexpr double kEps = 1e-5;

 private:
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
};

class MultiHeadAttention {
 public:
  struct Cache {
    Matrix input;
    Matrix q, k, v;
    std::vector<Matrix> probs;  // per head, tokens x tokens
    Matrix context;             // concatenated head outputs
  };

  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterRegistry& registry, const std::string& name, int dim, int heads, std::mt19937_64& rng);

  Matrix forward(const Matrix& x, Cache* cache = nullptr) const;
  Matrix backward(const Cache& cache, const Matrix& grad_out) const;

  int heads() const { return heads_; }

 private:
  int dim_ = 0;
  int heads_ = 1;
  Linear q_, k_, v_, out_;
};

/// Pre-normalisation encoder layer:
///   x = x + MHA(LN1(x));  x = x + FC2(ReLU(FC1(LN2(x))))
class TransformerLayer {
 public:
  struct Cache {
    Matrix input;
    LayerNorm::Cache ln1;
    MultiHeadAttention::Cache attn;
    Matrix mid;  // after attention residual
    LayerNorm::Cache ln2;
    Matrix ln2_out;
    Matrix hidden_pre;  // FC1 output before ReLU
    Matrix hidden;      // after ReLU
  };

  TransformerLayer() = default;
  TransformerLayer(ParameterRegistry& registry, const std::string& name, int dim, int heads, int ffn_dim,
                   std::mt19937_64& rng);

  Matrix forward(const Matrix& x, Cache* cache = nullptr) const;
  Matrix backward(const Cache& cache, const Matrix& grad_out) const;

  Linear& ffn_out() { return fc2_; }
  MultiHeadAttention& attention() { return attn_; }

 private:
  LayerNorm ln1_, ln2_;
  MultiHeadAttention attn_;
  Linear fc1_, fc2_;
};

/// Row-wise softmax.
Matrix softmax_rows(const Matrix& logits);

}  // namespace wsseg::nn
