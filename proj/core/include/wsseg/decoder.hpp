#pragma once

#include "wsseg/backbone.hpp"
#include "wsseg/nn.hpp"
#include "wsseg/types.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace wsseg {

struct DecoderConfig {
  int input_dim = 768;   // backbone token width
  int num_blocks = 12;   // backbone depth N
  int hidden = 256;      // MLP / fused / transformer width
  int depth = 3;         // transformer layers
  int heads = 8;
  int ffn_expansion = 2;
  int num_classes = 21;  // including background
  int layer_start = 1;   // first backbone block fed to the decoder (1-based)
  bool positional = false;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Dense class logits, one row per output pixel (row-major over H x W).
struct SegPrediction {
  int height = 0;
  int width = 0;
  Matrix logits;  // (height * width) x classes

  int classes() const { return static_cast<int>(logits.cols()); }
};

struct DecoderOutput {
  SegPrediction prediction;
  Matrix fused;         // F_u as tokens: (hw x hidden)
  Matrix token_logits;  // pre-upsampling logits (hw x classes)
};

/// Forward intermediates kept for the backward pass.
struct DecoderTrace {
  int grid_h = 0;
  int grid_w = 0;
  int image_h = 0;
  int image_w = 0;
  std::vector<Matrix> inputs;       // used backbone blocks
  std::vector<Matrix> hidden_pre;   // first FC output per block
  std::vector<Matrix> hidden;       // after ReLU
  Matrix concat;
  std::vector<nn::TransformerLayer::Cache> layers;
  Matrix phi_out;
};

/// Fixed 2D sine/cosine table (tokens x dim); half the channels encode rows, half columns.
Matrix sinusoidal_position_table(int grid_h, int grid_w, int dim);

/// The trainable segmentation decoder: per-block MLPs, concatenation + 1x1 fusion,
/// a transformer stack, a 1x1 classifier and bilinear upsampling.
class Decoder {
 public:
  explicit Decoder(DecoderConfig config);

  /// FC2 (input -> hidden), ReLU, FC1 (hidden -> hidden) for backbone block `block` (1-based).
  Matrix per_layer_mlp(int block, const Matrix& tokens) const;

  /// Takes all N backbone blocks; uses blocks [layer_start, N].
  Matrix fuse_features(std::span<const Matrix> features) const;

  SegPrediction decode_segment(const Matrix& fused, int grid_h, int grid_w, int image_h, int image_w) const;

  DecoderOutput forward(std::span<const Matrix> features, int grid_h, int grid_w, int image_h, int image_w,
                        DecoderTrace* trace = nullptr) const;
  DecoderOutput forward(const EncodedImage& encoded, int image_h, int image_w, DecoderTrace* trace = nullptr) const;

  /// Accumulates parameter gradients given d(loss)/d(logits) and an optional extra
  /// gradient arriving directly at the fused features.
  void backward(const DecoderTrace& trace, const Matrix& grad_logits, const Matrix* grad_fused = nullptr);

  const DecoderConfig& config() const { return config_; }
  nn::ParameterRegistry& parameters() { return params_; }
  const nn::ParameterRegistry& parameters() const { return params_; }
  std::size_t parameter_count() const { return params_.scalar_count(); }

  TensorArchive state() const { return params_.to_archive(); }
  void load_state(const TensorArchive& archive) { params_.load_archive(archive); }

  /// Mutable access for tests that set parameters by hand.
  nn::Linear& mlp_fc1(int block);
  nn::Linear& mlp_fc2(int block);
  nn::Linear& fuse() { return fuse_; }
  nn::Linear& head() { return head_; }
  std::vector<nn::TransformerLayer>& layers() { return layers_; }

 private:
  int used_blocks() const { return config_.num_blocks - config_.layer_start + 1; }
  std::size_t slot(int block) const;

  DecoderConfig config_;
  nn::ParameterRegistry params_;
  std::vector<nn::Linear> fc1_;  // hidden -> hidden
  std::vector<nn::Linear> fc2_;  // input -> hidden
  nn::Linear fuse_;
  std::vector<nn::TransformerLayer> layers_;
  nn::Linear head_;
};

}  // namespace wsseg
