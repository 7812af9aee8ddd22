#include "wsseg/decoder.hpp"

#include "wsseg/image.hpp"

#include <cmath>

namespace wsseg {

void DecoderConfig::validate() const {
  if (input_dim < 1 || num_blocks < 1 || hidden < 1 || depth < 0 || heads < 1 || ffn_expansion < 1 ||
      num_classes < 2) {
    throw ConfigError("decoder dimensions must be positive (and at least 2 classes)");
  }
  if (layer_start < 1 || layer_start > num_blocks) {
    throw ConfigError("decoder layer_start " + std::to_string(layer_start) + " outside [1, " +
                      std::to_string(num_blocks) + "]");
  }
  if (hidden % heads != 0) {
    throw ConfigError("decoder width " + std::to_string(hidden) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
}

Matrix sinusoidal_position_table(int grid_h, int grid_w, int dim) {
  Matrix table = Matrix::Zero(static_cast<Eigen::Index>(grid_h) * grid_w, dim);
  const int half = dim / 2;
  for (int y = 0; y < grid_h; ++y) {
    for (int x = 0; x < grid_w; ++x) {
      const Eigen::Index t = static_cast<Eigen::Index>(y) * grid_w + x;
      for (int k = 0; k < half; ++k) {
        const double freq = std::pow(10000.0, -2.0 * (k / 2) / std::max(half, 1));
        table(t, k) = (k % 2 == 0) ? std::sin(y * freq) : std::cos(y * freq);
      }
      for (int k = half; k < dim; ++k) {
        const int j = k - half;
        const double freq = std::pow(10000.0, -2.0 * (j / 2) / std::max(dim - half, 1));
        table(t, k) = (j % 2 == 0) ? std::sin(x * freq) : std::cos(x * freq);
      }
    }
  }
  return table;
}

Decoder::Decoder(DecoderConfig config) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(config_.seed ^ 0xDEC0DE5EEDull);
  for (int l = config_.layer_start; l <= config_.num_blocks; ++l) {
    const std::string p = "decoder/mlp" + std::to_string(l);
    fc2_.emplace_back(params_, p + "/fc2", config_.input_dim, config_.hidden, rng);
    fc1_.emplace_back(params_, p + "/fc1", config_.hidden, config_.hidden, rng);
  }
  fuse_ = nn::Linear(params_, "decoder/fuse", used_blocks() * config_.hidden, config_.hidden, rng);
  for (int i = 1; i <= config_.depth; ++i) {
    layers_.emplace_back(params_, "decoder/phi" + std::to_string(i), config_.hidden, config_.heads,
                         config_.hidden * config_.ffn_expansion, rng);
  }
  head_ = nn::Linear(params_, "decoder/head", config_.hidden, config_.num_classes, rng);
}

std::size_t Decoder::slot(int block) const {
  if (block < config_.layer_start || block > config_.num_blocks) {
    throw std::out_of_range("decoder has no MLP for block " + std::to_string(block));
  }
  return static_cast<std::size_t>(block - config_.layer_start);
}

nn::Linear& Decoder::mlp_fc1(int block) { return fc1_[slot(block)]; }
nn::Linear& Decoder::mlp_fc2(int block) { return fc2_[slot(block)]; }

Matrix Decoder::per_layer_mlp(int block, const Matrix& tokens) const {
  const std::size_t s = slot(block);
  if (tokens.cols() != config_.input_dim) {
    throw ShapeError("per_layer_mlp: token width " + std::to_string(tokens.cols()) + ", expected " +
                     std::to_string(config_.input_dim));
  }
  return fc1_[s].forward(fc2_[s].forward(tokens).cwiseMax(0.0));
}

Matrix Decoder::fuse_features(std::span<const Matrix> features) const {
  if (static_cast<int>(features.size()) != config_.num_blocks) {
    throw ShapeError("fuse_features: expected " + std::to_string(config_.num_blocks) + " blocks, got " +
                     std::to_string(features.size()));
  }
  const Eigen::Index tokens = features.front().rows();
  Matrix concat(tokens, static_cast<Eigen::Index>(used_blocks()) * config_.hidden);
  for (int l = config_.layer_start; l <= config_.num_blocks; ++l) {
    const Matrix& f = features[static_cast<std::size_t>(l - 1)];
    if (f.rows() != tokens) throw ShapeError("fuse_features: blocks disagree on token count");
    concat.middleCols(static_cast<Eigen::Index>(slot(l)) * config_.hidden, config_.hidden) = per_layer_mlp(l, f);
  }
  return fuse_.forward(concat);
}

SegPrediction Decoder::decode_segment(const Matrix& fused, int grid_h, int grid_w, int image_h, int image_w) const {
  if (fused.rows() != static_cast<Eigen::Index>(grid_h) * grid_w || fused.cols() != config_.hidden) {
    throw ShapeError("decode_segment: fused map does not match grid/width");
  }
  Matrix x = fused;
  if (config_.positional) x += sinusoidal_position_table(grid_h, grid_w, config_.hidden);
  for (const auto& layer : layers_) x = layer.forward(x);
  const Matrix token_logits = head_.forward(x);
  SegPrediction p;
  p.height = image_h;
  p.width = image_w;
  p.logits = bilinear_operator(grid_h, grid_w, image_h, image_w) * token_logits;
  return p;
}

DecoderOutput Decoder::forward(std::span<const Matrix> features, int grid_h, int grid_w, int image_h, int image_w,
                               DecoderTrace* trace) const {
  if (static_cast<int>(features.size()) != config_.num_blocks) {
    throw ShapeError("decoder expected " + std::to_string(config_.num_blocks) + " feature blocks, got " +
                     std::to_string(features.size()));
  }
  const Eigen::Index tokens = static_cast<Eigen::Index>(grid_h) * grid_w;
  Matrix concat(tokens, static_cast<Eigen::Index>(used_blocks()) * config_.hidden);
  if (trace) {
    *trace = DecoderTrace{};
    trace->grid_h = grid_h;
    trace->grid_w = grid_w;
    trace->image_h = image_h;
    trace->image_w = image_w;
  }
  for (int l = config_.layer_start; l <= config_.num_blocks; ++l) {
    const Matrix& f = features[static_cast<std::size_t>(l - 1)];
    if (f.rows() != tokens || f.cols() != config_.input_dim) {
      throw ShapeError("decoder block " + std::to_string(l) + " has shape " + std::to_string(f.rows()) + "x" +
                       std::to_string(f.cols()));
    }
    const std::size_t s = slot(l);
    Matrix pre = fc2_[s].forward(f);
    Matrix act = pre.cwiseMax(0.0);
    concat.middleCols(static_cast<Eigen::Index>(s) * config_.hidden, config_.hidden) = fc1_[s].forward(act);
    if (trace) {
      trace->inputs.push_back(f);
      trace->hidden_pre.push_back(std::move(pre));
      trace->hidden.push_back(std::move(act));
    }
  }

  DecoderOutput out;
  out.fused = fuse_.forward(concat);
  Matrix x = out.fused;
  if (config_.positional) x += sinusoidal_position_table(grid_h, grid_w, config_.hidden);
  if (trace) trace->layers.resize(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) x = layers_[i].forward(x, trace ? &trace->layers[i] : nullptr);
  out.token_logits = head_.forward(x);
  out.prediction.height = image_h;
  out.prediction.width = image_w;
  out.prediction.logits = bilinear_operator(grid_h, grid_w, image_h, image_w) * out.token_logits;
  if (trace) {
    trace->concat = std::move(concat);
    trace->phi_out = std::move(x);
  }
  return out;
}

DecoderOutput Decoder::forward(const EncodedImage& encoded, int image_h, int image_w, DecoderTrace* trace) const {
  return forward(encoded.features, encoded.grid_h, encoded.grid_w, image_h, image_w, trace);
}

void Decoder::backward(const DecoderTrace& trace, const Matrix& grad_logits, const Matrix* grad_fused) {
  const SparseMatrix up = bilinear_operator(trace.grid_h, trace.grid_w, trace.image_h, trace.image_w);
  if (grad_logits.rows() != up.rows() || grad_logits.cols() != config_.num_classes) {
    throw ShapeError("decoder backward: logits gradient has the wrong shape");
  }
  const Matrix grad_tokens = up.transpose() * grad_logits;
  Matrix g = head_.backward(trace.phi_out, grad_tokens);
  for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i].backward(trace.layers[i], g);
  if (grad_fused) g += *grad_fused;
  const Matrix grad_concat = fuse_.backward(trace.concat, g);
  for (std::size_t s = 0; s < fc1_.size(); ++s) {
    const Matrix grad_new = grad_concat.middleCols(static_cast<Eigen::Index>(s) * config_.hidden, config_.hidden);
    Matrix grad_act = fc1_[s].backward(trace.hidden[s], grad_new);
    grad_act = (trace.hidden_pre[s].array() > 0.0).select(grad_act.array(), 0.0).matrix();
    fc2_[s].backward(trace.inputs[s], grad_act);
  }
}

}  // namespace wsseg
