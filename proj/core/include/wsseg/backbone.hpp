#pragma once

#include "wsseg/archive.hpp"
#include "wsseg/types.hpp"
#include "wsseg/vocabulary.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace wsseg {

struct BackboneConfig {
  enum class Source { kSynthetic, kPretrained };

  int num_blocks = 12;
  int token_dim = 768;
  int patch_size = 16;
  // Native token grid; other input sizes interpolate the positional embedding.
  int grid_h = 20;
  int grid_w = 20;
  int num_heads = 12;
  int text_dim = 512;
  int mlp_ratio = 4;
  Source source = Source::kSynthetic;
  std::filesystem::path archive_path;
  std::uint64_t seed = 0;
  std::array<double, 3> pixel_mean{0.48145466, 0.4578275, 0.40821073};
  std::array<double, 3> pixel_std{0.26862954, 0.26130258, 0.27577711};

  void validate() const;
};

/// Toy "separable" mode: the last block's tokens become a fixed per-class embedding
/// of the layout read off the image (nearest palette colour per patch) plus seeded
/// noise. Class embeddings project onto the class prompts' text embeddings.
struct SeparableSpec {
  ClassVocabulary vocabulary;
  double noise_sigma = 0.0;
  // Replace every attention map with the row-normalised same-class indicator.
  bool indicator_attention = false;
};

/// Frozen encoder outputs for one image.
struct EncodedImage {
  int grid_h = 0;
  int grid_w = 0;
  std::vector<Matrix> features;    // N x (hw x token_dim), class token removed
  std::vector<Matrix> attentions;  // N x (hw x hw), head-averaged, row-stochastic
  Matrix image_tokens;             // F: (hw x text_dim), last block after projection
  RowVector pooled;                // F_v: token mean of image_tokens

  int token_count() const { return grid_h * grid_w; }
};

/// Frozen image/text encoder. Immutable after construction; all methods are const
/// and safe to call concurrently.
class Backbone {
 public:
  /// Weights drawn from a seeded generator (and rounded to float32).
  static Backbone synthetic(const BackboneConfig& config, std::uint64_t seed,
                            std::optional<SeparableSpec> separable = std::nullopt);
  /// Weights read from a named-tensor archive. Prompt embeddings, when needed,
  /// are looked up as `text/<prompt>` entries.
  static Backbone from_archive(const TensorArchive& archive, const BackboneConfig& config);
  static Backbone from_file(const std::filesystem::path& path, const BackboneConfig& config);

  EncodedImage encode_image(const Image& image) const;
  std::vector<EncodedImage> encode_images(std::span<const Image> images) const;

  /// One row per prompt (num_prompts x text_dim).
  Matrix encode_text(std::span<const std::string> prompts) const;

  const BackboneConfig& config() const { return config_; }
  const TensorArchive& weights() const { return weights_; }
  bool separable() const { return separable_.has_value(); }

  /// Separable mode only: per-token class layout derived from the image.
  LabelMap token_layout(const Image& image) const;

 private:
  struct Block {
    RowVector ln1_w, ln1_b, ln2_w, ln2_b;
    Matrix qkv_w;
    RowVector qkv_b;
    Matrix proj_w;
    RowVector proj_b;
    Matrix fc1_w;
    RowVector fc1_b;
    Matrix fc2_w;
    RowVector fc2_b;
  };

  Backbone(BackboneConfig config, TensorArchive weights);
  void unpack();
  Matrix positional_embedding(int gh, int gw) const;
  Matrix separable_noise(int gh, int gw) const;
  RowVector synthetic_text_embedding(const std::string& prompt) const;

  BackboneConfig config_;
  TensorArchive weights_;

  Matrix patch_w_;
  RowVector patch_b_;
  RowVector cls_token_;
  Matrix pos_embed_;
  RowVector ln_pre_w_, ln_pre_b_;
  std::vector<Block> blocks_;
  std::optional<std::pair<RowVector, RowVector>> ln_post_;
  Matrix proj_;

  struct SeparableState {
    Matrix class_embed;  // (classes x token_dim), row 0 = background
    Matrix palette;      // (classes x 3) in [0, 1]
    double noise_sigma = 0.0;
    bool indicator_attention = false;
  };
  std::optional<SeparableState> separable_;
  bool synthetic_text_ = true;
};

}  // namespace wsseg
