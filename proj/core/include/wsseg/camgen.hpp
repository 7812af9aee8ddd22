#pragma once

#include "wsseg/backbone.hpp"
#include "wsseg/types.hpp"
#include "wsseg/vocabulary.hpp"

#include <vector>

namespace wsseg {

/// How the background channel of the initial CAM is formed.
enum class BackgroundMode {
  kComplement,  // 1 - max over normalised foreground channels
  kPrompts,     // GradCAM over the background prompts, max-aggregated
};

struct CamConfig {
  double temperature = 0.01;
  BackgroundMode background_mode = BackgroundMode::kComplement;
  double normalize_eps = 1e-8;
};

/// Class activation maps on the token grid. Channel 0 is background; channel i > 0
/// belongs to dataset class `class_ids[i]`.
struct CamStack {
  int height = 0;
  int width = 0;
  Matrix maps;  // channels x (height * width)
  std::vector<int> class_ids;
  bool normalized = false;

  int channels() const { return static_cast<int>(maps.rows()); }
};

/// Cosine similarity of the pooled image embedding with each prompt embedding.
Vector class_distance(const RowVector& pooled, const Matrix& text);

/// softmax(distance / temperature).
Vector class_scores(const Vector& distance, double temperature);

/// GradCAM channel weights for prompt row `cls`, using closed-form derivatives of
/// the temperature softmax and cosine similarity, chained through token averaging.
RowVector channel_weights(const Matrix& tokens, const RowVector& pooled, const Matrix& text, const Vector& scores,
                          const Vector& distance, double temperature, int cls);

/// ReLU(tokens * weights^T): one unnormalised activation per token.
Vector class_activation(const RowVector& weights, const Matrix& tokens);

/// Divides by max(max value, eps); an all-zero map stays zero.
void max_normalize(Eigen::Ref<RowVector> map, double eps = 1e-8);

/// 1 - max over foreground channels (rows 1..).
RowVector complement_background(const Matrix& maps);

/// Initial CAM for the present classes of one encoded image.
CamStack initial_cam(const EncodedImage& encoded, const Matrix& text, const std::vector<int>& present_classes,
                     int num_background_prompts, const CamConfig& config = {});

/// Builds prompts, encodes them and computes the initial CAM.
CamStack make_initial_cam(const Backbone& backbone, const EncodedImage& encoded, const ClassVocabulary& vocabulary,
                          const std::vector<int>& present_classes, const CamConfig& config = {});

}  // namespace wsseg
