#include "wsseg/camgen.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wsseg {

Vector class_distance(const RowVector& pooled, const Matrix& text) {
  if (pooled.size() != text.cols()) {
    throw ShapeError("class_distance: image embedding has " + std::to_string(pooled.size()) +
                     " dims, text embeddings have " + std::to_string(text.cols()));
  }
  const double pooled_norm = pooled.norm();
  if (!(pooled_norm > 0.0)) throw std::invalid_argument("class_distance: zero-norm image embedding");
  Vector d(text.rows());
  for (Eigen::Index c = 0; c < text.rows(); ++c) {
    const double tn = text.row(c).norm();
    if (!(tn > 0.0)) throw std::invalid_argument("class_distance: zero-norm text embedding in row " + std::to_string(c));
    d(c) = std::clamp(text.row(c).dot(pooled) / (tn * pooled_norm), -1.0, 1.0);
  }
  return d;
}

Vector class_scores(const Vector& distance, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("class_scores: temperature must be positive");
  Vector logits = distance / temperature;
  Vector s = (logits.array() - logits.maxCoeff()).exp().matrix();
  return s / s.sum();
}

RowVector channel_weights(const Matrix& tokens, const RowVector& pooled, const Matrix& text, const Vector& scores,
                          const Vector& distance, double temperature, int cls) {
  const Eigen::Index prompts = text.rows();
  if (scores.size() != prompts || distance.size() != prompts || pooled.size() != text.cols()) {
    throw ShapeError("channel_weights: inconsistent score/distance/embedding sizes");
  }
  if (cls < 0 || cls >= prompts) throw std::out_of_range("channel_weights: class row out of range");
  if (tokens.rows() == 0) throw ShapeError("channel_weights: no tokens");
  const double pooled_norm = pooled.norm();
  if (!(pooled_norm > 0.0)) throw std::invalid_argument("channel_weights: zero-norm image embedding");

  // dS_c/dD_c' = S_c (delta - S_c') / tau
  // dD_c'/dF_v = t_c' / (|t_c'| |F_v|) - D_c' F_v / |F_v|^2
  RowVector grad_pooled = RowVector::Zero(pooled.size());
  for (Eigen::Index c = 0; c < prompts; ++c) {
    const double ds = scores(cls) * ((c == cls ? 1.0 : 0.0) - scores(c)) / temperature;
    if (ds == 0.0) continue;
    const double tn = text.row(c).norm();
    if (!(tn > 0.0)) throw std::invalid_argument("channel_weights: zero-norm text embedding");
    grad_pooled += ds * (text.row(c) / (tn * pooled_norm) - distance(c) * pooled / (pooled_norm * pooled_norm));
  }
  // Each token contributes grad_pooled / hw; GradCAM averages those over the hw tokens.
  const double hw = static_cast<double>(tokens.rows());
  return grad_pooled / hw;
}

Vector class_activation(const RowVector& weights, const Matrix& tokens) {
  if (weights.size() != tokens.cols()) throw ShapeError("class_activation: weight/token dims differ");
  return (tokens * weights.transpose()).cwiseMax(0.0);
}

void max_normalize(Eigen::Ref<RowVector> map, double eps) {
  const double m = map.size() == 0 ? 0.0 : map.maxCoeff();
  if (m <= 0.0) {
    map.setZero();
    return;
  }
  map /= std::max(m, eps);
}

RowVector complement_background(const Matrix& maps) {
  if (maps.rows() <= 1) return RowVector::Ones(maps.cols());
  return (1.0 - maps.bottomRows(maps.rows() - 1).colwise().maxCoeff().array()).matrix();
}

CamStack initial_cam(const EncodedImage& encoded, const Matrix& text, const std::vector<int>& present_classes,
                     int num_background_prompts, const CamConfig& config) {
  const int fg = static_cast<int>(present_classes.size());
  if (text.rows() != fg + num_background_prompts) {
    throw ShapeError("initial_cam: expected " + std::to_string(fg + num_background_prompts) + " prompt rows, got " +
                     std::to_string(text.rows()));
  }
  const Eigen::Index hw = encoded.token_count();
  if (encoded.image_tokens.rows() != hw) throw ShapeError("initial_cam: token count does not match the grid");

  const Vector distance = class_distance(encoded.pooled, text);
  const Vector scores = class_scores(distance, config.temperature);

  CamStack cam;
  cam.height = encoded.grid_h;
  cam.width = encoded.grid_w;
  cam.maps = Matrix::Zero(fg + 1, hw);
  cam.class_ids.push_back(0);
  for (int i = 0; i < fg; ++i) {
    const RowVector w =
        channel_weights(encoded.image_tokens, encoded.pooled, text, scores, distance, config.temperature, i);
    cam.maps.row(i + 1) = class_activation(w, encoded.image_tokens).transpose();
    max_normalize(cam.maps.row(i + 1), config.normalize_eps);
    cam.class_ids.push_back(present_classes[static_cast<std::size_t>(i)]);
  }
  if (config.background_mode == BackgroundMode::kPrompts && num_background_prompts > 0) {
    RowVector bg = RowVector::Zero(hw);
    for (int b = 0; b < num_background_prompts; ++b) {
      const RowVector w =
          channel_weights(encoded.image_tokens, encoded.pooled, text, scores, distance, config.temperature, fg + b);
      bg = bg.cwiseMax(class_activation(w, encoded.image_tokens).transpose());
    }
    max_normalize(bg, config.normalize_eps);
    cam.maps.row(0) = bg;
  } else {
    cam.maps.row(0) = complement_background(cam.maps);
  }
  cam.normalized = true;
  return cam;
}

CamStack make_initial_cam(const Backbone& backbone, const EncodedImage& encoded, const ClassVocabulary& vocabulary,
                          const std::vector<int>& present_classes, const CamConfig& config) {
  const std::vector<int> present = canonical_present_classes(vocabulary, present_classes);
  const std::vector<std::string> prompts = build_prompts(vocabulary, present);
  if (prompts.empty()) throw std::invalid_argument("make_initial_cam: no prompts (empty vocabulary)");
  const Matrix text = backbone.encode_text(prompts);
  return initial_cam(encoded, text, present, static_cast<int>(vocabulary.background_names.size()), config);
}

}  // namespace wsseg
