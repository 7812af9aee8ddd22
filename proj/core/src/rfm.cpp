#include "wsseg/rfm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wsseg::rfm {

Matrix affinity_map(const Matrix& fused_tokens) {
  const Matrix gram = fused_tokens * fused_tokens.transpose();
  return gram.unaryExpr([](double z) { return 1.0 / (1.0 + std::exp(-z)); });
}

double attention_score(const Matrix& affinity, const Matrix& attention) {
  if (affinity.rows() != attention.rows() || affinity.cols() != attention.cols()) {
    throw ShapeError("attention_score: affinity is " + std::to_string(affinity.rows()) + "x" +
                     std::to_string(affinity.cols()) + ", attention is " + std::to_string(attention.rows()) + "x" +
                     std::to_string(attention.cols()));
  }
  return (affinity - attention).cwiseAbs().sum();
}

FilterMask attention_filter(std::span<const double> scores, int eligible_start) {
  const int n = static_cast<int>(scores.size());
  if (eligible_start < 1 || eligible_start > n) {
    throw std::invalid_argument("attention_filter: N0 = " + std::to_string(eligible_start) + " outside [1, " +
                                std::to_string(n) + "]");
  }
  double sum = 0.0;
  for (int l = eligible_start; l <= n; ++l) sum += scores[static_cast<std::size_t>(l - 1)];
  const double threshold = sum / static_cast<double>(n - eligible_start + 1);

  FilterMask mask;
  mask.eligible_start = eligible_start;
  mask.selected.assign(static_cast<std::size_t>(n), 0);
  for (int l = eligible_start; l <= n; ++l) {
    if (scores[static_cast<std::size_t>(l - 1)] < threshold) {
      mask.selected[static_cast<std::size_t>(l - 1)] = 1;
      ++mask.num_selected;
    }
  }
  if (mask.num_selected == 0) {
    mask.fallback = true;
    for (int l = eligible_start; l <= n; ++l) mask.selected[static_cast<std::size_t>(l - 1)] = 1;
    mask.num_selected = n - eligible_start + 1;
  }
  return mask;
}

Matrix refining_map(const Matrix& affinity, const FilterMask& filter, std::span<const Matrix> attentions) {
  if (filter.selected.size() != attentions.size()) {
    throw ShapeError("refining_map: filter covers " + std::to_string(filter.selected.size()) + " blocks, got " +
                     std::to_string(attentions.size()) + " attention maps");
  }
  if (filter.num_selected < 1) throw std::invalid_argument("refining_map: no attention map selected");
  Matrix sum = Matrix::Zero(affinity.rows(), affinity.cols());
  for (std::size_t l = 0; l < attentions.size(); ++l) {
    if (!filter.selected[l]) continue;
    if (attentions[l].rows() != affinity.rows() || attentions[l].cols() != affinity.cols()) {
      throw ShapeError("refining_map: attention map " + std::to_string(l + 1) + " does not match the affinity");
    }
    sum += attentions[l];
  }
  return affinity.cwiseProduct(sum) / static_cast<double>(filter.num_selected);
}

double doubly_stochastic_error(const Matrix& m) {
  const double rows = (m.rowwise().sum().array() - 1.0).abs().maxCoeff();
  const double cols = (m.colwise().sum().array() - 1.0).abs().maxCoeff();
  return std::max(rows, cols);
}

Matrix sinkhorn_normalize(Matrix m, const SinkhornOptions& options) {
  if (m.rows() != m.cols() || m.rows() == 0) throw ShapeError("sinkhorn_normalize: matrix must be square");
  if ((m.array() < 0.0).any()) throw std::invalid_argument("sinkhorn_normalize: negative entry");
  if ((m.rowwise().sum().array() <= 0.0).any() || (m.colwise().sum().array() <= 0.0).any()) {
    m.array() += options.eps;
  }
  for (int it = 0; it < options.max_iterations; ++it) {
    if (doubly_stochastic_error(m) < options.tolerance) break;
    const Vector row_sums = m.rowwise().sum();
    m = row_sums.cwiseInverse().asDiagonal() * m;
    const RowVector col_sums = m.colwise().sum();
    m = m * col_sums.cwiseInverse().asDiagonal();
  }
  return m;
}

BoxMask class_box_mask(const RowVector& channel, int height, int width, double threshold) {
  if (channel.size() != static_cast<Eigen::Index>(height) * width) {
    throw ShapeError("class_box_mask: channel size does not match the grid");
  }
  BoxMask box{height, width, -1, -1};
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (channel(static_cast<Eigen::Index>(y) * width + x) >= threshold) {
        box.row0 = std::min(box.row0, y);
        box.col0 = std::min(box.col0, x);
        box.row1 = std::max(box.row1, y);
        box.col1 = std::max(box.col1, x);
      }
    }
  }
  if (box.row1 < 0) return BoxMask{0, 0, height - 1, width - 1};
  return box;
}

CamStack refine_cam(const Matrix& normalized_refining, const CamStack& initial, int alpha, AlphaMode mode,
                    std::span<const BoxMask> boxes) {
  const Eigen::Index hw = static_cast<Eigen::Index>(initial.height) * initial.width;
  if (normalized_refining.rows() != hw || normalized_refining.cols() != hw || initial.maps.cols() != hw) {
    throw ShapeError("refine_cam: refining map does not match the CAM grid");
  }
  if (alpha < 1) throw std::invalid_argument("refine_cam: alpha must be a positive integer");
  if (static_cast<int>(boxes.size()) != initial.channels() - 1) {
    throw ShapeError("refine_cam: need one box per foreground channel");
  }

  Matrix transition = (normalized_refining + normalized_refining.transpose()) / 2.0;
  if (mode == AlphaMode::kElementwise) transition = transition.array().pow(alpha).matrix();

  CamStack out = initial;
  for (int c = 1; c < initial.channels(); ++c) {
    const BoxMask& box = boxes[static_cast<std::size_t>(c - 1)];
    Vector source_mask(hw);
    for (int y = 0; y < initial.height; ++y) {
      for (int x = 0; x < initial.width; ++x) {
        source_mask(static_cast<Eigen::Index>(y) * initial.width + x) = box.contains(y, x) ? 1.0 : 0.0;
      }
    }
    Vector v = initial.maps.row(c).transpose();
    const int steps = mode == AlphaMode::kMatrix ? alpha : 1;
    for (int s = 0; s < steps; ++s) v = transition * v.cwiseProduct(source_mask);
    out.maps.row(c) = v.transpose();
    max_normalize(out.maps.row(c));
  }
  out.maps.row(0) = complement_background(out.maps);
  out.normalized = true;
  return out;
}

Matrix par_refine(const Image& grid_image, const Matrix& scores, const ParOptions& options) {
  const int h = grid_image.height;
  const int w = grid_image.width;
  const Eigen::Index hw = static_cast<Eigen::Index>(h) * w;
  if (scores.cols() != hw) throw ShapeError("par_refine: scores do not match the image grid");
  if (options.iterations <= 0) return scores;
  if (!(options.sigma_rgb > 0.0)) throw std::invalid_argument("par_refine: sigma_rgb must be positive");

  struct Neighbour {
    Eigen::Index index;
    double weight;
  };
  std::vector<std::vector<Neighbour>> kernel(static_cast<std::size_t>(hw));
  const double denom = 2.0 * options.sigma_rgb * options.sigma_rgb;
  static constexpr int kOffsets[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1}};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      auto& nbrs = kernel[static_cast<std::size_t>(y) * w + x];
      double total = 0.0;
      for (int dil : options.dilations) {
        for (const auto& off : kOffsets) {
          const int ny = y + off[0] * dil;
          const int nx = x + off[1] * dil;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          double dist = 0.0;
          for (int c = 0; c < 3; ++c) {
            const double diff = grid_image.at(c, y, x) - grid_image.at(c, ny, nx);
            dist += diff * diff;
          }
          const double k = std::exp(-dist / denom);
          nbrs.push_back({static_cast<Eigen::Index>(ny) * w + nx, k});
          total += k;
        }
      }
      if (total > 0.0) {
        for (auto& n : nbrs) n.weight /= total;
      } else {
        nbrs.clear();
      }
    }
  }

  Matrix current = scores;
  Matrix next(scores.rows(), scores.cols());
  for (int it = 0; it < options.iterations; ++it) {
    for (Eigen::Index i = 0; i < hw; ++i) {
      const auto& nbrs = kernel[static_cast<std::size_t>(i)];
      if (nbrs.empty()) {
        next.col(i) = current.col(i);
        continue;
      }
      next.col(i).setZero();
      for (const auto& n : nbrs) next.col(i) += n.weight * current.col(n.index);
    }
    std::swap(current, next);
  }
  return current;
}

LabelMap to_pseudo_label(const Matrix& scores, int height, int width, const std::vector<int>& class_ids) {
  if (scores.cols() != static_cast<Eigen::Index>(height) * width) throw ShapeError("to_pseudo_label: grid mismatch");
  if (static_cast<Eigen::Index>(class_ids.size()) != scores.rows()) {
    throw ShapeError("to_pseudo_label: need one class id per channel");
  }
  LabelMap labels(height, width);
  for (Eigen::Index i = 0; i < scores.cols(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < scores.rows(); ++c) {
      if (scores(c, i) > scores(best, i)) best = c;
    }
    labels.labels[static_cast<std::size_t>(i)] = class_ids[static_cast<std::size_t>(best)];
  }
  return labels;
}

PseudoLabelResult refine_pseudo_labels(const CamStack& initial, const Matrix& fused_tokens,
                                       std::span<const Matrix> attentions, const Image& grid_image,
                                       const RefineConfig& config) {
  PseudoLabelResult r;
  r.affinity = affinity_map(fused_tokens);
  r.scores.reserve(attentions.size());
  for (const Matrix& a : attentions) r.scores.push_back(attention_score(r.affinity, a));
  r.filter = attention_filter(r.scores, config.eligible_start);
  r.refining_normalized = sinkhorn_normalize(refining_map(r.affinity, r.filter, attentions), config.sinkhorn);
  for (int c = 1; c < initial.channels(); ++c) {
    r.boxes.push_back(class_box_mask(initial.maps.row(c), initial.height, initial.width, config.box_threshold));
  }
  r.refined = refine_cam(r.refining_normalized, initial, config.alpha, config.alpha_mode, r.boxes);
  r.final_scores = config.use_par ? par_refine(grid_image, r.refined.maps, config.par) : r.refined.maps;
  r.labels = to_pseudo_label(r.final_scores, initial.height, initial.width, initial.class_ids);
  return r;
}

}  // namespace wsseg::rfm
