#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace wsseg {

// Token matrices are (tokens x channels); token index = row * grid_w + col.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Shapes of two operands do not agree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Bad user-supplied configuration or flag.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Missing or malformed input data (files, datasets, archives).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A computation produced a non-finite value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ignored pixel in a label map (never produced by pseudo labelling).
inline constexpr int kIgnoreLabel = -1;

/// RGB image, channel-major (3 x H x W), values nominally in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(3) * h * w, 0.0) {}

  double& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  double at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }

  bool operator==(const Image&) const = default;
};

/// Per-pixel class indices, row-major.
struct LabelMap {
  int height = 0;
  int width = 0;
  std::vector<int> labels;

  LabelMap() = default;
  LabelMap(int h, int w, int fill = 0)
      : height(h), width(w), labels(static_cast<std::size_t>(h) * w, fill) {}

  int& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
  int at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return labels.size(); }

  bool operator==(const LabelMap&) const = default;
};

}  // namespace wsseg
