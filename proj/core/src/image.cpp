#include "wsseg/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

namespace wsseg {

Image load_image(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw DataError("cannot read image '" + path.string() + "'");
  Image image(bgr.rows, bgr.cols);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      for (int c = 0; c < 3; ++c) image.at(c, y, x) = row[x][2 - c] / 255.0;
    }
  }
  return image;
}

void save_image(const Image& image, const std::filesystem::path& path) {
  cv::Mat bgr(image.height, image.width, CV_8UC3);
  for (int y = 0; y < image.height; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
        row[x][2 - c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  if (!cv::imwrite(path.string(), bgr)) throw DataError("cannot write image '" + path.string() + "'");
}

LabelMap load_label_image(const std::filesystem::path& path) {
  cv::Mat gray = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (gray.empty()) throw DataError("cannot read label image '" + path.string() + "'");
  LabelMap labels(gray.rows, gray.cols);
  for (int y = 0; y < gray.rows; ++y) {
    const auto* row = gray.ptr<std::uint8_t>(y);
    for (int x = 0; x < gray.cols; ++x) labels.at(y, x) = row[x] == 255 ? kIgnoreLabel : row[x];
  }
  return labels;
}

void save_label_image(const LabelMap& labels, const std::filesystem::path& path) {
  cv::Mat gray(labels.height, labels.width, CV_8UC1);
  for (int y = 0; y < labels.height; ++y) {
    auto* row = gray.ptr<std::uint8_t>(y);
    for (int x = 0; x < labels.width; ++x) {
      const int v = labels.at(y, x);
      if (v != kIgnoreLabel && (v < 0 || v > 254)) {
        throw ShapeError("label " + std::to_string(v) + " does not fit an 8-bit index image");
      }
      row[x] = v == kIgnoreLabel ? 255 : static_cast<std::uint8_t>(v);
    }
  }
  if (!cv::imwrite(path.string(), gray)) throw DataError("cannot write label image '" + path.string() + "'");
}

std::array<std::uint8_t, 3> palette_color(int class_index) {
  std::array<std::uint8_t, 3> rgb{0, 0, 0};
  int c = class_index;
  for (int bit = 7; bit >= 0 && c > 0; --bit) {
    for (int ch = 0; ch < 3; ++ch) {
      rgb[ch] = static_cast<std::uint8_t>(rgb[ch] | (((c >> ch) & 1) << bit));
    }
    c >>= 3;
  }
  return rgb;
}

namespace {

struct Tap {
  int lo;
  int hi;
  double frac;
};

std::vector<Tap> linear_taps(int in, int out) {
  std::vector<Tap> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    double src = std::max((i + 0.5) * scale - 0.5, 0.0);
    int lo = std::min(static_cast<int>(std::floor(src)), in - 1);
    int hi = std::min(lo + 1, in - 1);
    taps[static_cast<std::size_t>(i)] = {lo, hi, src - lo};
  }
  return taps;
}

}  // namespace

SparseMatrix bilinear_operator(int in_h, int in_w, int out_h, int out_w) {
  if (in_h <= 0 || in_w <= 0 || out_h <= 0 || out_w <= 0) {
    throw ShapeError("bilinear resize needs positive sizes");
  }
  const auto ty = linear_taps(in_h, out_h);
  const auto tx = linear_taps(in_w, out_w);
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(out_h) * out_w * 4);
  for (int y = 0; y < out_h; ++y) {
    const Tap& a = ty[static_cast<std::size_t>(y)];
    for (int x = 0; x < out_w; ++x) {
      const Tap& b = tx[static_cast<std::size_t>(x)];
      const int row = y * out_w + x;
      triplets.emplace_back(row, a.lo * in_w + b.lo, (1 - a.frac) * (1 - b.frac));
      triplets.emplace_back(row, a.lo * in_w + b.hi, (1 - a.frac) * b.frac);
      triplets.emplace_back(row, a.hi * in_w + b.lo, a.frac * (1 - b.frac));
      triplets.emplace_back(row, a.hi * in_w + b.hi, a.frac * b.frac);
    }
  }
  SparseMatrix op(out_h * out_w, in_h * in_w);
  op.setFromTriplets(triplets.begin(), triplets.end());  // duplicates are summed
  op.prune(0.0);
  return op;
}

Matrix resize_bilinear(const Matrix& planes, int in_h, int in_w, int out_h, int out_w) {
  if (planes.cols() != static_cast<Eigen::Index>(in_h) * in_w) {
    throw ShapeError("resize_bilinear: plane size does not match the input grid");
  }
  const SparseMatrix op = bilinear_operator(in_h, in_w, out_h, out_w);
  Matrix out = (op * planes.transpose()).transpose();
  return out;
}

Image resize_bilinear(const Image& image, int out_h, int out_w) {
  Eigen::Map<const Matrix> planes(image.data.data(), 3, static_cast<Eigen::Index>(image.pixel_count()));
  Matrix resized = resize_bilinear(Matrix(planes), image.height, image.width, out_h, out_w);
  Image out(out_h, out_w);
  std::copy(resized.data(), resized.data() + resized.size(), out.data.begin());
  return out;
}

LabelMap resize_nearest(const LabelMap& labels, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0) throw ShapeError("resize_nearest needs positive sizes");
  LabelMap out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    const int sy = std::min(static_cast<int>(static_cast<long long>(y) * labels.height / out_h), labels.height - 1);
    for (int x = 0; x < out_w; ++x) {
      const int sx = std::min(static_cast<int>(static_cast<long long>(x) * labels.width / out_w), labels.width - 1);
      out.at(y, x) = labels.at(sy, sx);
    }
  }
  return out;
}

Image patch_average(const Image& image, int patch) {
  if (patch <= 0 || image.height % patch != 0 || image.width % patch != 0) {
    throw ShapeError("patch_average: image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                     " is not divisible by patch " + std::to_string(patch));
  }
  const int gh = image.height / patch;
  const int gw = image.width / patch;
  Image out(gh, gw);
  const double inv = 1.0 / (patch * patch);
  for (int c = 0; c < 3; ++c) {
    for (int gy = 0; gy < gh; ++gy) {
      for (int gx = 0; gx < gw; ++gx) {
        double sum = 0.0;
        for (int y = 0; y < patch; ++y) {
          for (int x = 0; x < patch; ++x) sum += image.at(c, gy * patch + y, gx * patch + x);
        }
        out.at(c, gy, gx) = sum * inv;
      }
    }
  }
  return out;
}

Image crop(const Image& image, int top, int left, int h, int w) {
  Image out(h, w);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y) {
      const int sy = top + y;
      if (sy < 0 || sy >= image.height) continue;
      for (int x = 0; x < w; ++x) {
        const int sx = left + x;
        if (sx >= 0 && sx < image.width) out.at(c, y, x) = image.at(c, sy, sx);
      }
    }
  }
  return out;
}

LabelMap crop(const LabelMap& labels, int top, int left, int h, int w, int fill) {
  LabelMap out(h, w, fill);
  for (int y = 0; y < h; ++y) {
    const int sy = top + y;
    if (sy < 0 || sy >= labels.height) continue;
    for (int x = 0; x < w; ++x) {
      const int sx = left + x;
      if (sx >= 0 && sx < labels.width) out.at(y, x) = labels.at(sy, sx);
    }
  }
  return out;
}

Image flip_horizontal(const Image& image) {
  Image out(image.height, image.width);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) out.at(c, y, x) = image.at(c, y, image.width - 1 - x);
    }
  }
  return out;
}

LabelMap flip_horizontal(const LabelMap& labels) {
  LabelMap out(labels.height, labels.width);
  for (int y = 0; y < labels.height; ++y) {
    for (int x = 0; x < labels.width; ++x) out.at(y, x) = labels.at(y, labels.width - 1 - x);
  }
  return out;
}

}  // namespace wsseg
