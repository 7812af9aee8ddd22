#include "wsseg/inference.hpp"

#include "wsseg/image.hpp"

#include <algorithm>
#include <cmath>

namespace wsseg {

Matrix softmax_probabilities(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - m).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

LabelMap argmax_labels(const Matrix& scores, int height, int width) {
  if (scores.rows() != static_cast<Eigen::Index>(height) * width) {
    throw ShapeError("argmax_labels: " + std::to_string(scores.rows()) + " rows for a " + std::to_string(height) +
                     "x" + std::to_string(width) + " map");
  }
  LabelMap out(height, width);
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < scores.cols(); ++c) {
      if (scores(i, c) > scores(i, best)) best = c;
    }
    out.labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

int scaled_size(int size, double scale, int patch_size) {
  const double target = std::round(size * scale);
  const int patches = static_cast<int>(std::lround(target / patch_size));
  return std::max(1, patches) * patch_size;
}

SegPrediction infer_logits(const Backbone& backbone, const Decoder& decoder, const Image& image) {
  const EncodedImage enc = backbone.encode_image(image);
  return decoder.forward(enc, image.height, image.width).prediction;
}

MultiScaleResult multi_scale_infer(const Backbone& backbone, const Decoder& decoder, const Image& image,
                                   std::span<const double> scales) {
  if (scales.empty()) throw std::invalid_argument("multi_scale_infer: empty scale list");
  const int p = backbone.config().patch_size;
  const int h = image.height, w = image.width;
  const int classes = decoder.config().num_classes;
  Matrix sum = Matrix::Zero(static_cast<Eigen::Index>(h) * w, classes);
  for (double s : scales) {
    if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("multi_scale_infer: scales must be positive");
    const int sh = scaled_size(h, s, p), sw = scaled_size(w, s, p);
    const Image input = sh == h && sw == w ? image : resize_bilinear(image, sh, sw);
    const Matrix prob = softmax_probabilities(infer_logits(backbone, decoder, input).logits);
    if (sh == h && sw == w) {
      sum += prob;
    } else {
      // resize_bilinear works on channel planes (channels x pixels).
      const Matrix planes = prob.transpose();
      sum += resize_bilinear(planes, sh, sw, h, w).transpose();
    }
  }
  MultiScaleResult out;
  out.probabilities = sum / static_cast<double>(scales.size());
  out.labels = argmax_labels(out.probabilities, h, w);
  return out;
}

}  // namespace wsseg
