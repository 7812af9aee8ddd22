#pragma once

#include "wsseg/backbone.hpp"
#include "wsseg/decoder.hpp"
#include "wsseg/types.hpp"

#include <span>

namespace wsseg {

/// Row-wise softmax of (pixels x classes) logits.
Matrix softmax_probabilities(const Matrix& logits);

/// Per-pixel argmax; ties go to the lowest class index.
LabelMap argmax_labels(const Matrix& scores, int height, int width);

/// Input side length used for `scale`: round(size * scale) snapped to the nearest
/// positive multiple of the patch size.
int scaled_size(int size, double scale, int patch_size);

/// Single forward pass at the image's own size (which must be divisible by the patch size).
SegPrediction infer_logits(const Backbone& backbone, const Decoder& decoder, const Image& image);

struct MultiScaleResult {
  Matrix probabilities;  // (H * W) x classes, averaged over scales
  LabelMap labels;
};

/// For each scale: bilinear resize, forward, softmax, bilinear resize of the
/// probabilities back to (H, W). Probabilities are averaged, then argmaxed.
MultiScaleResult multi_scale_infer(const Backbone& backbone, const Decoder& decoder, const Image& image,
                                   std::span<const double> scales);

}  // namespace wsseg
