#pragma once

#include "wsseg/types.hpp"

#include <Eigen/SparseCore>

#include <array>
#include <cstdint>
#include <filesystem>

namespace wsseg {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Reads an 8-bit RGB (or grayscale) image; values scaled to [0, 1].
Image load_image(const std::filesystem::path& path);
/// Writes an 8-bit RGB image; the format follows the file extension (png recommended).
void save_image(const Image& image, const std::filesystem::path& path);

/// Reads an 8-bit single-channel index image. Value 255 maps to kIgnoreLabel.
LabelMap load_label_image(const std::filesystem::path& path);
/// Writes labels as an 8-bit single-channel index image; kIgnoreLabel is written as 255.
void save_label_image(const LabelMap& labels, const std::filesystem::path& path);

/// Class-index colour table used for synthetic images and label previews
/// (the PASCAL VOC bit-interleaved colormap: 0 black, 1 dark red, 2 dark green, ...).
std::array<std::uint8_t, 3> palette_color(int class_index);

/// Linear operator mapping a (in_h x in_w) plane, flattened row-major, to (out_h x out_w)
/// by bilinear interpolation with half-pixel centres (no corner alignment).
SparseMatrix bilinear_operator(int in_h, int in_w, int out_h, int out_w);

/// Resizes each row of `planes` (channels x in_h*in_w).
Matrix resize_bilinear(const Matrix& planes, int in_h, int in_w, int out_h, int out_w);
Image resize_bilinear(const Image& image, int out_h, int out_w);

/// Nearest-neighbour resize: source index = floor(dst * in / out).
LabelMap resize_nearest(const LabelMap& labels, int out_h, int out_w);

/// Mean colour of each non-overlapping patch x patch block.
Image patch_average(const Image& image, int patch);

/// Crops (top, left, h, w); regions outside the source are zero-filled.
Image crop(const Image& image, int top, int left, int h, int w);
/// Crops a label map; regions outside the source get `fill`.
LabelMap crop(const LabelMap& labels, int top, int left, int h, int w, int fill);

Image flip_horizontal(const Image& image);
LabelMap flip_horizontal(const LabelMap& labels);

}  // namespace wsseg
