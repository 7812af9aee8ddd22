#pragma once

#include "wsseg/camgen.hpp"
#include "wsseg/types.hpp"

#include <span>
#include <vector>

// Pseudo-label refinement: a learnable affinity from decoder features selects
// among the frozen attention maps, the selected relations are Sinkhorn-normalised
// and used to propagate the initial CAM, then pixel-adaptive smoothing and argmax.
namespace wsseg::rfm {

/// sigmoid(F_u F_u^T) for fused features given as tokens (hw x m).
Matrix affinity_map(const Matrix& fused_tokens);

/// Sum of absolute differences between the affinity and one attention map.
double attention_score(const Matrix& affinity, const Matrix& attention);

struct FilterMask {
  std::vector<int> selected;  // one 0/1 entry per block
  int eligible_start = 1;     // N0, 1-based
  int num_selected = 0;       // N_m
  bool fallback = false;      // no block beat the mean; all eligible blocks kept
};

/// Keeps block l (l >= N0) iff its score is strictly below the mean score over
/// blocks [N0, N].
FilterMask attention_filter(std::span<const double> scores, int eligible_start);

/// (A_f / N_m) elementwise-times the sum of selected attention maps.
Matrix refining_map(const Matrix& affinity, const FilterMask& filter, std::span<const Matrix> attentions);

struct SinkhornOptions {
  double tolerance = 1e-3;
  // Safety cap only; the tolerance check ends typical runs within a few sweeps,
  // but near-zero entries can need ~100.
  int max_iterations = 1000;
  double eps = 1e-8;
};

/// Alternating row/column normalisation. Stops as soon as every row and column
/// sum is within `tolerance` of 1 (checked before each sweep), or after
/// `max_iterations` sweeps.
Matrix sinkhorn_normalize(Matrix m, const SinkhornOptions& options = {});

/// Largest row/column-sum deviation from 1.
double doubly_stochastic_error(const Matrix& m);

/// Inclusive axis-aligned box on the token grid.
struct BoxMask {
  int row0 = 0;
  int col0 = 0;
  int row1 = -1;
  int col1 = -1;

  bool contains(int row, int col) const { return row >= row0 && row <= row1 && col >= col0 && col <= col1; }
  bool operator==(const BoxMask&) const = default;
};

/// Bounding box of pixels with value >= threshold; the full grid when none qualify.
BoxMask class_box_mask(const RowVector& channel, int height, int width, double threshold);

enum class AlphaMode { kMatrix, kElementwise };

/// Propagates every foreground channel with ((R + R^T) / 2)^alpha, where columns
/// (sources) outside the channel's box are zeroed. Refined foreground channels are
/// re-max-normalised and the background channel recomputed as 1 - max.
/// `boxes[i]` belongs to channel i + 1.
CamStack refine_cam(const Matrix& normalized_refining, const CamStack& initial, int alpha, AlphaMode mode,
                    std::span<const BoxMask> boxes);

struct ParOptions {
  std::vector<int> dilations{1, 2, 4, 8, 12, 24};
  int iterations = 10;
  double sigma_rgb = 0.1;
};

/// Colour-guided smoothing: each iteration replaces a score by the kernel-weighted
/// mean over its 8 neighbours at every dilation (out-of-grid neighbours dropped),
/// with weights exp(-|rgb_i - rgb_j|^2 / (2 sigma^2)). `grid_image` must match the
/// score grid; `scores` is channels x (h * w).
Matrix par_refine(const Image& grid_image, const Matrix& scores, const ParOptions& options = {});

/// Per-pixel argmax over channels mapped to dataset class ids; ties go to the
/// lowest channel (background).
LabelMap to_pseudo_label(const Matrix& scores, int height, int width, const std::vector<int>& class_ids);

struct RefineConfig {
  int eligible_start = 6;
  int alpha = 2;
  AlphaMode alpha_mode = AlphaMode::kMatrix;
  double box_threshold = 0.4;
  SinkhornOptions sinkhorn;
  ParOptions par;
  bool use_par = true;
};

struct PseudoLabelResult {
  Matrix affinity;
  std::vector<double> scores;
  FilterMask filter;
  Matrix refining_normalized;
  std::vector<BoxMask> boxes;
  CamStack refined;
  Matrix final_scores;  // after PAR (or equal to refined.maps)
  LabelMap labels;      // on the token grid
};

/// Full refinement path for one image. `grid_image` is the input image averaged
/// down to the token grid.
PseudoLabelResult refine_pseudo_labels(const CamStack& initial, const Matrix& fused_tokens,
                                       std::span<const Matrix> attentions, const Image& grid_image,
                                       const RefineConfig& config);

}  // namespace wsseg::rfm
