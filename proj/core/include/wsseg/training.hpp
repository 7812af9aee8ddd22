#pragma once

#include "wsseg/archive.hpp"
#include "wsseg/backbone.hpp"
#include "wsseg/config.hpp"
#include "wsseg/dataset.hpp"
#include "wsseg/decoder.hpp"
#include "wsseg/losses.hpp"
#include "wsseg/optimizer.hpp"
#include "wsseg/rfm.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace wsseg {

/// One training example after augmentation.
struct TrainSample {
  Image image;
  std::vector<int> classes;        // image-level foreground labels (weak mode)
  std::optional<LabelMap> mask;    // pixel labels (full mode)
};

/// Builds the frozen backbone a config describes. Separable mode uses `vocabulary`
/// for its palette and class embeddings.
Backbone make_backbone(const TrainConfig& config, const ClassVocabulary& vocabulary);

/// Online pseudo labels for one image: initial CAM, then refinement against the
/// decoder's fused features and the backbone's attention maps.
struct PseudoLabels {
  CamStack initial;
  rfm::PseudoLabelResult refined;
};
PseudoLabels compute_pseudo_labels(const Backbone& backbone, const EncodedImage& encoded, const Image& image,
                                   const Matrix& fused, const ClassVocabulary& vocabulary,
                                   const std::vector<int>& classes, const TrainConfig& config);

/// Random crop to `crop_size` (zero / ignore padding when smaller) and optional horizontal flip.
TrainSample augment(const TrainSample& sample, int crop_size, bool hflip, std::mt19937_64& rng);

/// Owns the decoder and optimizer; the backbone is borrowed read-only.
class Trainer {
 public:
  Trainer(const TrainConfig& config, const Backbone& backbone, ClassVocabulary vocabulary);

  /// One optimizer update on an already-augmented batch. Pseudo labels are
  /// recomputed from the current decoder; they and the affinity target carry
  /// no gradient.
  LossBreakdown train_step(std::span<const TrainSample> batch);

  /// Learning rate used for update number `step` (0-based).
  double learning_rate_at(int step) const;

  Decoder& decoder() { return decoder_; }
  const Decoder& decoder() const { return decoder_; }
  const AdamW& optimizer() const { return optimizer_; }
  const TrainConfig& config() const { return config_; }
  int steps_taken() const { return step_; }

 private:
  TrainConfig config_;
  const Backbone& backbone_;
  ClassVocabulary vocabulary_;
  Decoder decoder_;
  AdamW optimizer_;
  int step_ = 0;
};

/// `step\tseg\taff\ttotal`, shortest round-trip decimals.
std::string format_log_line(int step, const LossBreakdown& loss);

struct TrainResult {
  std::vector<LossBreakdown> log;
  TensorArchive checkpoint;  // final decoder state
};

/// Runs `config.max_iters` steps over the manifest (shuffled each epoch with the
/// config seed). When `out_dir` is given, writes `train_log.tsv`, periodic
/// `checkpoint_<step>.wsa` files and `checkpoint_final.wsa` there.
TrainResult train(const TrainConfig& config, const Backbone& backbone, const DatasetManifest& dataset,
                  const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                  const std::function<void(int, const LossBreakdown&)>& on_step = {});

/// `train` with the mode forced to full supervision: ground-truth masks replace
/// pseudo labels, and neither the text path nor refinement runs.
TrainResult train_fully_supervised(TrainConfig config, const Backbone& backbone, const DatasetManifest& dataset,
                                   const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                                   const std::function<void(int, const LossBreakdown&)>& on_step = {});

}  // namespace wsseg
