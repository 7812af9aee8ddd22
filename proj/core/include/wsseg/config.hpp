#pragma once

#include "wsseg/backbone.hpp"
#include "wsseg/camgen.hpp"
#include "wsseg/decoder.hpp"
#include "wsseg/rfm.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace wsseg {

enum class TrainMode { kWeak, kFull };
enum class LrSchedule { kConstant, kPoly };

/// Every knob of a run. Defaults are the full-scale PASCAL VOC settings.
struct TrainConfig {
  TrainMode mode = TrainMode::kWeak;
  int batch_size = 4;
  int max_iters = 30000;
  double learning_rate = 2e-3;
  double weight_decay = 1e-3;
  int crop_size = 320;
  double lambda = 0.1;
  bool hflip = true;
  LrSchedule lr_schedule = LrSchedule::kConstant;
  int warmup_iters = 0;
  // Pixels whose best refined score is below this are ignored by the segmentation loss (0 = off).
  double confidence_threshold = 0.0;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // 0 = final checkpoint only

  int decoder_width = 256;
  int decoder_depth = 3;
  int decoder_heads = 8;
  int ffn_expansion = 2;
  int layer_start = 1;
  bool positional = false;

  CamConfig cam;
  rfm::RefineConfig refine;  // eligible_start = 6, alpha = 2, box 0.4, PAR defaults

  std::vector<double> scales{0.75, 1.0};

  BackboneConfig backbone;
  bool separable = false;
  double separable_noise = 0.0;
  bool indicator_attention = false;

  std::string vocabulary = "voc";  // fallback class names: voc | coco
  std::filesystem::path data_root;
  std::string train_split = "train";
  std::string val_split = "val";

  /// Batch 8 / 80k iterations; everything else unchanged.
  static TrainConfig coco_defaults();

  /// Parses `key = value` lines (`#` starts a comment). Unknown keys are rejected.
  /// Keys not in the text keep their value from `base`.
  static TrainConfig from_text(std::string_view text, TrainConfig base);
  static TrainConfig from_text(std::string_view text);
  static TrainConfig from_file(const std::filesystem::path& path, TrainConfig base);
  static TrainConfig from_file(const std::filesystem::path& path);

  /// Sets one field from its textual form.
  void set(const std::string& key, const std::string& value);
  /// Applies `key=value` overrides in order.
  void apply_overrides(const std::vector<std::string>& assignments);

  /// Every field, one `key = value` line each, in a fixed order; parsing the
  /// result reproduces this config exactly.
  std::string to_text() const;
  std::map<std::string, std::string> to_map() const;

  void validate() const;

  DecoderConfig decoder_config(int num_classes) const;
  ClassVocabulary default_vocabulary() const;
};

/// Shortest decimal form that parses back to the same double.
std::string format_double(double value);

}  // namespace wsseg
