#include "wsseg/training.hpp"

#include "wsseg/camgen.hpp"
#include "wsseg/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace wsseg {
namespace fs = std::filesystem;

Backbone make_backbone(const TrainConfig& config, const ClassVocabulary& vocabulary) {
  if (config.backbone.source == BackboneConfig::Source::kPretrained) {
    if (config.backbone.archive_path.empty()) throw ConfigError("backbone = pretrained needs backbone_path");
    return Backbone::from_file(config.backbone.archive_path, config.backbone);
  }
  std::optional<SeparableSpec> spec;
  if (config.separable) spec = SeparableSpec{vocabulary, config.separable_noise, config.indicator_attention};
  return Backbone::synthetic(config.backbone, config.backbone.seed, spec);
}

PseudoLabels compute_pseudo_labels(const Backbone& backbone, const EncodedImage& encoded, const Image& image,
                                   const Matrix& fused, const ClassVocabulary& vocabulary,
                                   const std::vector<int>& classes, const TrainConfig& config) {
  PseudoLabels out;
  out.initial = make_initial_cam(backbone, encoded, vocabulary, classes, config.cam);
  const Image grid_image = patch_average(image, backbone.config().patch_size);
  out.refined = rfm::refine_pseudo_labels(out.initial, fused, encoded.attentions, grid_image, config.refine);
  return out;
}

TrainSample augment(const TrainSample& sample, int crop_size, bool hflip, std::mt19937_64& rng) {
  const int h = sample.image.height, w = sample.image.width;
  const int top = h > crop_size ? std::uniform_int_distribution<int>(0, h - crop_size)(rng) : 0;
  const int left = w > crop_size ? std::uniform_int_distribution<int>(0, w - crop_size)(rng) : 0;
  const bool flip = hflip && std::bernoulli_distribution(0.5)(rng);

  TrainSample out;
  out.classes = sample.classes;
  out.image = crop(sample.image, top, left, crop_size, crop_size);
  if (sample.mask) out.mask = crop(*sample.mask, top, left, crop_size, crop_size, kIgnoreLabel);
  if (flip) {
    out.image = flip_horizontal(out.image);
    if (out.mask) out.mask = flip_horizontal(*out.mask);
  }
  return out;
}

Trainer::Trainer(const TrainConfig& config, const Backbone& backbone, ClassVocabulary vocabulary)
    : config_(config),
      backbone_(backbone),
      vocabulary_(std::move(vocabulary)),
      decoder_(config.decoder_config(vocabulary_.num_classes())),
      optimizer_(decoder_.parameters(), AdamW::Options{config.learning_rate, config.weight_decay}) {
  config_.validate();
  if (backbone.config().token_dim != config.backbone.token_dim ||
      backbone.config().num_blocks != config.backbone.num_blocks) {
    throw ConfigError("backbone does not match the configured width/depth");
  }
}

double Trainer::learning_rate_at(int step) const {
  double lr = config_.learning_rate;
  if (config_.warmup_iters > 0 && step < config_.warmup_iters) {
    lr *= static_cast<double>(step + 1) / config_.warmup_iters;
  }
  if (config_.lr_schedule == LrSchedule::kPoly && config_.max_iters > 0) {
    const double progress = std::min(1.0, static_cast<double>(step) / config_.max_iters);
    lr *= std::pow(1.0 - progress, 0.9);
  }
  return lr;
}

LossBreakdown Trainer::train_step(std::span<const TrainSample> batch) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  const bool weak = config_.mode == TrainMode::kWeak;

  struct Item {
    DecoderTrace trace;
    Matrix grad_logits;  // d(CE sum)/d(logits)
    Matrix grad_fused;   // d(aff mean)/d(F_u), weak mode only
  };
  std::vector<Item> items(batch.size());
  double ce_sum = 0.0;
  std::size_t ce_count = 0;
  double aff_sum = 0.0;

  for (std::size_t b = 0; b < batch.size(); ++b) {
    const TrainSample& s = batch[b];
    Item& it = items[b];
    const EncodedImage enc = backbone_.encode_image(s.image);
    const DecoderOutput out = decoder_.forward(enc, s.image.height, s.image.width, &it.trace);

    LabelMap target;
    if (weak) {
      if (s.classes.empty()) throw DataError("weak training sample without image-level labels");
      const PseudoLabels pl = compute_pseudo_labels(backbone_, enc, s.image, out.fused, vocabulary_, s.classes, config_);
      LabelMap grid_labels = pl.refined.labels;

      const Matrix affinity_target = affinity_label(grid_labels, vocabulary_.num_classes());
      Matrix grad_z;
      aff_sum += affinity_loss(pl.refined.affinity, affinity_target, &grad_z);
      it.grad_fused = (grad_z + grad_z.transpose()) * out.fused;

      if (config_.confidence_threshold > 0.0) {
        const Matrix& scores = pl.refined.final_scores;
        for (Eigen::Index t = 0; t < scores.cols(); ++t) {
          if (scores.col(t).maxCoeff() < config_.confidence_threshold) {
            grid_labels.labels[static_cast<std::size_t>(t)] = kIgnoreLabel;
          }
        }
      }
      target = resize_nearest(grid_labels, s.image.height, s.image.width);
    } else {
      if (!s.mask) throw DataError("fully supervised training sample without a mask");
      target = *s.mask;
    }
    const CrossEntropySum ce = cross_entropy_sum(out.prediction.logits, target.labels, &it.grad_logits);
    ce_sum += ce.sum;
    ce_count += ce.count;
  }

  const double seg = ce_count == 0 ? 0.0 : ce_sum / static_cast<double>(ce_count);
  const double aff = weak ? aff_sum / static_cast<double>(batch.size()) : 0.0;
  const LossBreakdown loss = total_loss(seg, aff, config_.lambda);

  decoder_.parameters().zero_grad();
  const double seg_scale = ce_count == 0 ? 0.0 : 1.0 / static_cast<double>(ce_count);
  const double aff_scale = config_.lambda / static_cast<double>(batch.size());
  for (Item& it : items) {
    it.grad_logits *= seg_scale;
    if (weak) {
      it.grad_fused *= aff_scale;
      decoder_.backward(it.trace, it.grad_logits, &it.grad_fused);
    } else {
      decoder_.backward(it.trace, it.grad_logits);
    }
  }
  optimizer_.step(learning_rate_at(step_));
  ++step_;
  return loss;
}

std::string format_log_line(int step, const LossBreakdown& loss) {
  return std::to_string(step) + "\t" + format_double(loss.seg_loss) + "\t" + format_double(loss.aff_loss) + "\t" +
         format_double(loss.total);
}

namespace {

TrainSample load_sample(const SampleRecord& r, bool need_mask) {
  TrainSample s;
  s.image = load_image(r.image_path);
  s.classes = r.labels;
  if (need_mask) {
    if (!r.mask_path) throw DataError("sample '" + r.id + "' has no mask");
    s.mask = load_label_image(*r.mask_path);
    if (s.mask->height != s.image.height || s.mask->width != s.image.width) {
      throw DataError("mask for '" + r.id + "' does not match its image size");
    }
  }
  return s;
}

}  // namespace

TrainResult train(const TrainConfig& config, const Backbone& backbone, const DatasetManifest& dataset,
                  const std::optional<fs::path>& out_dir, const std::function<void(int, const LossBreakdown&)>& on_step) {
  config.validate();
  if (dataset.records.empty()) throw DataError("dataset split '" + dataset.split + "' has no records");
  const bool full = config.mode == TrainMode::kFull;

  Trainer trainer(config, backbone, dataset.vocabulary);
  std::ofstream log;
  if (out_dir) {
    fs::create_directories(*out_dir);
    log.open(*out_dir / "train_log.tsv", std::ios::binary);
    if (!log) throw DataError("cannot write " + (*out_dir / "train_log.tsv").string());
  }

  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(dataset.records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();

  TrainResult result;
  result.log.reserve(static_cast<std::size_t>(config.max_iters));
  std::vector<TrainSample> batch;
  for (int step = 0; step < config.max_iters; ++step) {
    batch.clear();
    for (int b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const SampleRecord& r = dataset.records[order[cursor++]];
      batch.push_back(augment(load_sample(r, full), config.crop_size, config.hflip, rng));
    }
    const LossBreakdown loss = trainer.train_step(batch);
    result.log.push_back(loss);
    if (log) log << format_log_line(step, loss) << '\n' << std::flush;
    if (on_step) on_step(step, loss);
    if (out_dir && config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0) {
      trainer.decoder().state().save(*out_dir / ("checkpoint_" + std::to_string(step + 1) + ".wsa"));
    }
  }
  result.checkpoint = trainer.decoder().state();
  if (out_dir) result.checkpoint.save(*out_dir / "checkpoint_final.wsa");
  return result;
}

TrainResult train_fully_supervised(TrainConfig config, const Backbone& backbone, const DatasetManifest& dataset,
                                   const std::optional<fs::path>& out_dir,
                                   const std::function<void(int, const LossBreakdown&)>& on_step) {
  config.mode = TrainMode::kFull;
  return train(config, backbone, dataset, out_dir, on_step);
}

}  // namespace wsseg
