#include "cli.hpp"

#include "wsseg/archive.hpp"
#include "wsseg/camgen.hpp"
#include "wsseg/config.hpp"
#include "wsseg/dataset.hpp"
#include "wsseg/image.hpp"
#include "wsseg/inference.hpp"
#include "wsseg/metrics.hpp"
#include "wsseg/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

namespace wsseg::cli {
namespace fs = std::filesystem;

namespace {

constexpr const char* kSnapshotName = "config.resolved.cfg";

// Flags shared by every command that needs a TrainConfig.
struct ConfigFlags {
  std::string config_path;
  std::string preset = "voc";
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string data_root;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "Run config file (key = value lines)");
    app->add_option("--preset", preset, "Defaults to start from")->check(CLI::IsMember({"voc", "coco"}));
    app->add_option("--set", overrides, "Override a config key (key=value); repeatable");
    app->add_option("--seed", seed, "Decoder / data-order seed");
    app->add_option("--data-root", data_root, "Dataset root");
  }

  TrainConfig resolve(const std::vector<std::string>& extra = {}) const {
    TrainConfig base = preset == "coco" ? TrainConfig::coco_defaults() : TrainConfig{};
    TrainConfig c = config_path.empty() ? base : TrainConfig::from_file(config_path, base);
    c.apply_overrides(extra);
    if (seed) c.seed = *seed;
    if (!data_root.empty()) c.data_root = data_root;
    c.apply_overrides(overrides);
    c.validate();
    return c;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void write_snapshot(const fs::path& dir, const TrainConfig& config) {
  fs::create_directories(dir);
  write_text(dir / kSnapshotName, config.to_text());
}

DatasetManifest load_split(const TrainConfig& config, const std::string& split, DatasetMode mode) {
  if (config.data_root.empty()) throw ConfigError("no dataset root given (--data-root or data_root)");
  if (!fs::exists(config.data_root)) throw DataError("dataset root " + config.data_root.string() + " does not exist");
  return load_dataset(config.data_root, split, mode, config.default_vocabulary());
}

std::string palette_json(const ClassVocabulary& vocabulary) {
  nlohmann::json classes = nlohmann::json::array();
  for (int c = 0; c < vocabulary.num_classes(); ++c) {
    const auto rgb = palette_color(c);
    classes.push_back({{"index", c}, {"name", vocabulary.class_name(c)}, {"color", {rgb[0], rgb[1], rgb[2]}}});
  }
  nlohmann::json doc;
  doc["ordering"] = "pixel value = index; 255 = ignore";
  doc["classes"] = classes;
  return doc.dump(2) + "\n";
}

std::vector<int> parse_class_names(const std::string& list, const ClassVocabulary& vocabulary) {
  std::vector<int> out;
  std::stringstream in(list);
  std::string name;
  while (std::getline(in, name, ',')) {
    if (name.empty()) continue;
    bool found = false;
    for (int c = 1; c < vocabulary.num_classes(); ++c) {
      if (vocabulary.class_name(c) == name) {
        out.push_back(c);
        found = true;
        break;
      }
    }
    if (!found) throw DataError("unknown class '" + name + "'");
  }
  return out;
}

// Snaps an image to a patch-divisible size (no-op when it already is).
Image patch_aligned(const Image& image, int patch) {
  const int h = scaled_size(image.height, 1.0, patch), w = scaled_size(image.width, 1.0, patch);
  return h == image.height && w == image.width ? image : resize_bilinear(image, h, w);
}

int cmd_train(ConfigFlags& flags, const std::string& mode, const std::string& out_dir, std::ostream& out) {
  std::vector<std::string> extra;
  if (!mode.empty()) extra.push_back("mode=" + mode);
  const TrainConfig config = flags.resolve(extra);
  const DatasetMode dmode = config.mode == TrainMode::kWeak ? DatasetMode::kWeak : DatasetMode::kFull;
  const DatasetManifest data = load_split(config, config.train_split, dmode);
  write_snapshot(out_dir, config);
  const Backbone backbone = make_backbone(config, data.vocabulary);
  const TrainResult result = train(config, backbone, data, fs::path(out_dir));
  out << "trained " << result.log.size() << " steps on " << data.records.size() << " images\n";
  if (!result.log.empty()) out << "final\t" << format_log_line(static_cast<int>(result.log.size()) - 1, result.log.back()) << "\n";
  out << "checkpoint\t" << (fs::path(out_dir) / "checkpoint_final.wsa").string() << "\n";
  return kOk;
}

struct InferFlags {
  std::string run_dir;
  std::string checkpoint;
  std::string split;
  std::vector<std::string> ids;
  std::vector<double> scales;
  std::string out_dir;
};

int cmd_infer(ConfigFlags& flags, const InferFlags& f, std::ostream& out) {
  if (!f.run_dir.empty() && flags.config_path.empty()) flags.config_path = (fs::path(f.run_dir) / kSnapshotName).string();
  TrainConfig config = flags.resolve();
  if (!f.scales.empty()) config.scales = f.scales;
  config.validate();
  const fs::path ckpt = !f.checkpoint.empty() ? fs::path(f.checkpoint)
                        : !f.run_dir.empty()  ? fs::path(f.run_dir) / "checkpoint_final.wsa"
                                              : fs::path();
  if (ckpt.empty()) throw ConfigError("infer needs --checkpoint or --run");
  if (!fs::exists(ckpt)) throw DataError("checkpoint " + ckpt.string() + " does not exist");

  const DatasetManifest data = load_split(config, f.split.empty() ? config.val_split : f.split, DatasetMode::kAny);
  std::vector<const SampleRecord*> records;
  if (f.ids.empty()) {
    for (const auto& r : data.records) records.push_back(&r);
  } else {
    for (const auto& id : f.ids) records.push_back(&data.find(id));
  }

  const Backbone backbone = make_backbone(config, data.vocabulary);
  Decoder decoder(config.decoder_config(data.num_classes()));
  decoder.load_state(TensorArchive::load(ckpt));

  write_snapshot(f.out_dir, config);
  write_text(fs::path(f.out_dir) / "palette.json", palette_json(data.vocabulary));
  for (const SampleRecord* r : records) {
    const MultiScaleResult pred = multi_scale_infer(backbone, decoder, load_image(r->image_path), config.scales);
    save_label_image(pred.labels, fs::path(f.out_dir) / (r->id + ".png"));
  }
  out << "wrote " << records.size() << " predictions to " << f.out_dir << "\n";
  return kOk;
}

int cmd_eval(ConfigFlags& flags, const std::string& split, const std::string& pred_dir, const std::string& out_dir,
             std::ostream& out) {
  const TrainConfig config = flags.resolve();
  const DatasetManifest data = load_split(config, split.empty() ? config.val_split : split, DatasetMode::kFull);
  ConfusionMatrix cm(data.num_classes());
  for (const auto& r : data.records) {
    const fs::path p = fs::path(pred_dir) / (r.id + ".png");
    if (!fs::exists(p)) throw DataError("missing prediction " + p.string());
    cm.add(load_label_image(*r.mask_path), load_label_image(p));
  }
  std::vector<std::string> names;
  for (int c = 0; c < data.num_classes(); ++c) names.push_back(data.vocabulary.class_name(c));
  const std::string report = format_miou_report(miou(cm), names);
  out << report;
  if (!out_dir.empty()) {
    write_snapshot(out_dir, config);
    write_text(fs::path(out_dir) / "eval_report.tsv", report);
  }
  return kOk;
}

struct CamFlags {
  std::string id;
  std::string split;
  std::string image;
  std::string classes;
  std::string checkpoint;
  bool refined = false;
  std::string out_dir;
};

int cmd_make_cam(ConfigFlags& flags, const CamFlags& f, std::ostream& out) {
  const TrainConfig config = flags.resolve();
  Image image;
  std::vector<int> present;
  ClassVocabulary vocab = config.default_vocabulary();
  if (!f.id.empty()) {
    const DatasetManifest data = load_split(config, f.split.empty() ? config.train_split : f.split, DatasetMode::kAny);
    const SampleRecord& r = data.find(f.id);
    vocab = data.vocabulary;
    image = load_image(r.image_path);
    present = r.labels;
  } else if (!f.image.empty()) {
    if (!config.data_root.empty() && fs::exists(config.data_root / "class_names.txt")) {
      vocab = load_dataset(config.data_root, config.train_split, DatasetMode::kAny, vocab).vocabulary;
    }
    image = load_image(f.image);
  } else {
    throw ConfigError("make-cam needs --id or --image");
  }
  if (!f.classes.empty()) present = parse_class_names(f.classes, vocab);
  if (present.empty()) throw DataError("make-cam needs at least one present class (--classes)");

  const Backbone backbone = make_backbone(config, vocab);
  image = patch_aligned(image, backbone.config().patch_size);
  const EncodedImage enc = backbone.encode_image(image);

  TensorArchive archive;
  auto put_grid = [&](const std::string& name, const RowVector& row, int h, int w) {
    archive.put(name, Matrix(Eigen::Map<const Matrix>(row.data(), h, w)));
  };
  auto channel_name = [&](int class_id) {
    return class_id == 0 ? std::string(kBackgroundChannelName) : vocab.class_name(class_id);
  };

  const CamStack cam = make_initial_cam(backbone, enc, vocab, present, config.cam);
  for (int c = 1; c < cam.channels(); ++c) put_grid("cam/" + channel_name(cam.class_ids[c]), cam.maps.row(c), cam.height, cam.width);
  put_grid("cam/" + std::string(kBackgroundChannelName), cam.maps.row(0), cam.height, cam.width);

  fs::create_directories(f.out_dir);
  if (f.refined) {
    Decoder decoder(config.decoder_config(vocab.num_classes()));
    if (!f.checkpoint.empty()) decoder.load_state(TensorArchive::load(f.checkpoint));
    const Matrix fused = decoder.forward(enc, image.height, image.width).fused;
    const PseudoLabels pl = compute_pseudo_labels(backbone, enc, image, fused, vocab, present, config);
    const CamStack& refined = pl.refined.refined;
    for (int c = 0; c < refined.channels(); ++c) {
      put_grid("refined/" + channel_name(refined.class_ids[c]), refined.maps.row(c), refined.height, refined.width);
    }
    const LabelMap& labels = pl.refined.labels;
    Matrix label_grid(labels.height, labels.width);
    for (int y = 0; y < labels.height; ++y)
      for (int x = 0; x < labels.width; ++x) label_grid(y, x) = labels.at(y, x);
    archive.put("pseudo_label", label_grid);
    save_label_image(resize_nearest(labels, image.height, image.width), fs::path(f.out_dir) / "pseudo_label.png");
    write_text(fs::path(f.out_dir) / "palette.json", palette_json(vocab));
  }
  write_snapshot(f.out_dir, config);
  archive.save(fs::path(f.out_dir) / "cams.wsa");
  out << "wrote " << archive.size() << " maps to " << (fs::path(f.out_dir) / "cams.wsa").string() << "\n";
  return kOk;
}

int cmd_make_synth(const SyntheticOptions& options, const std::string& out_dir, std::ostream& out) {
  const DatasetManifest m = make_synthetic_dataset(out_dir, options);
  write_text(fs::path(out_dir) / "synth.cfg",
             "seed = " + std::to_string(options.seed) + "\ncount = " + std::to_string(options.count) +
                 "\nval_count = " + std::to_string(options.val_count) + "\ngrid_h = " + std::to_string(options.grid_h) +
                 "\ngrid_w = " + std::to_string(options.grid_w) + "\npatch_size = " + std::to_string(options.patch_size) +
                 "\nnum_classes = " + std::to_string(options.num_classes) + "\n");
  out << "wrote " << m.records.size() << " samples to " << out_dir << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Weakly supervised semantic segmentation toolkit"};
  app.name("wsseg");
  app.require_subcommand(1);

  ConfigFlags train_cfg, infer_cfg, eval_cfg, cam_cfg;

  auto* train_cmd = app.add_subcommand("train", "Train the decoder");
  std::string train_mode, train_out;
  train_cfg.attach(train_cmd);
  train_cmd->add_option("--mode", train_mode, "weak | full")->check(CLI::IsMember({"weak", "full"}));
  train_cmd->add_option("--out", train_out, "Output directory")->required();

  auto* infer_cmd = app.add_subcommand("infer", "Predict label maps");
  InferFlags infer_flags;
  infer_cfg.attach(infer_cmd);
  infer_cmd->add_option("--run", infer_flags.run_dir, "Training output directory (snapshot + final checkpoint)");
  infer_cmd->add_option("--checkpoint", infer_flags.checkpoint, "Decoder checkpoint");
  infer_cmd->add_option("--split", infer_flags.split, "Split to predict (default: val_split)");
  infer_cmd->add_option("--ids", infer_flags.ids, "Restrict to these ids")->delimiter(',');
  infer_cmd->add_option("--scales", infer_flags.scales, "Inference scales (default: config scales)")->delimiter(',');
  infer_cmd->add_option("--out", infer_flags.out_dir, "Output directory")->required();

  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against ground-truth masks");
  std::string eval_split, eval_pred, eval_out;
  eval_cfg.attach(eval_cmd);
  eval_cmd->add_option("--split", eval_split, "Split to score (default: val_split)");
  eval_cmd->add_option("--pred", eval_pred, "Directory of <id>.png predictions")->required();
  eval_cmd->add_option("--out", eval_out, "Write the report and config snapshot here");

  auto* cam_cmd = app.add_subcommand("make-cam", "Export initial (and refined) activation maps for one image");
  CamFlags cam_flags;
  cam_cfg.attach(cam_cmd);
  cam_cmd->add_option("--id", cam_flags.id, "Sample id in the dataset");
  cam_cmd->add_option("--split", cam_flags.split, "Split holding --id (default: train_split)");
  cam_cmd->add_option("--image", cam_flags.image, "Image file (with --classes)");
  cam_cmd->add_option("--classes", cam_flags.classes, "Comma-separated present class names");
  cam_cmd->add_option("--checkpoint", cam_flags.checkpoint, "Decoder checkpoint used for refinement");
  cam_cmd->add_flag("--refined", cam_flags.refined, "Also write refined maps and the pseudo label");
  cam_cmd->add_option("--out", cam_flags.out_dir, "Output directory")->required();

  auto* synth_cmd = app.add_subcommand("make-synth", "Generate a synthetic dataset");
  SyntheticOptions synth;
  std::string synth_out;
  int synth_grid = 0;
  synth_cmd->add_option("--seed", synth.seed, "Generator seed");
  synth_cmd->add_option("--count", synth.count, "Number of samples")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--val-count", synth.val_count, "Samples assigned to the val split");
  synth_cmd->add_option("--grid", synth_grid, "Square layout grid in patches")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--patch", synth.patch_size, "Patch size in pixels")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--classes", synth.num_classes, "Foreground classes")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--out", synth_out, "Output root")->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_cfg, train_mode, train_out, out);
    if (*infer_cmd) return cmd_infer(infer_cfg, infer_flags, out);
    if (*eval_cmd) return cmd_eval(eval_cfg, eval_split, eval_pred, eval_out, out);
    if (*cam_cmd) return cmd_make_cam(cam_cfg, cam_flags, out);
    if (*synth_cmd) {
      if (synth_grid > 0) synth.grid_h = synth.grid_w = synth_grid;
      return cmd_make_synth(synth, synth_out, out);
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumericError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const ShapeError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::out_of_range& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace wsseg::cli
