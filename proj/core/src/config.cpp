#include "wsseg/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

namespace wsseg {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as " + expected);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) bad_value(key, v, "a number");
  return out;
}

long long parse_integer(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) bad_value(key, v, "an integer");
  return out;
}

int parse_int(const std::string& key, const std::string& v) {
  const long long x = parse_integer(key, v);
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) bad_value(key, v, "an int");
  return static_cast<int>(x);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) bad_value(key, v, "an unsigned integer");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T, class F>
std::string join(const std::vector<T>& xs, F fmt) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += fmt(xs[i]);
  }
  return out;
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

struct Field {
  const char* key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

#define WSSEG_INT_FIELD(name, member)                                                                 \
  Field {                                                                                             \
    name, [](const TrainConfig& c) { return std::to_string(c.member); },                              \
        [](TrainConfig& c, const std::string& v) { c.member = parse_int(name, v); }                   \
  }
#define WSSEG_DOUBLE_FIELD(name, member)                                                              \
  Field {                                                                                             \
    name, [](const TrainConfig& c) { return format_double(c.member); },                               \
        [](TrainConfig& c, const std::string& v) { c.member = parse_double(name, v); }                \
  }
#define WSSEG_BOOL_FIELD(name, member)                                                                \
  Field {                                                                                             \
    name, [](const TrainConfig& c) { return fmt_bool(c.member); },                                    \
        [](TrainConfig& c, const std::string& v) { c.member = parse_bool(name, v); }                  \
  }
#define WSSEG_STRING_FIELD(name, member)                                                              \
  Field {                                                                                             \
    name, [](const TrainConfig& c) { return std::string(c.member); },                                 \
        [](TrainConfig& c, const std::string& v) { c.member = v; }                                    \
  }
#define WSSEG_U64_FIELD(name, member)                                                                 \
  Field {                                                                                             \
    name, [](const TrainConfig& c) { return std::to_string(c.member); },                              \
        [](TrainConfig& c, const std::string& v) { c.member = parse_u64(name, v); }                   \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"mode", [](const TrainConfig& c) { return std::string(c.mode == TrainMode::kWeak ? "weak" : "full"); },
            [](TrainConfig& c, const std::string& v) {
              if (v == "weak") c.mode = TrainMode::kWeak;
              else if (v == "full") c.mode = TrainMode::kFull;
              else bad_value("mode", v, "weak|full");
            }},
      WSSEG_INT_FIELD("batch_size", batch_size),
      WSSEG_INT_FIELD("max_iters", max_iters),
      WSSEG_DOUBLE_FIELD("learning_rate", learning_rate),
      WSSEG_DOUBLE_FIELD("weight_decay", weight_decay),
      WSSEG_INT_FIELD("crop_size", crop_size),
      WSSEG_DOUBLE_FIELD("lambda", lambda),
      WSSEG_BOOL_FIELD("hflip", hflip),
      Field{"lr_schedule",
            [](const TrainConfig& c) {
              return std::string(c.lr_schedule == LrSchedule::kConstant ? "constant" : "poly");
            },
            [](TrainConfig& c, const std::string& v) {
              if (v == "constant") c.lr_schedule = LrSchedule::kConstant;
              else if (v == "poly") c.lr_schedule = LrSchedule::kPoly;
              else bad_value("lr_schedule", v, "constant|poly");
            }},
      WSSEG_INT_FIELD("warmup_iters", warmup_iters),
      WSSEG_DOUBLE_FIELD("confidence_threshold", confidence_threshold),
      WSSEG_U64_FIELD("seed", seed),
      WSSEG_INT_FIELD("checkpoint_every", checkpoint_every),
      WSSEG_INT_FIELD("decoder_width", decoder_width),
      WSSEG_INT_FIELD("decoder_depth", decoder_depth),
      WSSEG_INT_FIELD("decoder_heads", decoder_heads),
      WSSEG_INT_FIELD("ffn_expansion", ffn_expansion),
      WSSEG_INT_FIELD("layer_start", layer_start),
      WSSEG_BOOL_FIELD("positional", positional),
      WSSEG_DOUBLE_FIELD("temperature", cam.temperature),
      Field{"background_mode",
            [](const TrainConfig& c) {
              return std::string(c.cam.background_mode == BackgroundMode::kComplement ? "complement" : "prompts");
            },
            [](TrainConfig& c, const std::string& v) {
              if (v == "complement") c.cam.background_mode = BackgroundMode::kComplement;
              else if (v == "prompts") c.cam.background_mode = BackgroundMode::kPrompts;
              else bad_value("background_mode", v, "complement|prompts");
            }},
      WSSEG_INT_FIELD("eligible_start", refine.eligible_start),
      WSSEG_INT_FIELD("alpha", refine.alpha),
      Field{"alpha_mode",
            [](const TrainConfig& c) {
              return std::string(c.refine.alpha_mode == rfm::AlphaMode::kMatrix ? "matrix" : "elementwise");
            },
            [](TrainConfig& c, const std::string& v) {
              if (v == "matrix") c.refine.alpha_mode = rfm::AlphaMode::kMatrix;
              else if (v == "elementwise") c.refine.alpha_mode = rfm::AlphaMode::kElementwise;
              else bad_value("alpha_mode", v, "matrix|elementwise");
            }},
      WSSEG_DOUBLE_FIELD("box_threshold", refine.box_threshold),
      WSSEG_DOUBLE_FIELD("sinkhorn_tolerance", refine.sinkhorn.tolerance),
      WSSEG_INT_FIELD("sinkhorn_iters", refine.sinkhorn.max_iterations),
      WSSEG_BOOL_FIELD("use_par", refine.use_par),
      WSSEG_INT_FIELD("par_iters", refine.par.iterations),
      WSSEG_DOUBLE_FIELD("par_sigma", refine.par.sigma_rgb),
      Field{"par_dilations",
            [](const TrainConfig& c) {
              return join(c.refine.par.dilations, [](int d) { return std::to_string(d); });
            },
            [](TrainConfig& c, const std::string& v) {
              c.refine.par.dilations.clear();
              for (const auto& s : split_list(v)) c.refine.par.dilations.push_back(parse_int("par_dilations", s));
            }},
      Field{"scales", [](const TrainConfig& c) { return join(c.scales, format_double); },
            [](TrainConfig& c, const std::string& v) {
              c.scales.clear();
              for (const auto& s : split_list(v)) c.scales.push_back(parse_double("scales", s));
            }},
      Field{"backbone",
            [](const TrainConfig& c) {
              return std::string(c.backbone.source == BackboneConfig::Source::kSynthetic ? "synthetic"
                                                                                          : "pretrained");
            },
            [](TrainConfig& c, const std::string& v) {
              if (v == "synthetic") c.backbone.source = BackboneConfig::Source::kSynthetic;
              else if (v == "pretrained") c.backbone.source = BackboneConfig::Source::kPretrained;
              else bad_value("backbone", v, "synthetic|pretrained");
            }},
      Field{"backbone_path", [](const TrainConfig& c) { return c.backbone.archive_path.string(); },
            [](TrainConfig& c, const std::string& v) { c.backbone.archive_path = v; }},
      WSSEG_U64_FIELD("backbone_seed", backbone.seed),
      WSSEG_INT_FIELD("backbone_blocks", backbone.num_blocks),
      WSSEG_INT_FIELD("backbone_dim", backbone.token_dim),
      WSSEG_INT_FIELD("patch_size", backbone.patch_size),
      WSSEG_INT_FIELD("backbone_grid_h", backbone.grid_h),
      WSSEG_INT_FIELD("backbone_grid_w", backbone.grid_w),
      WSSEG_INT_FIELD("backbone_heads", backbone.num_heads),
      WSSEG_INT_FIELD("text_dim", backbone.text_dim),
      WSSEG_INT_FIELD("mlp_ratio", backbone.mlp_ratio),
      WSSEG_BOOL_FIELD("separable", separable),
      WSSEG_DOUBLE_FIELD("separable_noise", separable_noise),
      WSSEG_BOOL_FIELD("indicator_attention", indicator_attention),
      WSSEG_STRING_FIELD("vocabulary", vocabulary),
      Field{"data_root", [](const TrainConfig& c) { return c.data_root.string(); },
            [](TrainConfig& c, const std::string& v) { c.data_root = v; }},
      WSSEG_STRING_FIELD("train_split", train_split),
      WSSEG_STRING_FIELD("val_split", val_split),
  };
  return table;
}

#undef WSSEG_INT_FIELD
#undef WSSEG_DOUBLE_FIELD
#undef WSSEG_BOOL_FIELD
#undef WSSEG_STRING_FIELD
#undef WSSEG_U64_FIELD

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

TrainConfig TrainConfig::coco_defaults() {
  TrainConfig c;
  c.batch_size = 8;
  c.max_iters = 80000;
  c.vocabulary = "coco";
  return c;
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(*this, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

TrainConfig TrainConfig::from_text(std::string_view text, TrainConfig base) {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    base.set(key, value);
  }
  return base;
}

TrainConfig TrainConfig::from_text(std::string_view text) { return from_text(text, TrainConfig{}); }

TrainConfig TrainConfig::from_file(const std::filesystem::path& path) { return from_file(path, TrainConfig{}); }

TrainConfig TrainConfig::from_file(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str(), std::move(base));
}

void TrainConfig::apply_overrides(const std::vector<std::string>& assignments) {
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + a + "' is not key=value");
    set(trim(std::string_view(a).substr(0, eq)), trim(std::string_view(a).substr(eq + 1)));
  }
}

std::string TrainConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(*this) + "\n";
  return out;
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  std::map<std::string, std::string> out;
  for (const auto& f : fields()) out[f.key] = f.get(*this);
  return out;
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(batch_size >= 1, "batch_size must be >= 1");
  require(max_iters >= 0, "max_iters must be >= 0");
  require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning_rate must be positive");
  require(weight_decay >= 0.0 && std::isfinite(weight_decay), "weight_decay must be >= 0");
  require(crop_size >= backbone.patch_size && crop_size % backbone.patch_size == 0,
          "crop_size must be a positive multiple of patch_size");
  require(lambda >= 0.0 && std::isfinite(lambda), "lambda must be >= 0");
  require(warmup_iters >= 0, "warmup_iters must be >= 0");
  require(confidence_threshold >= 0.0 && confidence_threshold <= 1.0, "confidence_threshold must lie in [0, 1]");
  require(checkpoint_every >= 0, "checkpoint_every must be >= 0");
  require(cam.temperature > 0.0, "temperature must be positive");
  require(refine.eligible_start >= 1 && refine.eligible_start <= backbone.num_blocks,
          "eligible_start must lie in [1, backbone_blocks]");
  require(refine.alpha >= 1, "alpha must be >= 1");
  require(refine.box_threshold >= 0.0 && refine.box_threshold <= 1.0, "box_threshold must lie in [0, 1]");
  require(refine.sinkhorn.max_iterations >= 0, "sinkhorn_iters must be >= 0");
  require(refine.sinkhorn.tolerance > 0.0, "sinkhorn_tolerance must be positive");
  require(refine.par.iterations >= 0, "par_iters must be >= 0");
  require(refine.par.sigma_rgb > 0.0, "par_sigma must be positive");
  for (int d : refine.par.dilations) require(d >= 1, "par_dilations must be positive");
  require(!scales.empty(), "scales must not be empty");
  for (double s : scales) require(s > 0.0 && std::isfinite(s), "scales must be positive");
  require(separable_noise >= 0.0, "separable_noise must be >= 0");
  require(vocabulary == "voc" || vocabulary == "coco", "vocabulary must be voc or coco");
  backbone.validate();
  decoder_config(2).validate();
}

DecoderConfig TrainConfig::decoder_config(int num_classes) const {
  DecoderConfig d;
  d.input_dim = backbone.token_dim;
  d.num_blocks = backbone.num_blocks;
  d.hidden = decoder_width;
  d.depth = decoder_depth;
  d.heads = decoder_heads;
  d.ffn_expansion = ffn_expansion;
  d.num_classes = num_classes;
  d.layer_start = layer_start;
  d.positional = positional;
  d.seed = seed;
  return d;
}

ClassVocabulary TrainConfig::default_vocabulary() const {
  return vocabulary == "coco" ? ClassVocabulary::coco() : ClassVocabulary::pascal_voc();
}

}  // namespace wsseg
