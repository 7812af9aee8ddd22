#include "wsseg/backbone.hpp"

#include "wsseg/image.hpp"

#include <Eigen/QR>

#include <cmath>
#include <limits>
#include <random>

namespace wsseg {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

Matrix gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

void layer_norm_rows(Matrix& x, const RowVector& w, const RowVector& b) {
  constexpr double kEps = 1e-5;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    auto row = x.row(i);
    const double mean = row.mean();
    const double var = (row.array() - mean).square().mean();
    row = ((row.array() - mean) / std::sqrt(var + kEps)).matrix();
    row = row.cwiseProduct(w) + b;
  }
}

Matrix layer_norm(const Matrix& x, const RowVector& w, const RowVector& b) {
  Matrix y = x;
  layer_norm_rows(y, w, b);
  return y;
}

void gelu_inplace(Matrix& x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2 / pi)
  x = x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::tanh(kC * (v + 0.044715 * v * v * v))); });
}

void softmax_rows(Matrix& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    auto row = s.row(i);
    row = (row.array() - row.maxCoeff()).exp().matrix();
    row /= row.sum();
  }
}

RowVector row_of(const TensorArchive& a, const std::string& name, Eigen::Index expected) {
  Matrix m = a.matrix(name);
  if (m.rows() != 1 || m.cols() != expected) {
    throw ShapeError("backbone tensor '" + name + "' has shape " + std::to_string(m.rows()) + "x" +
                     std::to_string(m.cols()) + ", expected 1x" + std::to_string(expected));
  }
  return m.row(0);
}

Matrix matrix_of(const TensorArchive& a, const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  Matrix m = a.matrix(name);
  if (m.rows() != rows || m.cols() != cols) {
    throw ShapeError("backbone tensor '" + name + "' has shape " + std::to_string(m.rows()) + "x" +
                     std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  return m;
}

std::string block_prefix(int l) { return "backbone/block" + std::to_string(l) + "/"; }

}  // namespace

void BackboneConfig::validate() const {
  if (num_blocks < 1 || token_dim < 1 || patch_size < 1 || grid_h < 1 || grid_w < 1 || num_heads < 1 ||
      text_dim < 1 || mlp_ratio < 1) {
    throw ConfigError("backbone dimensions must be positive");
  }
  if (token_dim % num_heads != 0) {
    throw ConfigError("backbone token_dim " + std::to_string(token_dim) + " is not divisible by num_heads " +
                      std::to_string(num_heads));
  }
  for (double s : pixel_std) {
    if (!(s > 0.0)) throw ConfigError("pixel_std entries must be positive");
  }
}

Backbone::Backbone(BackboneConfig config, TensorArchive weights)
    : config_(std::move(config)), weights_(std::move(weights)) {
  config_.validate();
  unpack();
}

Backbone Backbone::synthetic(const BackboneConfig& config, std::uint64_t seed, std::optional<SeparableSpec> separable) {
  config.validate();
  BackboneConfig cfg = config;
  cfg.source = BackboneConfig::Source::kSynthetic;
  cfg.seed = seed;

  const Eigen::Index d = cfg.token_dim;
  const Eigen::Index patch_in = 3LL * cfg.patch_size * cfg.patch_size;
  const Eigen::Index tokens = 1LL + static_cast<Eigen::Index>(cfg.grid_h) * cfg.grid_w;
  const Eigen::Index hidden = static_cast<Eigen::Index>(cfg.mlp_ratio) * d;
  std::mt19937_64 rng(splitmix64(seed));

  TensorArchive w;
  w.put("backbone/patch_embed/weight", gaussian(rng, d, patch_in, 1.0 / std::sqrt(static_cast<double>(patch_in))));
  w.put("backbone/patch_embed/bias", Matrix::Zero(1, d));
  w.put("backbone/cls_token", gaussian(rng, 1, d, 0.02));
  w.put("backbone/pos_embed", gaussian(rng, tokens, d, 0.02));
  w.put("backbone/ln_pre/weight", Matrix::Ones(1, d));
  w.put("backbone/ln_pre/bias", Matrix::Zero(1, d));
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  for (int l = 1; l <= cfg.num_blocks; ++l) {
    const std::string p = block_prefix(l);
    w.put(p + "ln1/weight", Matrix::Ones(1, d));
    w.put(p + "ln1/bias", Matrix::Zero(1, d));
    w.put(p + "attn/qkv/weight", gaussian(rng, 3 * d, d, inv_sqrt_d));
    w.put(p + "attn/qkv/bias", Matrix::Zero(1, 3 * d));
    w.put(p + "attn/proj/weight", gaussian(rng, d, d, inv_sqrt_d));
    w.put(p + "attn/proj/bias", Matrix::Zero(1, d));
    w.put(p + "ln2/weight", Matrix::Ones(1, d));
    w.put(p + "ln2/bias", Matrix::Zero(1, d));
    w.put(p + "mlp/fc1/weight", gaussian(rng, hidden, d, inv_sqrt_d));
    w.put(p + "mlp/fc1/bias", Matrix::Zero(1, hidden));
    w.put(p + "mlp/fc2/weight", gaussian(rng, d, hidden, 1.0 / std::sqrt(static_cast<double>(hidden))));
    w.put(p + "mlp/fc2/bias", Matrix::Zero(1, d));
  }
  w.put("backbone/proj", gaussian(rng, d, cfg.text_dim, inv_sqrt_d));

  if (separable) {
    separable->vocabulary.validate();
    Backbone text_only(cfg, w);
    const Matrix proj = text_only.proj_;
    const ClassVocabulary& vocab = separable->vocabulary;
    const int classes = vocab.num_classes();

    Matrix targets(classes, cfg.text_dim);
    RowVector bg = RowVector::Zero(cfg.text_dim);
    for (const auto& name : vocab.background_names) bg += text_only.synthetic_text_embedding(make_prompt(vocab, name));
    if (vocab.background_names.empty() || bg.norm() == 0.0) {
      bg = text_only.synthetic_text_embedding("__background__");
    }
    targets.row(0) = bg.normalized();
    for (int c = 1; c < classes; ++c) {
      targets.row(c) = text_only.synthetic_text_embedding(make_prompt(vocab, vocab.class_name(c)));
    }
    // Least-squares inverse of the projection: embed * proj ~= target.
    const Matrix pinv = proj.completeOrthogonalDecomposition().pseudoInverse();
    Matrix embed = targets * pinv;
    for (Eigen::Index c = 0; c < embed.rows(); ++c) {
      const double n = embed.row(c).norm();
      if (n > 0.0) embed.row(c) *= std::sqrt(static_cast<double>(d)) / n;
    }
    Matrix palette(classes, 3);
    for (int c = 0; c < classes; ++c) {
      const auto rgb = palette_color(c);
      for (int ch = 0; ch < 3; ++ch) palette(c, ch) = rgb[static_cast<std::size_t>(ch)] / 255.0;
    }
    w.put("separable/class_embed", embed);
    w.put("separable/palette", palette);
    Matrix options(1, 2);
    options << separable->noise_sigma, separable->indicator_attention ? 1.0 : 0.0;
    w.put("separable/options", options);
  }
  return Backbone(cfg, std::move(w));
}

Backbone Backbone::from_archive(const TensorArchive& archive, const BackboneConfig& config) {
  return Backbone(config, archive);
}

Backbone Backbone::from_file(const std::filesystem::path& path, const BackboneConfig& config) {
  BackboneConfig cfg = config;
  cfg.archive_path = path;
  return Backbone(cfg, TensorArchive::load(path));
}

void Backbone::unpack() {
  const TensorArchive& a = weights_;
  const Eigen::Index d = config_.token_dim;
  const Eigen::Index patch_in = 3LL * config_.patch_size * config_.patch_size;
  const Eigen::Index hidden = static_cast<Eigen::Index>(config_.mlp_ratio) * d;

  patch_w_ = matrix_of(a, "backbone/patch_embed/weight", d, patch_in);
  patch_b_ = row_of(a, "backbone/patch_embed/bias", d);
  cls_token_ = row_of(a, "backbone/cls_token", d);
  pos_embed_ = matrix_of(a, "backbone/pos_embed", 1LL + static_cast<Eigen::Index>(config_.grid_h) * config_.grid_w, d);
  ln_pre_w_ = row_of(a, "backbone/ln_pre/weight", d);
  ln_pre_b_ = row_of(a, "backbone/ln_pre/bias", d);
  blocks_.clear();
  for (int l = 1; l <= config_.num_blocks; ++l) {
    const std::string p = block_prefix(l);
    Block b;
    b.ln1_w = row_of(a, p + "ln1/weight", d);
    b.ln1_b = row_of(a, p + "ln1/bias", d);
    b.qkv_w = matrix_of(a, p + "attn/qkv/weight", 3 * d, d);
    b.qkv_b = row_of(a, p + "attn/qkv/bias", 3 * d);
    b.proj_w = matrix_of(a, p + "attn/proj/weight", d, d);
    b.proj_b = row_of(a, p + "attn/proj/bias", d);
    b.ln2_w = row_of(a, p + "ln2/weight", d);
    b.ln2_b = row_of(a, p + "ln2/bias", d);
    b.fc1_w = matrix_of(a, p + "mlp/fc1/weight", hidden, d);
    b.fc1_b = row_of(a, p + "mlp/fc1/bias", hidden);
    b.fc2_w = matrix_of(a, p + "mlp/fc2/weight", d, hidden);
    b.fc2_b = row_of(a, p + "mlp/fc2/bias", d);
    blocks_.push_back(std::move(b));
  }
  if (a.contains("backbone/ln_post/weight")) {
    ln_post_ = std::make_pair(row_of(a, "backbone/ln_post/weight", d), row_of(a, "backbone/ln_post/bias", d));
  }
  proj_ = matrix_of(a, "backbone/proj", d, config_.text_dim);

  synthetic_text_ = config_.source == BackboneConfig::Source::kSynthetic;

  if (a.contains("separable/class_embed")) {
    SeparableState s;
    s.class_embed = a.matrix("separable/class_embed");
    s.palette = a.matrix("separable/palette");
    const Matrix options = a.matrix("separable/options");
    if (s.class_embed.cols() != d || s.palette.rows() != s.class_embed.rows() || s.palette.cols() != 3 ||
        options.size() != 2) {
      throw ShapeError("malformed separable backbone tensors");
    }
    s.noise_sigma = options(0, 0);
    s.indicator_attention = options(0, 1) != 0.0;
    separable_ = std::move(s);
  }
}

Matrix Backbone::positional_embedding(int gh, int gw) const {
  if (gh == config_.grid_h && gw == config_.grid_w) return pos_embed_;
  const Eigen::Index d = config_.token_dim;
  Matrix spatial_t = pos_embed_.bottomRows(pos_embed_.rows() - 1).transpose();  // d x (gh0*gw0)
  Matrix resized = resize_bilinear(spatial_t, config_.grid_h, config_.grid_w, gh, gw);
  Matrix out(1LL + static_cast<Eigen::Index>(gh) * gw, d);
  out.row(0) = pos_embed_.row(0);
  out.bottomRows(out.rows() - 1) = resized.transpose();
  return out;
}

Matrix Backbone::separable_noise(int gh, int gw) const {
  const Eigen::Index tokens = static_cast<Eigen::Index>(gh) * gw;
  if (!separable_ || separable_->noise_sigma == 0.0) return Matrix::Zero(tokens, config_.token_dim);
  std::mt19937_64 rng(splitmix64(config_.seed ^ splitmix64((static_cast<std::uint64_t>(gh) << 32) | gw)));
  return gaussian(rng, tokens, config_.token_dim, separable_->noise_sigma);
}

LabelMap Backbone::token_layout(const Image& image) const {
  if (!separable_) throw std::logic_error("token_layout requires a separable backbone");
  const Image means = patch_average(image, config_.patch_size);
  LabelMap layout(means.height, means.width);
  const Matrix& palette = separable_->palette;
  for (int y = 0; y < means.height; ++y) {
    for (int x = 0; x < means.width; ++x) {
      int best = 0;
      double best_dist = std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < palette.rows(); ++c) {
        double dist = 0.0;
        for (int ch = 0; ch < 3; ++ch) {
          const double diff = means.at(ch, y, x) - palette(c, ch);
          dist += diff * diff;
        }
        if (dist < best_dist) {
          best_dist = dist;
          best = static_cast<int>(c);
        }
      }
      layout.at(y, x) = best;
    }
  }
  return layout;
}

EncodedImage Backbone::encode_image(const Image& image) const {
  const int p = config_.patch_size;
  if (image.height <= 0 || image.width <= 0 || image.height % p != 0 || image.width % p != 0) {
    throw ShapeError("image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                     " is not divisible by patch size " + std::to_string(p));
  }
  for (double v : image.data) {
    if (!std::isfinite(v)) throw std::invalid_argument("image contains non-finite pixel values");
  }
  const int gh = image.height / p;
  const int gw = image.width / p;
  const Eigen::Index tokens = static_cast<Eigen::Index>(gh) * gw;
  const Eigen::Index d = config_.token_dim;
  const int heads = config_.num_heads;
  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix patches(tokens, 3LL * p * p);
  for (int gy = 0; gy < gh; ++gy) {
    for (int gx = 0; gx < gw; ++gx) {
      const Eigen::Index t = static_cast<Eigen::Index>(gy) * gw + gx;
      Eigen::Index k = 0;
      for (int c = 0; c < 3; ++c) {
        const double mean = config_.pixel_mean[static_cast<std::size_t>(c)];
        const double inv_std = 1.0 / config_.pixel_std[static_cast<std::size_t>(c)];
        for (int y = 0; y < p; ++y) {
          for (int x = 0; x < p; ++x) patches(t, k++) = (image.at(c, gy * p + y, gx * p + x) - mean) * inv_std;
        }
      }
    }
  }

  Matrix x(tokens + 1, d);
  x.row(0) = cls_token_;
  x.bottomRows(tokens) = (patches * patch_w_.transpose()).rowwise() + patch_b_;
  x += positional_embedding(gh, gw);
  layer_norm_rows(x, ln_pre_w_, ln_pre_b_);

  EncodedImage out;
  out.grid_h = gh;
  out.grid_w = gw;
  out.features.reserve(blocks_.size());
  out.attentions.reserve(blocks_.size());

  for (const Block& b : blocks_) {
    const Matrix h = layer_norm(x, b.ln1_w, b.ln1_b);
    const Matrix qkv = (h * b.qkv_w.transpose()).rowwise() + b.qkv_b;
    Matrix attn_out(tokens + 1, d);
    Matrix attn_mean = Matrix::Zero(tokens + 1, tokens + 1);
    for (int head = 0; head < heads; ++head) {
      const auto q = qkv.middleCols(head * dh, dh);
      const auto k = qkv.middleCols(d + head * dh, dh);
      const auto v = qkv.middleCols(2 * d + head * dh, dh);
      Matrix s = (q * k.transpose()) * scale;
      softmax_rows(s);
      attn_out.middleCols(head * dh, dh) = s * v;
      attn_mean += s;
    }
    x += (attn_out * b.proj_w.transpose()).rowwise() + b.proj_b;
    Matrix m = (layer_norm(x, b.ln2_w, b.ln2_b) * b.fc1_w.transpose()).rowwise() + b.fc1_b;
    gelu_inplace(m);
    x += (m * b.fc2_w.transpose()).rowwise() + b.fc2_b;

    Matrix a = attn_mean.bottomRightCorner(tokens, tokens) / static_cast<double>(heads);
    for (Eigen::Index i = 0; i < a.rows(); ++i) a.row(i) /= a.row(i).sum();
    out.features.push_back(x.bottomRows(tokens));
    out.attentions.push_back(std::move(a));
  }

  if (separable_) {
    const LabelMap layout = token_layout(image);
    Matrix last = separable_noise(gh, gw);
    for (Eigen::Index t = 0; t < tokens; ++t) last.row(t) += separable_->class_embed.row(layout.labels[static_cast<std::size_t>(t)]);
    out.features.back() = std::move(last);
    if (separable_->indicator_attention) {
      Matrix indicator(tokens, tokens);
      for (Eigen::Index i = 0; i < tokens; ++i) {
        for (Eigen::Index j = 0; j < tokens; ++j) {
          indicator(i, j) = layout.labels[static_cast<std::size_t>(i)] == layout.labels[static_cast<std::size_t>(j)];
        }
        indicator.row(i) /= indicator.row(i).sum();
      }
      for (auto& a : out.attentions) a = indicator;
    }
  }

  Matrix last = out.features.back();
  if (ln_post_) layer_norm_rows(last, ln_post_->first, ln_post_->second);
  out.image_tokens = last * proj_;
  out.pooled = out.image_tokens.colwise().mean();
  return out;
}

std::vector<EncodedImage> Backbone::encode_images(std::span<const Image> images) const {
  std::vector<EncodedImage> out;
  out.reserve(images.size());
  for (const Image& im : images) out.push_back(encode_image(im));
  return out;
}

RowVector Backbone::synthetic_text_embedding(const std::string& prompt) const {
  std::mt19937_64 rng(splitmix64(fnv1a(prompt) ^ splitmix64(config_.seed + 0x7E47ull)));
  std::normal_distribution<double> dist(0.0, 1.0);
  RowVector v(config_.text_dim);
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = dist(rng);
  return v.normalized();
}

Matrix Backbone::encode_text(std::span<const std::string> prompts) const {
  if (prompts.empty()) throw std::invalid_argument("encode_text needs at least one prompt");
  Matrix out(static_cast<Eigen::Index>(prompts.size()), config_.text_dim);
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const std::string key = "text/" + prompts[i];
    if (weights_.contains(key)) {
      out.row(static_cast<Eigen::Index>(i)) = row_of(weights_, key, config_.text_dim);
    } else if (synthetic_text_) {
      out.row(static_cast<Eigen::Index>(i)) = synthetic_text_embedding(prompts[i]);
    } else {
      throw DataError("pretrained backbone has no text embedding for prompt '" + prompts[i] + "'");
    }
  }
  return out;
}

}  // namespace wsseg
