#include "wsseg/nn.hpp"

#include <cmath>

namespace wsseg::nn {

Parameter& ParameterRegistry::add(std::string name, Matrix init) {
  if (contains(name)) throw std::logic_error("parameter registered twice: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->grad = Matrix::Zero(init.rows(), init.cols());
  p->value = std::move(init);
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParameterRegistry::at(const std::string& name) {
  for (auto& p : params_) {
    if (p->name == name) return *p;
  }
  throw std::out_of_range("no parameter named " + name);
}

const Parameter& ParameterRegistry::at(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return *p;
  }
  throw std::out_of_range("no parameter named " + name);
}

bool ParameterRegistry::contains(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return true;
  }
  return false;
}

std::vector<Parameter*> ParameterRegistry::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterRegistry::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

void ParameterRegistry::zero_grad() {
  for (auto& p : params_) p->grad.setZero();
}

std::size_t ParameterRegistry::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

TensorArchive ParameterRegistry::to_archive() const {
  TensorArchive a;
  for (const auto& p : params_) a.put(p->name, p->value);
  return a;
}

void ParameterRegistry::load_archive(const TensorArchive& archive) {
  for (auto& p : params_) {
    Matrix m = archive.matrix(p->name);
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols()) {
      throw ShapeError("checkpoint tensor '" + p->name + "' has shape " + std::to_string(m.rows()) + "x" +
                       std::to_string(m.cols()) + ", expected " + std::to_string(p->value.rows()) + "x" +
                       std::to_string(p->value.cols()));
    }
    p->value = std::move(m);
  }
}

Matrix fan_in_uniform(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Linear::Linear(ParameterRegistry& registry, const std::string& name, int in, int out, std::mt19937_64& rng) {
  weight_ = &registry.add(name + "/weight", fan_in_uniform(rng, out, in, in));
  bias_ = &registry.add(name + "/bias", fan_in_uniform(rng, 1, out, in));
}

Matrix Linear::forward(const Matrix& x) const {
  Matrix y = x * weight_->value.transpose();
  y.rowwise() += bias_->value.row(0);
  return y;
}

Matrix Linear::backward(const Matrix& x, const Matrix& grad_out) const {
  weight_->grad.noalias() += grad_out.transpose() * x;
  bias_->grad += grad_out.colwise().sum();
  return grad_out * weight_->value;
}

LayerNorm::LayerNorm(ParameterRegistry& registry, const std::string& name, int dim) {
  weight_ = &registry.add(name + "/weight", Matrix::Ones(1, dim));
  bias_ = &registry.add(name + "/bias", Matrix::Zero(1, dim));
}

Matrix LayerNorm::forward(const Matrix& x, Cache* cache) const {
  Matrix xhat(x.rows(), x.cols());
  Vector inv_std(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + kEps);
    xhat.row(i) = (x.row(i).array() - mean) * inv_std(i);
  }
  Matrix y = xhat.array().rowwise() * weight_->value.row(0).array();
  y.rowwise() += bias_->value.row(0);
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Matrix LayerNorm::backward(const Cache& cache, const Matrix& grad_out) const {
  const Matrix& xhat = cache.normalized;
  weight_->grad += grad_out.cwiseProduct(xhat).colwise().sum();
  bias_->grad += grad_out.colwise().sum();
  const Matrix dxhat = grad_out.array().rowwise() * weight_->value.row(0).array();
  Matrix dx(grad_out.rows(), grad_out.cols());
  for (Eigen::Index i = 0; i < dx.rows(); ++i) {
    const double mean_d = dxhat.row(i).mean();
    const double mean_dx = dxhat.row(i).dot(xhat.row(i)) / static_cast<double>(xhat.cols());
    dx.row(i) = cache.inv_std(i) * (dxhat.row(i).array() - mean_d - xhat.row(i).array() * mean_dx);
  }
  return dx;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    p.row(i) = (logits.row(i).array() - logits.row(i).maxCoeff()).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

MultiHeadAttention::MultiHeadAttention(ParameterRegistry& registry, const std::string& name, int dim, int heads,
                                       std::mt19937_64& rng)
    : dim_(dim), heads_(heads) {
  if (heads <= 0 || dim % heads != 0) {
    throw ConfigError("attention width " + std::to_string(dim) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  q_ = Linear(registry, name + "/q", dim, dim, rng);
  k_ = Linear(registry, name + "/k", dim, dim, rng);
  v_ = Linear(registry, name + "/v", dim, dim, rng);
  out_ = Linear(registry, name + "/out", dim, dim, rng);
}

Matrix MultiHeadAttention::forward(const Matrix& x, Cache* cache) const {
  const Eigen::Index dh = dim_ / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix q = q_.forward(x);
  Matrix k = k_.forward(x);
  Matrix v = v_.forward(x);
  Matrix context(x.rows(), dim_);
  std::vector<Matrix> probs;
  if (cache) probs.reserve(static_cast<std::size_t>(heads_));
  for (int h = 0; h < heads_; ++h) {
    Matrix p = softmax_rows((q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose()) * scale);
    context.middleCols(h * dh, dh).noalias() = p * v.middleCols(h * dh, dh);
    if (cache) probs.push_back(std::move(p));
  }
  Matrix y = out_.forward(context);
  if (cache) {
    cache->input = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
    cache->context = std::move(context);
  }
  return y;
}

Matrix MultiHeadAttention::backward(const Cache& cache, const Matrix& grad_out) const {
  const Eigen::Index dh = dim_ / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Matrix dcontext = out_.backward(cache.context, grad_out);
  Matrix dq(cache.q.rows(), dim_), dk(cache.k.rows(), dim_), dv(cache.v.rows(), dim_);
  for (int h = 0; h < heads_; ++h) {
    const Matrix& p = cache.probs[static_cast<std::size_t>(h)];
    const auto dctx = dcontext.middleCols(h * dh, dh);
    const Matrix dp = dctx * cache.v.middleCols(h * dh, dh).transpose();
    dv.middleCols(h * dh, dh).noalias() = p.transpose() * dctx;
    // softmax backward: ds = p * (dp - rowsum(dp * p))
    const Vector inner = dp.cwiseProduct(p).rowwise().sum();
    const Matrix ds = (p.array() * (dp.colwise() - inner).array()).matrix() * scale;
    dq.middleCols(h * dh, dh).noalias() = ds * cache.k.middleCols(h * dh, dh);
    dk.middleCols(h * dh, dh).noalias() = ds.transpose() * cache.q.middleCols(h * dh, dh);
  }
  Matrix dx = q_.backward(cache.input, dq);
  dx += k_.backward(cache.input, dk);
  dx += v_.backward(cache.input, dv);
  return dx;
}

TransformerLayer::TransformerLayer(ParameterRegistry& registry, const std::string& name, int dim, int heads,
                                   int ffn_dim, std::mt19937_64& rng) {
  ln1_ = LayerNorm(registry, name + "/ln1", dim);
  attn_ = MultiHeadAttention(registry, name + "/attn", dim, heads, rng);
  ln2_ = LayerNorm(registry, name + "/ln2", dim);
  fc1_ = Linear(registry, name + "/ffn/fc1", dim, ffn_dim, rng);
  fc2_ = Linear(registry, name + "/ffn/fc2", ffn_dim, dim, rng);
}

Matrix TransformerLayer::forward(const Matrix& x, Cache* cache) const {
  LayerNorm::Cache ln1, ln2;
  MultiHeadAttention::Cache attn;
  Matrix mid = x + attn_.forward(ln1_.forward(x, cache ? &ln1 : nullptr), cache ? &attn : nullptr);
  Matrix ln2_out = ln2_.forward(mid, cache ? &ln2 : nullptr);
  Matrix hidden_pre = fc1_.forward(ln2_out);
  Matrix hidden = hidden_pre.cwiseMax(0.0);
  Matrix y = mid + fc2_.forward(hidden);
  if (cache) {
    cache->input = x;
    cache->ln1 = std::move(ln1);
    cache->attn = std::move(attn);
    cache->mid = std::move(mid);
    cache->ln2 = std::move(ln2);
    cache->ln2_out = std::move(ln2_out);
    cache->hidden_pre = std::move(hidden_pre);
    cache->hidden = std::move(hidden);
  }
  return y;
}

Matrix TransformerLayer::backward(const Cache& cache, const Matrix& grad_out) const {
  Matrix dhidden = fc2_.backward(cache.hidden, grad_out);
  dhidden = (cache.hidden_pre.array() > 0.0).select(dhidden.array(), 0.0).matrix();
  const Matrix dln2 = fc1_.backward(cache.ln2_out, dhidden);
  const Matrix dmid = grad_out + ln2_.backward(cache.ln2, dln2);
  const Matrix dln1 = attn_.backward(cache.attn, dmid);
  return dmid + ln1_.backward(cache.ln1, dln1);
}

}  // namespace wsseg::nn
