#include "wsseg/optimizer.hpp"

#include <cmath>

namespace wsseg {

AdamW::AdamW(nn::ParameterRegistry& registry, Options options) : params_(registry.all()), options_(options) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void AdamW::step(double learning_rate) {
  ++t_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    nn::Parameter& p = *params_[i];
    if (!p.grad.allFinite()) throw NumericError("non-finite gradient for " + p.name);
    p.value *= 1.0 - learning_rate * options_.weight_decay;
    m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * p.grad;
    v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= learning_rate * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + options_.eps);
  }
}

TensorArchive AdamW::state() const {
  TensorArchive a;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    a.put("adamw/m/" + params_[i]->name, m_[i]);
    a.put("adamw/v/" + params_[i]->name, v_[i]);
  }
  Matrix t(1, 1);
  t(0, 0) = static_cast<double>(t_);
  a.put("adamw/step", t);
  return a;
}

void AdamW::load_state(const TensorArchive& archive) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i] = archive.matrix("adamw/m/" + params_[i]->name);
    v_[i] = archive.matrix("adamw/v/" + params_[i]->name);
  }
  t_ = static_cast<long long>(archive.matrix("adamw/step")(0, 0));
}

}  // namespace wsseg
