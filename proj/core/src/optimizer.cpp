#include "mmsr/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace mmsr {

void AdamWConfig::validate() const {
  if (!(lr >= 0.0)) throw std::invalid_argument("AdamW: lr must be >= 0");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("AdamW: betas must lie in (0, 1)");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("AdamW: eps must be positive");
  if (!(weight_decay >= 0.0 && weight_decay < 1.0)) {
    throw std::invalid_argument("AdamW: weight_decay must lie in [0, 1)");
  }
}

AdamW::AdamW(AdamWConfig cfg, std::size_t n_params) : cfg_(cfg), m_(n_params, 0.0f), v_(n_params, 0.0f) {
  cfg_.validate();
}

void AdamW::step(std::span<float> params, std::span<const float> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw std::invalid_argument("AdamW::step: size mismatch");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const float b1 = static_cast<float>(cfg_.beta1);
  const float b2 = static_cast<float>(cfg_.beta2);
  const float lr = static_cast<float>(cfg_.lr);
  const float eps = static_cast<float>(cfg_.eps);
  const float keep = static_cast<float>(1.0 - cfg_.weight_decay);
  const float inv_bc1 = static_cast<float>(1.0 / bc1);
  const float inv_bc2 = static_cast<float>(1.0 / bc2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const float g = grads[i];
    m_[i] = b1 * m_[i] + (1.0f - b1) * g;
    v_[i] = b2 * v_[i] + (1.0f - b2) * g * g;
    const float m_hat = m_[i] * inv_bc1;
    const float v_hat = v_[i] * inv_bc2;
    params[i] = keep * params[i] - lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

void AdamW::restore(long steps, std::vector<float> m, std::vector<float> v) {
  if (m.size() != m_.size() || v.size() != v_.size()) throw std::invalid_argument("AdamW::restore: size mismatch");
  t_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

double clip_grad_norm(std::span<float> grads, double max_norm) {
  double sq = 0.0;
  for (float g : grads) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const float s = static_cast<float>(max_norm / (norm + 1e-12));
    for (auto& g : grads) g *= s;
  }
  return norm;
}

}  // namespace mmsr
