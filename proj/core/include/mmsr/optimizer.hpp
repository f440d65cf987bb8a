#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace mmsr {

struct AdamWConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;

  void validate() const;
};

// Adam with decoupled weight decay:
//   theta <- (1 - weight_decay) * theta - lr * m_hat / (sqrt(v_hat) + eps)
// The decay factor does not scale with lr, so lr = 0 still shrinks
// parameters geometrically while ignoring gradients.
class AdamW {
 public:
  AdamW(AdamWConfig cfg, std::size_t n_params);

  void step(std::span<float> params, std::span<const float> grads);

  const AdamWConfig& config() const { return cfg_; }
  long steps() const { return t_; }
  std::span<const float> first_moment() const { return m_; }
  std::span<const float> second_moment() const { return v_; }
  void restore(long steps, std::vector<float> m, std::vector<float> v);

 private:
  AdamWConfig cfg_;
  long t_ = 0;
  std::vector<float> m_;
  std::vector<float> v_;
};

// Scales grads in place so their L2 norm is at most max_norm; returns the
// norm before clipping. max_norm <= 0 disables clipping.
double clip_grad_norm(std::span<float> grads, double max_norm);

}  // namespace mmsr
