#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vab/tensor.hpp"

namespace vab {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 1e-5;
  double base_lr = 2e-4;
  std::int64_t warmup_steps = 0;
  std::int64_t total_steps = 1;
  double max_grad_norm = 0.0;  // 0 disables clipping
};

// Linear warmup to base_lr, then half-cycle cosine decay to 0 at total_steps.
// Steps past total_steps return 0.
double lr_at(std::int64_t step, const AdamWConfig& cfg);

/// Decoupled-weight-decay Adam with bias correction.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig cfg);

  /// Applies one update using the parameters' accumulated gradients and the
  /// scheduled rate for the next step. Throws std::domain_error, leaving
  /// parameters and state untouched, if any gradient is non-finite.
  /// Returns the learning rate used.
  double step();
  // Same, with an explicit learning rate.
  void step_with_lr(double lr);

  void zero_grad();

  std::int64_t steps_taken() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }
  const std::vector<Tensor>& params() const { return params_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  std::vector<Tensor> params_;
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace vab
