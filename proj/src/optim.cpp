#include "vab/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace vab {

double lr_at(std::int64_t step, const AdamWConfig& cfg) {
  if (step < 0 || step > cfg.total_steps) return 0.0;
  if (step < cfg.warmup_steps) {
    return cfg.base_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  }
  const std::int64_t decay_len = cfg.total_steps - cfg.warmup_steps;
  if (decay_len <= 0) return cfg.base_lr;
  const double progress = static_cast<double>(step - cfg.warmup_steps) / static_cast<double>(decay_len);
  return cfg.base_lr * std::cos(0.5 * std::numbers::pi * progress);
}

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  if (cfg_.total_steps < 1 || cfg_.warmup_steps < 0 || cfg_.warmup_steps > cfg_.total_steps) {
    throw std::invalid_argument("adamw: need 0 <= warmup_steps <= total_steps and total_steps >= 1");
  }
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

double AdamW::step() {
  const double lr = lr_at(std::min(t_ + 1, cfg_.total_steps), cfg_);
  step_with_lr(lr);
  return lr;
}

void AdamW::step_with_lr(double lr) {
  double sq_norm = 0.0;
  for (const auto& p : params_) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) {
      if (!std::isfinite(g)) throw std::domain_error("adamw: non-finite gradient, step rejected");
      sq_norm += g * g;
    }
  }
  double clip = 1.0;
  if (cfg_.max_grad_norm > 0.0) {
    const double norm = std::sqrt(sq_norm);
    if (norm > cfg_.max_grad_norm) clip = cfg_.max_grad_norm / norm;
  }

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    auto w = p.mutable_data();
    const bool has = p.has_grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double g = has ? p.grad()[j] * clip : 0.0;
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
      w[j] *= 1.0 - lr * cfg_.weight_decay;
      w[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg_.eps);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace vab
