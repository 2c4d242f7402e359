#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "vab/rng.hpp"
#include "vab/tensor.hpp"

namespace vab::test {

inline Tensor random_tensor(Shape shape, Rng& rng, double stddev = 1.0, bool grad = true) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal(0.0, stddev);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

// Largest |analytic − numeric| / max(|analytic|, |numeric|, floor) over every
// element of every leaf, with central differences of step h.
inline double max_grad_rel_error(const std::function<Tensor()>& f, std::vector<Tensor> leaves, double h = 1e-5,
                                 double floor = 1e-6) {
  for (auto& l : leaves) l.zero_grad();
  f().backward();
  std::vector<std::vector<double>> analytic;
  for (auto& l : leaves) {
    if (l.has_grad()) analytic.emplace_back(l.grad().begin(), l.grad().end());
    else analytic.emplace_back(l.numel(), 0.0);
  }
  double worst = 0.0;
  NoGradGuard ng;
  for (std::size_t p = 0; p < leaves.size(); ++p) {
    auto data = leaves[p].mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + h;
      const double up = f().item();
      data[i] = orig - h;
      const double down = f().item();
      data[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[p][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace vab::test
