#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Eigenvalues>

#include "vab/linalg.hpp"
#include "vab/rng.hpp"
#include "vab/sampler.hpp"

// Independent reference computations shared by the unit tests and the
// acceptance run.
namespace vab::test {

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2 * std::numbers::pi); }
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Closed-form mean of N(mu, sigma²) truncated to [a, b].
inline double truncated_normal_mean(double mu, double sigma, double a, double b) {
  const double al = (a - mu) / sigma, be = (b - mu) / sigma;
  return mu + sigma * (normal_pdf(al) - normal_pdf(be)) / (normal_cdf(be) - normal_cdf(al));
}

inline Matrix gaussian_rows(std::size_t n, const Eigen::VectorXd& mean, const Matrix& chol, Rng& rng) {
  Matrix x(Eigen::Index(n), mean.size());
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd z(mean.size());
    for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = rng.normal(0.0, 1.0);
    x.row(Eigen::Index(i)) = (mean + chol * z).transpose();
  }
  return x;
}

// Population Fréchet distance between N(m1, S1) and N(m2, S2), with the
// matrix square roots taken from Eigen's symmetric eigensolver.
inline double population_frechet(const Eigen::VectorXd& m1, const Matrix& s1, const Eigen::VectorXd& m2, const Matrix& s2) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e1(s1);
  const Eigen::MatrixXd r1 = e1.operatorSqrt();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e2(r1 * s2 * r1);
  return (m1 - m2).squaredNorm() + (s1 + s2).trace() - 2.0 * e2.operatorSqrt().trace();
}

// Hand-parameterized single-level model over 3 timesteps and 4 tokens: each
// position's logits are a base row plus couplings to the visible tokens.
struct ToyLogits {
  static constexpr std::size_t kSteps = 3, kVocab = 4;
  static constexpr int kMask = 4;
  double base[kSteps][kVocab] = {{0.9, 0.1, -0.4, 0.3}, {-0.2, 0.7, 0.05, -0.6}, {0.35, -0.15, 0.8, 0.0}};
  double couple[kVocab][kVocab] = {
      {0.6, -0.3, 0.1, 0.0}, {-0.2, 0.8, 0.0, 0.15}, {0.05, 0.1, 0.7, -0.4}, {0.3, 0.0, -0.25, 0.55}};

  std::array<double, kVocab> row(const std::vector<int>& grid, std::size_t t) const {
    std::array<double, kVocab> r{};
    for (std::size_t v = 0; v < kVocab; ++v) {
      r[v] = base[t][v];
      for (std::size_t u = 0; u < kSteps; ++u) {
        if (u != t && grid[u] != kMask) r[v] += couple[std::size_t(grid[u])][v] / (1.0 + double(u > t ? u - t : t - u));
      }
    }
    return r;
  }
};

class ToyPredictor : public TokenPredictor {
 public:
  explicit ToyPredictor(const ToyLogits& toy) : toy_(toy) {}
  std::size_t predict_first() const override { return 0; }
  std::size_t predict_levels() const override { return 1; }
  int mask_id() const override { return ToyLogits::kMask; }
  std::vector<Matrix> predict(const TokenGrid& grid, bool) override {
    Matrix m(Eigen::Index(grid.steps), Eigen::Index(ToyLogits::kVocab));
    for (std::size_t t = 0; t < grid.steps; ++t) {
      const auto r = toy_.row(grid.tokens, t);
      for (std::size_t v = 0; v < ToyLogits::kVocab; ++v) m(Eigen::Index(t), Eigen::Index(v)) = r[v];
    }
    return {m};
  }

 private:
  const ToyLogits& toy_;
};

// Exact distribution over final grids of the decode chain with α0 = 0, s = 1.
inline std::map<std::vector<int>, double> enumerate_chain(const ToyLogits& toy, std::size_t total_steps) {
  std::map<std::vector<int>, double> out;
  const std::size_t n = ToyLogits::kSteps;
  std::function<void(std::vector<int>, std::size_t, double)> walk = [&](std::vector<int> grid, std::size_t it,
                                                                         double prob) {
    std::vector<std::size_t> masked;
    for (std::size_t t = 0; t < n; ++t) {
      if (grid[t] == ToyLogits::kMask) masked.push_back(t);
    }
    if (masked.empty()) {
      out[grid] += prob;
      return;
    }
    if (it >= total_steps) throw std::logic_error("enumerate_chain: decode did not finish");
    std::vector<std::array<double, ToyLogits::kVocab>> logp(masked.size());
    for (std::size_t i = 0; i < masked.size(); ++i) {
      const auto r = toy.row(grid, masked[i]);
      double z = 0;
      for (double x : r) z += std::exp(x);
      for (std::size_t v = 0; v < ToyLogits::kVocab; ++v) logp[i][v] = r[v] - std::log(z);
    }
    std::size_t k = 0;
    if (it + 1 < total_steps) {
      const double gamma = std::cos(std::numbers::pi / 2.0 * double(it + 1) / double(total_steps));
      k = std::min<std::size_t>(std::size_t(std::ceil(gamma * double(n) - 1e-9)), masked.size() - 1);
    }
    const std::size_t combos = std::size_t(std::pow(ToyLogits::kVocab, masked.size()));
    for (std::size_t c = 0; c < combos; ++c) {
      std::vector<int> tok(masked.size());
      std::size_t rest = c;
      double p = prob;
      for (std::size_t i = 0; i < masked.size(); ++i) {
        tok[i] = int(rest % ToyLogits::kVocab);
        rest /= ToyLogits::kVocab;
        p *= std::exp(logp[i][std::size_t(tok[i])]);
      }
      // The k lowest-confidence samples stay masked; equal scores mask the lower position.
      std::vector<bool> remask(masked.size(), false);
      for (std::size_t r = 0; r < k; ++r) {
        std::size_t worst = masked.size();
        for (std::size_t i = 0; i < masked.size(); ++i) {
          if (remask[i]) continue;
          if (worst == masked.size() || logp[i][std::size_t(tok[i])] < logp[worst][std::size_t(tok[worst])]) worst = i;
        }
        remask[worst] = true;
      }
      std::vector<int> next = grid;
      for (std::size_t i = 0; i < masked.size(); ++i) {
        if (!remask[i]) next[masked[i]] = tok[i];
      }
      walk(next, it + 1, p);
    }
  };
  walk(std::vector<int>(n, ToyLogits::kMask), 0, 1.0);
  return out;
}

// ceil(cos(π/2·(t+1)/T)·N) in long double, 0 at the last iteration.
inline std::size_t ceil_cosine(std::size_t t, std::size_t total_steps, std::size_t n) {
  if (t + 1 == total_steps) return 0;
  const long double gamma = std::cos(std::numbers::pi_v<long double> / 2.0L * (t + 1) / (long double)total_steps);
  return std::size_t(std::ceil(gamma * (long double)n));
}

}  // namespace vab::test
