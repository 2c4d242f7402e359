#include "vab/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace vab::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using Strided = Eigen::OuterStride<>;
using SMapMat = Eigen::Map<RowMat, 0, Strided>;
using CSMapMat = Eigen::Map<const RowMat, 0, Strided>;

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                              shape_str(b));
}

void require_2d(const char* op, const Tensor& t) {
  if (t.rank() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected a 2-D tensor, got " +
                                shape_str(t.shape()));
  }
}

bool needs(const detail::Node& self, std::size_t i) {
  return self.parents[i] && self.parents[i]->requires_grad;
}

std::vector<double>& grad_of(const detail::Node& self, std::size_t i) {
  return self.parents[i]->ensure_grad();
}

const std::vector<double>& value_of(const detail::Node& self, std::size_t i) {
  return self.parents[i]->value;
}

CMapMat cmap(const std::vector<double>& v, std::size_t r, std::size_t c) {
  return CMapMat(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

MapMat map(std::vector<double>& v, std::size_t r, std::size_t c) {
  return MapMat(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

std::size_t row_len(const Tensor& row) { return row.numel(); }

}  // namespace

double alibi_slope(std::size_t head, std::size_t heads) {
  return std::exp2(-8.0 * static_cast<double>(head + 1) / static_cast<double>(heads));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d("matmul", a);
  require_2d("matmul", b);
  if (a.cols() != b.rows()) shape_error("matmul", a.shape(), b.shape());
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n);
  map(out, m, n).noalias() = cmap(a.node().value, m, k) * cmap(b.node().value, k, n);
  return Tensor::make_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
    auto dc = cmap(self.grad, m, n);
    if (needs(self, 0)) map(grad_of(self, 0), m, k).noalias() += dc * cmap(value_of(self, 1), k, n).transpose();
    if (needs(self, 1)) map(grad_of(self, 1), k, n).noalias() += cmap(value_of(self, 0), m, k).transpose() * dc;
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_2d("matmul_nt", a);
  require_2d("matmul_nt", b);
  if (a.cols() != b.cols()) shape_error("matmul_nt", a.shape(), b.shape());
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  std::vector<double> out(m * n);
  map(out, m, n).noalias() = cmap(a.node().value, m, k) * cmap(b.node().value, n, k).transpose();
  return Tensor::make_result("matmul_nt", {m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
    auto dc = cmap(self.grad, m, n);
    if (needs(self, 0)) map(grad_of(self, 0), m, k).noalias() += dc * cmap(value_of(self, 1), n, k);
    if (needs(self, 1)) map(grad_of(self, 1), n, k).noalias() += dc.transpose() * cmap(value_of(self, 0), m, k);
  });
}

Tensor transpose(const Tensor& a) {
  require_2d("transpose", a);
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  map(out, n, m) = cmap(a.node().value, m, n).transpose();
  return Tensor::make_result("transpose", {n, m}, std::move(out), {a}, [m, n](detail::Node& self) {
    if (needs(self, 0)) map(grad_of(self, 0), m, n) += cmap(self.grad, n, m).transpose();
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_2d("linear", x);
  require_2d("linear", weight);
  if (x.cols() != weight.rows()) shape_error("linear", x.shape(), weight.shape());
  const std::size_t m = x.rows(), k = x.cols(), n = weight.cols();
  const bool has_bias = bias.defined();
  if (has_bias && row_len(bias) != n) shape_error("linear", weight.shape(), bias.shape());
  std::vector<double> out(m * n);
  auto o = map(out, m, n);
  o.noalias() = cmap(x.node().value, m, k) * cmap(weight.node().value, k, n);
  if (has_bias) o.rowwise() += cmap(bias.node().value, 1, n).row(0);
  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return Tensor::make_result("linear", {m, n}, std::move(out), std::move(inputs),
                             [m, k, n, has_bias](detail::Node& self) {
                               auto dy = cmap(self.grad, m, n);
                               if (needs(self, 0))
                                 map(grad_of(self, 0), m, k).noalias() += dy * cmap(value_of(self, 1), k, n).transpose();
                               if (needs(self, 1))
                                 map(grad_of(self, 1), k, n).noalias() += cmap(value_of(self, 0), m, k).transpose() * dy;
                               if (has_bias && needs(self, 2))
                                 map(grad_of(self, 2), 1, n) += dy.colwise().sum();
                             });
}

namespace {

template <class Fwd, class Bwd>
Tensor binary_same(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd) {
  if (a.shape() != b.shape()) shape_error(op, a.shape(), b.shape());
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  const auto& av = a.node().value;
  const auto& bv = b.node().value;
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[i]);
  return Tensor::make_result(op, a.shape(), std::move(out), {a, b}, [n, bwd](detail::Node& self) {
    bwd(self, n);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_same("add", a, b, [](double x, double y) { return x + y; }, [](detail::Node& self, std::size_t n) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (!needs(self, p)) continue;
      auto& g = grad_of(self, p);
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_same("sub", a, b, [](double x, double y) { return x - y; }, [](detail::Node& self, std::size_t n) {
    if (needs(self, 0)) {
      auto& g = grad_of(self, 0);
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i];
    }
    if (needs(self, 1)) {
      auto& g = grad_of(self, 1);
      for (std::size_t i = 0; i < n; ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_same("mul", a, b, [](double x, double y) { return x * y; }, [](detail::Node& self, std::size_t n) {
    if (needs(self, 0)) {
      auto& g = grad_of(self, 0);
      const auto& other = value_of(self, 1);
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * other[i];
    }
    if (needs(self, 1)) {
      auto& g = grad_of(self, 1);
      const auto& other = value_of(self, 0);
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * other[i];
    }
  });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  require_2d("add_row", x);
  const std::size_t m = x.rows(), n = x.cols();
  if (row_len(row) != n) shape_error("add_row", x.shape(), row.shape());
  std::vector<double> out(x.node().value);
  map(out, m, n).rowwise() += cmap(row.node().value, 1, n).row(0);
  return Tensor::make_result("add_row", {m, n}, std::move(out), {x, row}, [m, n](detail::Node& self) {
    if (needs(self, 0)) map(grad_of(self, 0), m, n) += cmap(self.grad, m, n);
    if (needs(self, 1)) map(grad_of(self, 1), 1, n) += cmap(self.grad, m, n).colwise().sum();
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.node().value);
  for (auto& v : out) v *= factor;
  const std::size_t n = out.size();
  return Tensor::make_result("scale", x.shape(), std::move(out), {x}, [n, factor](detail::Node& self) {
    if (!needs(self, 0)) return;
    auto& g = grad_of(self, 0);
    for (std::size_t i = 0; i < n; ++i) g[i] += factor * self.grad[i];
  });
}

Tensor mul_scalar(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1) shape_error("mul_scalar", x.shape(), s.shape());
  const double f = s.item();
  std::vector<double> out(x.node().value);
  for (auto& v : out) v *= f;
  const std::size_t n = out.size();
  return Tensor::make_result("mul_scalar", x.shape(), std::move(out), {x, s}, [n](detail::Node& self) {
    const double f = value_of(self, 1)[0];
    if (needs(self, 0)) {
      auto& g = grad_of(self, 0);
      for (std::size_t i = 0; i < n; ++i) g[i] += f * self.grad[i];
    }
    if (needs(self, 1)) {
      const auto& xv = value_of(self, 0);
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += self.grad[i] * xv[i];
      grad_of(self, 1)[0] += acc;
    }
  });
}

Tensor exp(const Tensor& x) {
  std::vector<double> out(x.node().value);
  for (auto& v : out) v = std::exp(v);
  const std::size_t n = out.size();
  return Tensor::make_result("exp", x.shape(), std::move(out), {x}, [n](detail::Node& self) {
    if (!needs(self, 0)) return;
    auto& g = grad_of(self, 0);
    for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * self.value[i];
  });
}

Tensor gelu(const Tensor& x) {
  const auto& xv = x.node().value;
  const std::size_t n = xv.size();
  std::vector<double> out(n);
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  for (std::size_t i = 0; i < n; ++i) out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * inv_sqrt2));
  return Tensor::make_result("gelu", x.shape(), std::move(out), {x}, [n](detail::Node& self) {
    if (!needs(self, 0)) return;
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    const auto& xv = value_of(self, 0);
    auto& g = grad_of(self, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(xv[i] * inv_sqrt2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * xv[i] * xv[i]);
      g[i] += self.grad[i] * (cdf + xv[i] * pdf);
    }
  });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.node().value) acc += v;
  const std::size_t n = x.numel();
  return Tensor::make_result("sum", {1}, {acc}, {x}, [n](detail::Node& self) {
    if (!needs(self, 0)) return;
    auto& g = grad_of(self, 0);
    for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  require_2d("softmax", x);
  if (axis > 1) throw std::invalid_argument("softmax: axis must be 0 or 1");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  const auto& xv = x.node().value;
  // Walk "lines" along the softmax axis.
  const std::size_t lines = axis == 1 ? m : n;
  const std::size_t len = axis == 1 ? n : m;
  const std::size_t stride = axis == 1 ? 1 : n;
  auto base = [&](std::size_t line) { return axis == 1 ? line * n : line; };
  for (std::size_t l = 0; l < lines; ++l) {
    const std::size_t b = base(l);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, xv[b + i * stride]);
    double z = 0.0;
    for (std::size_t i = 0; i < len; ++i) z += (out[b + i * stride] = std::exp(xv[b + i * stride] - mx));
    for (std::size_t i = 0; i < len; ++i) out[b + i * stride] /= z;
  }
  return Tensor::make_result("softmax", {m, n}, std::move(out), {x},
                             [lines, len, stride, axis, n](detail::Node& self) {
                               if (!needs(self, 0)) return;
                               auto& g = grad_of(self, 0);
                               const auto& y = self.value;
                               for (std::size_t l = 0; l < lines; ++l) {
                                 const std::size_t b = axis == 1 ? l * n : l;
                                 double dot = 0.0;
                                 for (std::size_t i = 0; i < len; ++i) dot += self.grad[b + i * stride] * y[b + i * stride];
                                 for (std::size_t i = 0; i < len; ++i) {
                                   const std::size_t j = b + i * stride;
                                   g[j] += y[j] * (self.grad[j] - dot);
                                 }
                               }
                             });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_2d("layer_norm", x);
  const std::size_t m = x.rows(), n = x.cols();
  if (row_len(gamma) != n) shape_error("layer_norm", x.shape(), gamma.shape());
  if (row_len(beta) != n) shape_error("layer_norm", x.shape(), beta.shape());
  const auto& xv = x.node().value;
  const auto& gv = gamma.node().value;
  const auto& bv = beta.node().value;
  std::vector<double> out(m * n), xhat(m * n), inv_std(m);
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = xv.data() + r * n;
    double mean = 0.0;
    for (std::size_t c = 0; c < n; ++c) mean += row[c];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      const double h = (row[c] - mean) * inv_std[r];
      xhat[r * n + c] = h;
      out[r * n + c] = gv[c] * h + bv[c];
    }
  }
  return Tensor::make_result(
      "layer_norm", {m, n}, std::move(out), {x, gamma, beta},
      [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& self) {
        const auto& gv = value_of(self, 1);
        const auto& dy = self.grad;
        if (needs(self, 0)) {
          auto& g = grad_of(self, 0);
          for (std::size_t r = 0; r < m; ++r) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t c = 0; c < n; ++c) {
              const double d = dy[r * n + c] * gv[c];
              mean_d += d;
              mean_dx += d * xhat[r * n + c];
            }
            mean_d /= static_cast<double>(n);
            mean_dx /= static_cast<double>(n);
            for (std::size_t c = 0; c < n; ++c) {
              const double d = dy[r * n + c] * gv[c];
              g[r * n + c] += inv_std[r] * (d - mean_d - xhat[r * n + c] * mean_dx);
            }
          }
        }
        if (needs(self, 1)) {
          auto& g = grad_of(self, 1);
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < n; ++c) g[c] += dy[r * n + c] * xhat[r * n + c];
        }
        if (needs(self, 2)) {
          auto& g = grad_of(self, 2);
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < n; ++c) g[c] += dy[r * n + c];
        }
      });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  require_2d("embedding", table);
  const std::size_t vocab = table.rows(), d = table.cols(), m = ids.size();
  std::vector<double> out(m * d);
  const auto& tv = table.node().value;
  for (std::size_t i = 0; i < m; ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw std::out_of_range("embedding: id " + std::to_string(ids[i]) + " outside table of shape " +
                              shape_str(table.shape()));
    }
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d, out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return Tensor::make_result("embedding", {m, d}, std::move(out), {table},
                             [d, idv = std::vector<int>(ids.begin(), ids.end())](detail::Node& self) {
                               if (!needs(self, 0)) return;
                               auto& g = grad_of(self, 0);
                               for (std::size_t i = 0; i < idv.size(); ++i) {
                                 const std::size_t off = static_cast<std::size_t>(idv[i]) * d;
                                 for (std::size_t c = 0; c < d; ++c) g[off + c] += self.grad[i * d + c];
                               }
                             });
}

Tensor mean_pool(const Tensor& x, std::size_t axis) {
  require_2d("mean_pool", x);
  if (axis > 1) throw std::invalid_argument("mean_pool: axis must be 0 or 1");
  const std::size_t m = x.rows(), n = x.cols();
  if (m == 0 || n == 0) throw std::invalid_argument("mean_pool: empty input " + shape_str(x.shape()));
  auto xm = cmap(x.node().value, m, n);
  std::vector<double> out(axis == 0 ? n : m);
  if (axis == 0) {
    map(out, 1, n) = xm.colwise().mean();
  } else {
    map(out, m, 1) = xm.rowwise().mean();
  }
  Shape shape = axis == 0 ? Shape{1, n} : Shape{m, 1};
  return Tensor::make_result("mean_pool", shape, std::move(out), {x}, [m, n, axis](detail::Node& self) {
    if (!needs(self, 0)) return;
    auto g = map(grad_of(self, 0), m, n);
    if (axis == 0) {
      g.rowwise() += cmap(self.grad, 1, n).row(0) / static_cast<double>(m);
    } else {
      g.colwise() += cmap(self.grad, m, 1).col(0) / static_cast<double>(n);
    }
  });
}

Tensor mean_pool_segments(const Tensor& x, std::size_t segment) {
  require_2d("mean_pool_segments", x);
  const std::size_t m = x.rows(), n = x.cols();
  if (segment == 0 || m % segment != 0) {
    throw std::invalid_argument("mean_pool_segments: " + std::to_string(m) +
                                " rows not divisible into segments of " + std::to_string(segment));
  }
  const std::size_t b = m / segment;
  std::vector<double> out(b * n, 0.0);
  const auto& xv = x.node().value;
  const double inv = 1.0 / static_cast<double>(segment);
  for (std::size_t s = 0; s < b; ++s)
    for (std::size_t r = 0; r < segment; ++r)
      for (std::size_t c = 0; c < n; ++c) out[s * n + c] += xv[(s * segment + r) * n + c] * inv;
  return Tensor::make_result("mean_pool_segments", {b, n}, std::move(out), {x},
                             [b, n, segment, inv](detail::Node& self) {
                               if (!needs(self, 0)) return;
                               auto& g = grad_of(self, 0);
                               for (std::size_t s = 0; s < b; ++s)
                                 for (std::size_t r = 0; r < segment; ++r)
                                   for (std::size_t c = 0; c < n; ++c)
                                     g[(s * segment + r) * n + c] += self.grad[s * n + c] * inv;
                             });
}

Tensor l2_normalize(const Tensor& x) {
  require_2d("l2_normalize", x);
  const std::size_t m = x.rows(), n = x.cols();
  const auto& xv = x.node().value;
  std::vector<double> out(m * n), norms(m);
  for (std::size_t r = 0; r < m; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += xv[r * n + c] * xv[r * n + c];
    norms[r] = std::max(std::sqrt(s), 1e-12);
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = xv[r * n + c] / norms[r];
  }
  return Tensor::make_result("l2_normalize", {m, n}, std::move(out), {x},
                             [m, n, norms = std::move(norms)](detail::Node& self) {
                               if (!needs(self, 0)) return;
                               auto& g = grad_of(self, 0);
                               const auto& y = self.value;
                               for (std::size_t r = 0; r < m; ++r) {
                                 double dot = 0.0;
                                 for (std::size_t c = 0; c < n; ++c) dot += y[r * n + c] * self.grad[r * n + c];
                                 for (std::size_t c = 0; c < n; ++c)
                                   g[r * n + c] += (self.grad[r * n + c] - y[r * n + c] * dot) / norms[r];
                               }
                             });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, double smoothing,
                     std::span<const double> row_weights, double normalizer) {
  require_2d("cross_entropy", logits);
  const std::size_t m = logits.rows(), v = logits.cols();
  if (targets.size() != m) shape_error("cross_entropy", logits.shape(), {targets.size()});
  if (!row_weights.empty() && row_weights.size() != m)
    shape_error("cross_entropy", logits.shape(), {row_weights.size()});
  if (smoothing < 0.0 || smoothing > 1.0) throw std::invalid_argument("cross_entropy: smoothing outside [0,1]");
  const auto& lv = logits.node().value;
  std::vector<double> probs(m * v, 0.0);
  std::vector<double> weight(m, 0.0);
  double total = 0.0, weight_sum = 0.0;
  const double off = smoothing / static_cast<double>(v);
  for (std::size_t r = 0; r < m; ++r) {
    if (targets[r] < 0) continue;
    if (static_cast<std::size_t>(targets[r]) >= v) {
      throw std::out_of_range("cross_entropy: target " + std::to_string(targets[r]) + " >= classes " +
                              std::to_string(v));
    }
    const double w = row_weights.empty() ? 1.0 : row_weights[r];
    weight[r] = w;
    weight_sum += w;
    const double* row = lv.data() + r * v;
    double mx = *std::max_element(row, row + v);
    double z = 0.0;
    for (std::size_t c = 0; c < v; ++c) z += std::exp(row[c] - mx);
    const double log_z = mx + std::log(z);
    double mean_logp = 0.0;
    for (std::size_t c = 0; c < v; ++c) {
      probs[r * v + c] = std::exp(row[c] - log_z);
      mean_logp += row[c] - log_z;
    }
    mean_logp /= static_cast<double>(v);
    const double nll = -(row[targets[r]] - log_z);
    total += w * ((1.0 - smoothing) * nll - smoothing * mean_logp);
  }
  const double denom = normalizer > 0.0 ? normalizer : weight_sum;
  const double scale_factor = denom > 0.0 ? 1.0 / denom : 0.0;
  return Tensor::make_result(
      "cross_entropy", {1}, {total * scale_factor}, {logits},
      [m, v, off, smoothing, scale_factor, probs = std::move(probs), weight = std::move(weight),
       tg = std::vector<int>(targets.begin(), targets.end())](detail::Node& self) {
        if (!needs(self, 0)) return;
        auto& g = grad_of(self, 0);
        const double upstream = self.grad[0] * scale_factor;
        for (std::size_t r = 0; r < m; ++r) {
          if (tg[r] < 0 || weight[r] == 0.0) continue;
          const double k = upstream * weight[r];
          for (std::size_t c = 0; c < v; ++c) g[r * v + c] += k * (probs[r * v + c] - off);
          g[r * v + static_cast<std::size_t>(tg[r])] -= k * (1.0 - smoothing);
        }
      });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const std::size_t n = parts.front().cols();
  std::size_t m = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    require_2d("concat_rows", p);
    if (p.cols() != n) shape_error("concat_rows", parts.front().shape(), p.shape());
    offsets.push_back(m);
    m += p.rows();
  }
  std::vector<double> out;
  out.reserve(m * n);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return Tensor::make_result("concat_rows", {m, n}, std::move(out), parts,
                             [n, offsets = std::move(offsets)](detail::Node& self) {
                               for (std::size_t i = 0; i < offsets.size(); ++i) {
                                 if (!needs(self, i)) continue;
                                 auto& g = grad_of(self, i);
                                 const std::size_t base = offsets[i] * n;
                                 for (std::size_t j = 0; j < g.size(); ++j) g[j] += self.grad[base + j];
                               }
                             });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_2d("slice_rows", x);
  if (begin > end || end > x.rows()) {
    throw std::out_of_range("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                            ") outside " + shape_str(x.shape()));
  }
  const std::size_t n = x.cols();
  const auto& xv = x.node().value;
  std::vector<double> out(xv.begin() + static_cast<std::ptrdiff_t>(begin * n),
                          xv.begin() + static_cast<std::ptrdiff_t>(end * n));
  return Tensor::make_result("slice_rows", {end - begin, n}, std::move(out), {x}, [begin, n](detail::Node& self) {
    if (!needs(self, 0)) return;
    auto& g = grad_of(self, 0);
    for (std::size_t j = 0; j < self.grad.size(); ++j) g[begin * n + j] += self.grad[j];
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_2d("gather_rows", x);
  const std::size_t n = x.cols(), m = x.rows();
  const auto& xv = x.node().value;
  std::vector<double> out(rows.size() * n);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= m) throw std::out_of_range("gather_rows: row " + std::to_string(rows[i]) + " >= " + std::to_string(m));
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(rows[i] * n), n, out.begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  return Tensor::make_result("gather_rows", {rows.size(), n}, std::move(out), {x},
                             [n, idx = std::vector<std::size_t>(rows.begin(), rows.end())](detail::Node& self) {
                               if (!needs(self, 0)) return;
                               auto& g = grad_of(self, 0);
                               for (std::size_t i = 0; i < idx.size(); ++i)
                                 for (std::size_t c = 0; c < n; ++c) g[idx[i] * n + c] += self.grad[i * n + c];
                             });
}

Tensor scatter_rows(const std::vector<std::pair<Tensor, std::vector<std::size_t>>>& parts,
                    std::size_t total_rows) {
  if (parts.empty()) throw std::invalid_argument("scatter_rows: no inputs");
  const std::size_t n = parts.front().first.cols();
  std::vector<double> out(total_rows * n, 0.0);
  std::vector<Tensor> inputs;
  std::vector<std::vector<std::size_t>> indices;
  for (const auto& [t, idx] : parts) {
    require_2d("scatter_rows", t);
    if (t.cols() != n || t.rows() != idx.size()) shape_error("scatter_rows", t.shape(), {idx.size(), n});
    const auto& tv = t.node().value;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] >= total_rows) throw std::out_of_range("scatter_rows: row index beyond result");
      std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(i * n), n, out.begin() + static_cast<std::ptrdiff_t>(idx[i] * n));
    }
    inputs.push_back(t);
    indices.push_back(idx);
  }
  return Tensor::make_result("scatter_rows", {total_rows, n}, std::move(out), std::move(inputs),
                             [n, indices = std::move(indices)](detail::Node& self) {
                               for (std::size_t p = 0; p < indices.size(); ++p) {
                                 if (!needs(self, p)) continue;
                                 auto& g = grad_of(self, p);
                                 const auto& idx = indices[p];
                                 for (std::size_t i = 0; i < idx.size(); ++i)
                                   for (std::size_t c = 0; c < n; ++c) g[i * n + c] += self.grad[idx[i] * n + c];
                               }
                             });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionSpec& spec) {
  require_2d("attention", q);
  if (q.shape() != k.shape()) shape_error("attention", q.shape(), k.shape());
  if (q.shape() != v.shape()) shape_error("attention", q.shape(), v.shape());
  const std::size_t B = spec.batch, L = spec.seq_len, H = spec.heads, d = q.cols();
  if (H == 0 || d % H != 0) throw std::invalid_argument("attention: width " + std::to_string(d) + " not divisible by heads");
  if (B * L != q.rows()) shape_error("attention", q.shape(), {B * L, d});
  const std::size_t dh = d / H;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const Eigen::Index Li = static_cast<Eigen::Index>(L), dhi = static_cast<Eigen::Index>(dh);
  const Strided stride(static_cast<Eigen::Index>(d));

  const bool record = grad_enabled() && (q.requires_grad() || k.requires_grad() || v.requires_grad());
  std::vector<double> probs_store;
  if (record) probs_store.resize(B * H * L * L);
  std::vector<double> out(B * L * d);
  RowMat scores(Li, Li);
  std::vector<double> slopes(H);
  for (std::size_t h = 0; h < H; ++h) slopes[h] = spec.alibi ? alibi_slope(h, H) : 0.0;

  // Fills `p` with softmax(scale·QKᵀ + bias) for one (sequence, head).
  auto probs_for = [&](RowMat& p, std::size_t b, std::size_t h) {
    const std::size_t off = b * L * d + h * dh;
    CSMapMat qm(q.node().value.data() + off, Li, dhi, stride);
    CSMapMat km(k.node().value.data() + off, Li, dhi, stride);
    p.noalias() = (qm * km.transpose()) * inv_sqrt;
    const double slope = slopes[h];
    for (std::size_t i = 0; i < L; ++i) {
      double* row = p.data() + i * L;
      const std::size_t valid = spec.causal ? i + 1 : L;
      if (slope != 0.0) {
        for (std::size_t j = 0; j < valid; ++j)
          row[j] -= slope * static_cast<double>(i > j ? i - j : j - i);
      }
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < valid; ++j) mx = std::max(mx, row[j]);
      auto seg = Eigen::Map<Eigen::ArrayXd>(row, static_cast<Eigen::Index>(valid));
      seg = (seg - mx).exp();
      seg /= seg.sum();
      for (std::size_t j = valid; j < L; ++j) row[j] = 0.0;
    }
  };

  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < H; ++h) {
      probs_for(scores, b, h);
      const std::size_t off = b * L * d + h * dh;
      CSMapMat vm(v.node().value.data() + off, Li, dhi, stride);
      SMapMat om(out.data() + off, Li, dhi, stride);
      om.noalias() = scores * vm;
      if (record) std::copy(scores.data(), scores.data() + L * L, probs_store.begin() + static_cast<std::ptrdiff_t>((b * H + h) * L * L));
    }
  }

  return Tensor::make_result(
      "attention", {B * L, d}, std::move(out), {q, k, v},
      [B, L, H, d, dh, inv_sqrt, Li, dhi, probs = std::move(probs_store)](detail::Node& self) {
        const Strided stride(static_cast<Eigen::Index>(d));
        const auto& qv = value_of(self, 0);
        const auto& kv = value_of(self, 1);
        const auto& vv = value_of(self, 2);
        double* gq = needs(self, 0) ? grad_of(self, 0).data() : nullptr;
        double* gk = needs(self, 1) ? grad_of(self, 1).data() : nullptr;
        double* gv = needs(self, 2) ? grad_of(self, 2).data() : nullptr;
        RowMat dp(Li, Li);
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t h = 0; h < H; ++h) {
            const std::size_t off = b * L * d + h * dh;
            CMapMat p(probs.data() + (b * H + h) * L * L, Li, Li);
            CSMapMat dout(self.grad.data() + off, Li, dhi, stride);
            CSMapMat vm(vv.data() + off, Li, dhi, stride);
            if (gv) SMapMat(gv + off, Li, dhi, stride).noalias() += p.transpose() * dout;
            if (!gq && !gk) continue;
            dp.noalias() = dout * vm.transpose();
            // dS = P ⊙ (dP − rowsum(dP ⊙ P)); masked entries have P = 0.
            for (std::size_t i = 0; i < L; ++i) {
              double dot = 0.0;
              for (std::size_t j = 0; j < L; ++j) dot += dp(i, j) * p(i, j);
              for (std::size_t j = 0; j < L; ++j) dp(i, j) = p(i, j) * (dp(i, j) - dot) * inv_sqrt;
            }
            if (gq) SMapMat(gq + off, Li, dhi, stride).noalias() += dp * CSMapMat(kv.data() + off, Li, dhi, stride);
            if (gk) SMapMat(gk + off, Li, dhi, stride).noalias() += dp.transpose() * CSMapMat(qv.data() + off, Li, dhi, stride);
          }
        }
      });
}

}  // namespace vab::ops
