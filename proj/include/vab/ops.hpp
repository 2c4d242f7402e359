#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "vab/tensor.hpp"

// Differentiable operations over 2-D row-major tensors (1-element tensors act
// as scalars). Every op validates shapes, rejects non-finite outputs, and
// registers a backward rule when recording is active.
namespace vab::ops {

Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k]·[k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k]·[n,k]ᵀ
Tensor transpose(const Tensor& a);
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);  // x·W + b

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_row(const Tensor& x, const Tensor& row);  // broadcast a length-n row over [m,n]
Tensor scale(const Tensor& x, double factor);
Tensor mul_scalar(const Tensor& x, const Tensor& s);  // s has one element
Tensor exp(const Tensor& x);
Tensor gelu(const Tensor& x);  // exact erf form
Tensor sum(const Tensor& x);

Tensor softmax(const Tensor& x, std::size_t axis);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor embedding(const Tensor& table, std::span<const int> ids);
Tensor mean_pool(const Tensor& x, std::size_t axis);
// Mean over consecutive blocks of `segment` rows: [B·segment, n] -> [B, n].
Tensor mean_pool_segments(const Tensor& x, std::size_t segment);
Tensor l2_normalize(const Tensor& x);  // each row to unit norm

/// Mean (or weighted) cross-entropy over rows of `logits` against integer
/// targets. Rows whose target is negative are ignored. With smoothing ε the
/// target distribution is (1-ε)·onehot + ε/V. The weighted sum is divided by
/// `normalizer`, or by the summed weight of counted rows when it is zero. An
/// empty counted set yields 0.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, double smoothing = 0.0,
                     std::span<const double> row_weights = {}, double normalizer = 0.0);

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
// Inverse of gather: places each part's rows at the given indices of a
// [total_rows, n] result; uncovered rows are zero.
Tensor scatter_rows(const std::vector<std::pair<Tensor, std::vector<std::size_t>>>& parts,
                    std::size_t total_rows);

struct AttentionSpec {
  std::size_t batch = 1;
  std::size_t seq_len = 0;
  std::size_t heads = 1;
  bool alibi = true;
  bool causal = false;
};

/// Multi-head scaled dot-product attention over `batch` independent
/// sequences stacked row-wise in q, k, v ([batch·seq_len, d]). Head h uses
/// columns [h·d/heads, (h+1)·d/heads). When `alibi` is set the scores get
/// -slope_h·|i-j| added before the softmax.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionSpec& spec);

double alibi_slope(std::size_t head, std::size_t heads);

}  // namespace vab::ops
