#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vab/codec.hpp"
#include "vab/linalg.hpp"
#include "vab/model.hpp"

namespace vab {

/// ‖μ_X − μ_Y‖² + tr(Σ_X + Σ_Y − 2·(Σ_X^{1/2} Σ_Y Σ_X^{1/2})^{1/2}) over the
/// rows of X and Y. A set with n ≤ d + 1 rows gets Σ ← Σ + 1e-6·I.
double frechet_distance(const Matrix& x, const Matrix& y);

// KL(p ‖ q) with both distributions floored at 1e-10 and renormalized.
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// Mean over paired rows of KL(reference ‖ generated).
double kld_metric(const Matrix& reference_probs, const Matrix& generated_probs);

struct RetrievalResult {
  std::array<double, 3> visual_to_audio{};  // R@1, R@5, R@10
  std::array<double, 3> audio_to_visual{};
};

// Recall@k for queries `q` against candidates `c`, matched by row index.
// Cosine similarity; ties rank the lower candidate index first.
std::vector<double> recall_at(const Matrix& queries, const Matrix& candidates, std::span<const std::size_t> ks);

RetrievalResult retrieval_eval(const Matrix& audio, const Matrix& visual);

Matrix to_matrix(const Tensor& t);

/// Small frozen MLP over waveform spectral statistics, trained on held-out
/// clips to predict the audio factor. Its hidden layer supplies the
/// embeddings for the Fréchet distance and its softmax the distributions for
/// the KL metric.
class EvalProbe {
 public:
  EvalProbe() = default;
  EvalProbe(std::size_t classes, std::size_t hidden, std::uint64_t seed);

  // Per DCT bin mean and standard deviation of |coefficient| over frames.
  static Matrix waveform_features(std::span<const Waveform> clips, const CodecConfig& frames);
  static constexpr std::size_t kBins = 64;

  // Full-batch AdamW; also fixes the input standardization statistics.
  void train(const Matrix& features, std::span<const std::size_t> labels, std::int64_t steps);

  Matrix embed(const Matrix& features) const;          // n × hidden
  Matrix probabilities(const Matrix& features) const;  // n × classes
  std::vector<std::size_t> predict(const Matrix& features) const;

  std::size_t classes() const { return classes_; }
  const ParamStore& params() const { return params_; }
  std::string config_text() const;
  static EvalProbe from_checkpoint(const std::string& config_text, ParamStore params);

 private:
  Tensor standardized(const Matrix& features) const;
  Tensor hidden_layer(const Tensor& x) const;
  Tensor logits(const Tensor& x) const;

  std::size_t classes_ = 0;
  std::size_t hidden_ = 0;
  ParamStore params_;
};

}  // namespace vab
