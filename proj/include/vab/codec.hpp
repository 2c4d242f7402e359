#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vab/types.hpp"

namespace vab {

struct CodecConfig {
  int sample_rate = 16000;
  std::size_t frame_size = 320;
  std::size_t feature_dim = 64;
  std::size_t levels = 12;
  std::size_t entries = 256;
  int kmeans_iters = 10;
  /// Codebook training keeps every frame_stride-th frame of each waveform.
  std::size_t frame_stride = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Residual codebooks: levels × entries × feature_dim. Entry 0 of every level
/// is the protected zero vector.
struct Codebooks {
  CodecConfig config;
  std::vector<double> vectors;
  bool trained = false;
  std::uint64_t fingerprint = 0;

  std::span<const double> entry(std::size_t level, std::size_t index) const {
    return {vectors.data() + (level * config.entries + index) * config.feature_dim, config.feature_dim};
  }
  std::span<double> entry(std::size_t level, std::size_t index) {
    return {vectors.data() + (level * config.entries + index) * config.feature_dim, config.feature_dim};
  }
};

struct CodebookTrainingStats {
  // [level][iteration]: mean squared distance of points to their assigned
  // entry, measured after each assignment pass (kmeans_iters + 1 values).
  std::vector<std::vector<double>> quantization_error;
  // [level]: mean Euclidean residual norm after quantizing through that level.
  std::vector<double> residual_norm;
  std::size_t frames = 0;
};

// Orthonormal DCT-II rows 0..feature_dim-1 of a frame_size-point transform.
Matrix dct_basis(std::size_t frame_size, std::size_t feature_dim);

/// Splits into non-overlapping frames (trailing partial frame zero-padded)
/// and keeps the first feature_dim DCT-II coefficients: S × feature_dim.
Matrix frame_transform(const Waveform& w, const CodecConfig& cfg);
Waveform inverse_frame_transform(const Matrix& features, const CodecConfig& cfg);

Codebooks train_codebooks(std::span<const Waveform> corpus, const CodecConfig& cfg,
                          CodebookTrainingStats* stats = nullptr);

TokenGrid encode(const Waveform& w, const Codebooks& cb);
TokenGrid encode_features(const Matrix& features, const Codebooks& cb);
Matrix decode_features(const TokenGrid& g, const Codebooks& cb, std::size_t levels_used);
Waveform decode(const TokenGrid& g, const Codebooks& cb, std::size_t levels_used);

/// 10·log10(signal power / error power) after zero-padding the shorter input.
/// Returns +infinity for an exact match.
double recon_snr(const Waveform& original, const Waveform& reconstructed);
double recon_mse(const Waveform& original, const Waveform& reconstructed);

std::uint64_t corpus_fingerprint(std::span<const Waveform> corpus);

void save_codebooks(const Codebooks& cb, const std::string& path);
Codebooks load_codebooks(const std::string& path);

}  // namespace vab
