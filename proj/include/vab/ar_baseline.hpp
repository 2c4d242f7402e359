#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "vab/model.hpp"
#include "vab/synthdata.hpp"
#include "vab/training.hpp"

namespace vab {

/// Causal transformer decoder over the flattened coarse grid, token order
/// t·levels + l (levels interleaved per timestep), after the visual prefix
/// and a BOS row. Uses the same layer stack, embeddings and heads as the
/// multiway backbone, so parameter counts match for equal configs.
class ArModel {
 public:
  explicit ArModel(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Logits for every position of a teacher-forced sequence: row j predicts
  /// flattened token j from the visual prefix, BOS and tokens < j. `tokens`
  /// holds the first n flattened tokens; the result is [n + 1, V_c] (row n
  /// predicts the next token). Each row uses the head of its target's level.
  Tensor forward(const VisualFeatures* visual, std::span<const int> tokens) const;

  // Next-token logits after `tokens` from one full causal forward.
  std::vector<double> next_logits(const VisualFeatures* visual, std::span<const int> tokens) const;

  std::size_t level_of(std::size_t flat_index) const { return flat_index % cfg_.input_levels; }

 private:
  Tensor embed(const VisualFeatures* visual, std::span<const int> tokens) const;

  ModelConfig cfg_;
  ParamStore params_;
  TransformerStack stack_;
};

/// Incremental decoder state: per-layer key/value rows for the prefix seen
/// so far. Each `push` runs one new row through every layer.
class ArCache {
 public:
  explicit ArCache(const ArModel& model);
  // Feeds the visual prefix and BOS; returns logits for flattened token 0.
  std::vector<double> start(const VisualFeatures* visual);
  // Feeds flattened token `flat_index`; returns logits for the next token.
  std::vector<double> push(int token, std::size_t flat_index);

 private:
  std::vector<double> feed(const Tensor& row, bool visual, std::size_t head_level);

  const ArModel& model_;
  std::vector<Matrix> keys_, values_;
  std::size_t length_ = 0;
};

struct ArDecodeConfig {
  std::size_t top_k = 256;
  std::uint64_t seed = 0;
  bool kv_cache = false;
};

struct ArDecodeResult {
  TokenGrid tokens;
  std::size_t invocations = 0;
};

// Top-k restricted categorical sample (ties in the cut → lower index).
int sample_top_k(std::span<const double> logits, std::size_t k, Rng& rng);

/// Decodes levels × timesteps tokens one at a time: exactly levels·timesteps
/// model invocations.
ArDecodeResult ar_decode(const ArModel& model, const VisualFeatures& visual, std::size_t timesteps,
                         const ArDecodeConfig& cfg);

// Teacher-forced next-token training on coarse grids.
TrainLog ar_train(ArModel& model, std::span<const Example> data, const TrainSchedule& schedule,
                  double visual_dropout = 0.1, const StepCallback& on_step = {});

}  // namespace vab
