#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vab/codec.hpp"
#include "vab/model.hpp"
#include "vab/rng.hpp"

namespace vab {

struct DecodeConfig {
  std::size_t steps = 16;
  double cfg_scale = 5.0;
  double alpha0 = 10.5;
  std::uint64_t seed = 0;
  std::size_t c2f_steps = 36;

  void validate() const;
};

struct DecodeIteration {
  std::size_t iteration = 0;
  std::size_t masked_before = 0;
  std::size_t remasked = 0;    // k_t after clamping
  std::size_t masked = 0;      // positions still masked after the iteration
  std::size_t finalized = 0;   // positions committed this iteration
  double alpha = 0.0;
  double threshold = 0.0;      // lowest committed confidence
};

struct DecodeTrace {
  std::vector<DecodeIteration> iterations;
  std::size_t invocations = 0;

  // Tab-separated: iteration, masked, threshold, finalized (+ alpha, k).
  std::string to_table() const;
};

/// Source of per-level logits for the masked decoder. `grid` holds every
/// input level with mask ids where undecided; the result has one S × V_c
/// matrix per predicted level.
class TokenPredictor {
 public:
  virtual ~TokenPredictor() = default;
  virtual std::size_t predict_first() const = 0;
  virtual std::size_t predict_levels() const = 0;
  virtual int mask_id() const = 0;
  virtual std::vector<Matrix> predict(const TokenGrid& grid, bool conditional) = 0;
};

/// Adapts a MultiwayModel; the unconditional branch feeds the null embedding.
class ModelPredictor : public TokenPredictor {
 public:
  ModelPredictor(const MultiwayModel& model, const VisualFeatures* visual) : model_(model), visual_(visual) {}
  std::size_t predict_first() const override { return model_.config().predict_first; }
  std::size_t predict_levels() const override { return model_.config().predict_levels; }
  int mask_id() const override { return model_.config().mask_id(); }
  std::vector<Matrix> predict(const TokenGrid& grid, bool conditional) override;

 private:
  const MultiwayModel& model_;
  const VisualFeatures* visual_;
};

// guided = uncond + s·(cond − uncond); s = 1 returns cond and s = 0 uncond exactly.
Matrix cfg_logits(const Matrix& cond, const Matrix& uncond, double s);

// z = log p + α·g with one standard Gumbel draw per position.
std::vector<double> confidence(std::span<const double> log_probs, double alpha, Rng& rng);

double anneal_alpha(std::size_t t, std::size_t total_steps, double alpha0);

// ceil(cos(π/2·(t+1)/t_T)·N), exactly 0 at the final iteration.
std::size_t remask_count(std::size_t t, std::size_t total_steps, std::size_t n);

// Samples from softmax(row); returns (token, log probability).
std::pair<int, double> sample_categorical(std::span<const double> logits, Rng& rng);

/// Iterative parallel decoding of the predictor's levels, starting from
/// `grid` whose predicted levels are fully masked (lower levels are read-only
/// conditioning). Positions are timesteps: all predicted levels of a timestep
/// are committed or re-masked together.
std::pair<TokenGrid, DecodeTrace> decode_masked(TokenPredictor& predictor, TokenGrid grid, std::size_t steps,
                                                double cfg_scale, double alpha0, Rng& rng);

/// Backbone decode from a fully masked coarse grid of `timesteps` columns.
std::pair<TokenGrid, DecodeTrace> iterative_decode(const MultiwayModel& backbone, const VisualFeatures& visual,
                                                   std::size_t timesteps, const DecodeConfig& cfg);

/// Fills levels 4..11 given a complete coarse grid. Levels 0..3 are copied.
std::pair<TokenGrid, DecodeTrace> coarse_to_fine(const MultiwayModel& c2f, const TokenGrid& coarse,
                                                 const VisualFeatures& visual, const DecodeConfig& cfg);

struct GenerateResult {
  Waveform waveform;
  TokenGrid tokens;
  DecodeTrace trace;
  std::optional<DecodeTrace> c2f_trace;
};

/// visual → coarse tokens → (fine tokens) → waveform. `levels` is 4 or the
/// codec's full level count; more than the backbone's levels needs `c2f`.
GenerateResult generate(const VisualFeatures& visual, const Codebooks& cb, const MultiwayModel& backbone,
                        const MultiwayModel* c2f, std::size_t levels, double seconds, const DecodeConfig& cfg);

}  // namespace vab
