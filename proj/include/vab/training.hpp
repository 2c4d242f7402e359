#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vab/codec.hpp"
#include "vab/metrics.hpp"
#include "vab/model.hpp"
#include "vab/optim.hpp"
#include "vab/synthdata.hpp"

namespace vab {

/// Encodes every sample's waveform into a token grid and wraps it as an
/// Example carrying a single composite label of weight 1.
std::vector<Example> encode_dataset(const std::vector<PairedSample>& samples, const Codebooks& cb,
                                    std::size_t visual_factors);

struct AugmentConfig {
  double mixup_prob = 0.5;
  double roll_prob = 0.1;
  double visual_dropout = 0.1;
  ClipTiming timing{};
};

// Draws `batch` examples with replacement and applies the augmentations.
std::vector<Example> sample_batch(std::span<const Example> data, std::size_t batch, const AugmentConfig& aug,
                                  Rng& rng);

struct TrainSchedule {
  std::size_t batch_size = 8;
  std::int64_t steps = 1000;
  std::int64_t warmup_steps = 100;
  double base_lr = 2e-4;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double max_grad_norm = 1.0;
  std::uint64_t seed = 0;

  AdamWConfig adamw() const;
};

struct PretrainConfig {
  TrainSchedule schedule{};
  AugmentConfig augment{};
  double label_smoothing = 0.1;
  MaskRatioConfig mask_ratio{};
  bool per_level_mask = false;
};

/// A model input with the prediction targets for its masked positions.
struct MaskedExample {
  TokenGrid masked;   // model input; mask id at masked positions
  TokenGrid target;   // same shape; original tokens
  const VisualFeatures* visual = nullptr;  // nullptr = null condition
};

/// Builds a masked example from a full token grid. The model's input levels
/// are taken from the front of the grid; for a model with predict_first > 0
/// only the predicted levels are masked.
MaskedExample make_masked_example(const Example& e, const ModelConfig& cfg, double ratio, Rng& rng,
                                  bool per_level = false);

/// Cross-entropy over masked positions of the predicted levels only, summed
/// and divided by the number of masked tokens. Returns 0 when nothing is
/// masked.
Tensor masked_prediction_loss(const MultiwayModel& model, const std::vector<MaskedExample>& batch,
                              double label_smoothing);

/// One optimizer step of masked token prediction (backbone or coarse-to-fine,
/// depending on the model config). Rejects batches with no masked token.
double pretrain_step(MultiwayModel& model, AdamW& opt, const std::vector<MaskedExample>& batch,
                     double label_smoothing);

struct TrainLog {
  std::vector<double> loss;
  std::vector<double> lr;
  std::vector<double> validation;  // (step, value) pairs flattened when recorded
};

using StepCallback = std::function<void(std::int64_t step, double loss)>;

/// Masked-prediction training loop. Works for both the backbone and the
/// coarse-to-fine model.
TrainLog pretrain(MultiwayModel& model, std::span<const Example> data, const PretrainConfig& cfg,
                  const StepCallback& on_step = {});

/// Mean masked cross-entropy (no smoothing) over the examples with masks drawn
/// from the pretraining ratio distribution under `seed`.
double validation_loss(const MultiwayModel& model, std::span<const Example> data, const MaskRatioConfig& ratio,
                       std::uint64_t seed, std::size_t batch_size = 8);

// ---------------------------------------------------------------- contrastive

/// InfoNCE on row-aligned representations (rows are L2-normalized
/// inside). Audio→visual direction, averaged with visual→audio when
/// `symmetric`.
Tensor contrastive_loss(const Tensor& audio_reps, const Tensor& visual_reps, const Tensor& log_tau, bool symmetric);

struct ContrastiveConfig {
  TrainSchedule schedule{};
  double initial_tau = 0.05;
  bool symmetric = true;
};

struct ContrastiveState {
  Tensor log_tau;
  double tau() const;
};

ContrastiveState make_contrastive_state(double initial_tau);

// Mean-pooled, L2-normalized audio_only / visual_only encoder outputs.
Tensor audio_representation(const MultiwayModel& model, const std::vector<const TokenGrid*>& grids);
Tensor visual_representation(const MultiwayModel& model, const std::vector<const VisualFeatures*>& visuals);

// R@1/5/10 in both directions over pooled audio and visual representations.
RetrievalResult evaluate_retrieval(const MultiwayModel& model, std::span<const Example> data);

double contrastive_step(MultiwayModel& model, ContrastiveState& state, AdamW& opt, std::span<const Example> batch,
                        bool symmetric);

/// Trains the encoder layers, input projections and log τ.
TrainLog contrastive_finetune(MultiwayModel& model, ContrastiveState& state, std::span<const Example> data,
                              const ContrastiveConfig& cfg, const StepCallback& on_step = {});

// ------------------------------------------------------------- classification

enum class ClassifyMode { visual, audio, joint };

ClassifyMode parse_classify_mode(const std::string& s);
std::string to_string(ClassifyMode m);

struct ClassifierHead {
  ParamStore params;  // "cls.w" [d, C], "cls.b" [C]
  std::size_t classes = 0;

  ClassifierHead() = default;
  ClassifierHead(std::size_t d, std::size_t classes, std::uint64_t seed);
  Tensor logits(const Tensor& features) const;
};

struct ClassifyConfig {
  TrainSchedule schedule{};
  AugmentConfig augment{0.5, 0.1, 0.0, {}};
  double label_smoothing = 0.1;
  std::size_t classes = 16;
};

/// Pooled features of the first N1 layers for the mode: visual_only,
/// audio_only, or the joint sequence.
Tensor classification_features(const MultiwayModel& model, std::span<const Example> batch, ClassifyMode mode);

struct ClassifyResult {
  double accuracy = 0.0;
  TrainLog log;
};

/// Fine-tunes the encoder (first N1 layers and embeddings) plus the head.
ClassifyResult classify_finetune(MultiwayModel& model, ClassifierHead& head, std::span<const Example> train,
                                 std::span<const Example> test, ClassifyMode mode, const ClassifyConfig& cfg,
                                 const StepCallback& on_step = {});

/// Trains only the head on features of the frozen backbone.
ClassifyResult linear_probe(const MultiwayModel& model, ClassifierHead& head, std::span<const Example> train,
                            std::span<const Example> test, ClassifyMode mode, const ClassifyConfig& cfg,
                            const StepCallback& on_step = {});

// Top-1 accuracy against each example's heaviest label (ties → lower class).
double classify_accuracy(const MultiwayModel& model, const ClassifierHead& head, std::span<const Example> data,
                         ClassifyMode mode, std::size_t batch_size = 16);

}  // namespace vab
