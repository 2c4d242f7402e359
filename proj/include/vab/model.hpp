#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vab/ops.hpp"
#include "vab/rng.hpp"
#include "vab/tensor.hpp"
#include "vab/types.hpp"

namespace vab {

/// Ordered collection of named trainable tensors.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Shape shape, double init_std, Rng& rng);
  Tensor& add_filled(const std::string& name, Shape shape, double value);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::vector<Tensor> tensors() const;
  std::vector<Tensor> tensors_with_prefix(const std::vector<std::string>& prefixes) const;
  std::size_t parameter_count() const;

  // Replaces values (same names and shapes required).
  void assign_from(const ParamStore& other);
  ParamStore deep_copy() const;
  // Appends a tensor loaded from disk.
  void insert(const std::string& name, Tensor t);

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::map<std::string, std::size_t> index_;
};

struct TransformerConfig {
  std::size_t d_model = 128;
  std::size_t layers = 8;
  std::size_t expert_layers = 4;  // first N1 layers carry audio and visual FFN experts
  std::size_t heads = 4;
  std::size_t ffn_mult = 4;
  bool causal = false;
  double init_std = 0.02;
};

/// Rows of a stacked [batch·seq, d] activation that belong to each modality.
struct Routing {
  std::vector<std::size_t> visual_rows;
  std::vector<std::size_t> audio_rows;
};

/// Pre-norm transformer layers with bidirectional (or causal) ALiBi attention.
/// Layers below `expert_layers` route rows through a modality-specific FFN.
class TransformerStack {
 public:
  TransformerStack() = default;
  // Registers freshly initialized layer parameters in `store`.
  TransformerStack(TransformerConfig cfg, std::string prefix, ParamStore& store, Rng& rng);
  // Binds to parameters already present in `store`.
  TransformerStack(TransformerConfig cfg, std::string prefix, const ParamStore& store);

  Tensor run(const Tensor& x, std::size_t batch, std::size_t seq_len, const Routing& routing,
             std::size_t layer_begin, std::size_t layer_end) const;

  const TransformerConfig& config() const { return cfg_; }
  std::string layer_prefix(std::size_t layer) const;

 private:
  Tensor ffn(const Tensor& h, const std::string& name) const;

  TransformerConfig cfg_;
  std::string prefix_;
  const ParamStore* store_ = nullptr;
};

struct ModelConfig {
  std::size_t d_emb = 128;
  std::size_t layers = 8;
  std::size_t expert_layers = 4;
  std::size_t heads = 4;
  std::size_t ffn_mult = 4;
  std::size_t vocab = 256;        // V_c; the mask id is V_c
  std::size_t input_levels = 4;   // codebook levels summed per timestep
  std::size_t predict_first = 0;  // first predicted level; lower levels are conditioning only
  std::size_t predict_levels = 4;
  std::size_t visual_dim = 32;
  std::size_t visual_frames = 10;
  double init_std = 0.02;
  std::uint64_t seed = 0;

  int mask_id() const { return static_cast<int>(vocab); }
  void validate() const;

  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);

  // Coarse-to-fine defaults derived from a backbone config.
  static ModelConfig coarse_to_fine(const ModelConfig& backbone, std::size_t total_levels);
};

enum class ForwardMode { joint, audio_only, visual_only };

/// One sequence: a token grid with mask ids at masked positions, and either
/// visual features or nothing (the null-condition embedding).
struct ModelInput {
  const TokenGrid* tokens = nullptr;
  const VisualFeatures* visual = nullptr;
};

/// Multiway transformer encoder. The backbone sums 4 coarse level embeddings
/// and predicts those 4 levels; the coarse-to-fine variant sums all 12 levels
/// with no experts and predicts levels 4..11.
class MultiwayModel {
 public:
  explicit MultiwayModel(ModelConfig cfg);
  // Adopts existing parameters (e.g. from a checkpoint).
  MultiwayModel(ModelConfig cfg, ParamStore params);
  MultiwayModel(const MultiwayModel& other);
  MultiwayModel& operator=(const MultiwayModel& other);
  MultiwayModel(MultiwayModel&& other) noexcept;
  MultiwayModel& operator=(MultiwayModel&& other) noexcept;

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  std::size_t sequence_length(ForwardMode mode, std::size_t steps) const;

  /// Input rows per sample: visual block (projection + E_v, or null + E_v)
  /// followed by the audio block (summed level embeddings + E_a).
  Tensor embed(const std::vector<ModelInput>& batch, ForwardMode mode) const;

  /// Runs layers [0, layer_end) on embedded rows. Uni-modal modes may not
  /// go beyond the expert layers.
  Tensor run_layers(const Tensor& embedded, std::size_t batch, ForwardMode mode, std::size_t layer_end) const;

  /// Full joint forward; returns final-normed hidden states [B·(F+S), d].
  Tensor forward_hidden(const std::vector<ModelInput>& batch) const;

  /// Per predicted level logits [rows, V_c] for the given stacked rows of a
  /// forward_hidden result.
  std::vector<Tensor> head_logits(const Tensor& hidden, const std::vector<std::size_t>& rows) const;

  /// Joint forward returning per predicted level logits at every audio row:
  /// predict_levels tensors of [B·S, V_c].
  std::vector<Tensor> forward(const std::vector<ModelInput>& batch) const;

  /// Mean-pooled output of the first `expert_layers` layers (or of all layers
  /// when the model has no experts): [B, d]. Used by retrieval and
  /// classification.
  Tensor pooled_features(const std::vector<ModelInput>& batch, ForwardMode mode) const;

  // Row index of audio step `t` of sample `b` in the joint layout.
  std::size_t audio_row(std::size_t b, std::size_t t, std::size_t steps) const;

  std::vector<Tensor> encoder_parameters() const;  // first N1 layers + input embeddings

 private:
  void build(Rng& rng);
  void bind();
  void check_input(const ModelInput& in, ForwardMode mode) const;
  Routing routing_for(std::size_t batch, std::size_t steps, ForwardMode mode) const;

  ModelConfig cfg_;
  ParamStore params_;
  TransformerStack stack_;
};

/// heads × seq_len × seq_len ALiBi bias, bias[h][i][j] = -slope_h·|i-j|.
Tensor alibi_bias(std::size_t seq_len, std::size_t heads);

}  // namespace vab
