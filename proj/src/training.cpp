#include "vab/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace vab {

std::vector<Example> encode_dataset(const std::vector<PairedSample>& samples, const Codebooks& cb,
                                    std::size_t visual_factors) {
  std::vector<Example> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    Example e;
    e.tokens = encode(s.waveform, cb);
    e.visual = s.visual;
    e.labels = {{s.label.composite(visual_factors), 1.0}};
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<Example> sample_batch(std::span<const Example> data, std::size_t batch, const AugmentConfig& aug,
                                  Rng& rng) {
  if (data.empty()) throw std::invalid_argument("sample_batch: empty dataset");
  std::vector<Example> out;
  out.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    Example e = data[rng.below(data.size())];
    if (aug.mixup_prob > 0.0 && rng.bernoulli(aug.mixup_prob)) {
      const Example& other = data[rng.below(data.size())];
      e = temporal_mixup(e, other, rng, aug.timing);
    }
    if (aug.roll_prob > 0.0 && rng.bernoulli(aug.roll_prob)) e = temporal_roll(e, rng, aug.timing);
    if (aug.visual_dropout > 0.0 && !visual_dropout(e.visual, aug.visual_dropout, rng)) e.visual_dropped = true;
    out.push_back(std::move(e));
  }
  return out;
}

AdamWConfig TrainSchedule::adamw() const {
  AdamWConfig c;
  c.beta1 = beta1;
  c.beta2 = beta2;
  c.weight_decay = weight_decay;
  c.base_lr = base_lr;
  c.warmup_steps = warmup_steps;
  c.total_steps = steps;
  c.max_grad_norm = max_grad_norm;
  return c;
}

MaskedExample make_masked_example(const Example& e, const ModelConfig& cfg, double ratio, Rng& rng, bool per_level) {
  if (e.tokens.levels < cfg.input_levels) {
    throw std::invalid_argument("masked example: grid has " + std::to_string(e.tokens.levels) + " levels, model needs " +
                                std::to_string(cfg.input_levels));
  }
  MaskedExample m;
  m.target = e.tokens.levels == cfg.input_levels ? e.tokens : e.tokens.level_range(0, cfg.input_levels);
  auto [masked_pred, spec] =
      apply_mask(m.target.level_range(cfg.predict_first, cfg.predict_levels), ratio, cfg.mask_id(), rng, per_level);
  m.masked = m.target;
  std::copy(masked_pred.tokens.begin(), masked_pred.tokens.end(),
            m.masked.tokens.begin() + static_cast<std::ptrdiff_t>(cfg.predict_first * m.masked.steps));
  m.visual = e.visual_dropped ? nullptr : &e.visual;
  return m;
}

namespace {

struct LossParts {
  Tensor loss;
  std::size_t masked = 0;
};

LossParts masked_loss_parts(const MultiwayModel& model, const std::vector<MaskedExample>& batch, double smoothing) {
  const auto& cfg = model.config();
  if (batch.empty()) throw std::invalid_argument("masked loss: empty batch");
  const std::size_t S = batch[0].masked.steps;
  std::vector<std::size_t> rows;
  std::vector<std::vector<int>> targets(cfg.predict_levels);
  std::size_t masked = 0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& m = batch[b];
    if (m.target.levels != m.masked.levels || m.target.steps != m.masked.steps) {
      throw std::invalid_argument("masked loss: target and input grids differ in shape");
    }
    for (std::size_t t = 0; t < S; ++t) {
      bool any = false;
      for (std::size_t k = 0; k < cfg.predict_levels; ++k) any |= m.masked.at(cfg.predict_first + k, t) == cfg.mask_id();
      if (!any) continue;
      rows.push_back(model.audio_row(b, t, S));
      for (std::size_t k = 0; k < cfg.predict_levels; ++k) {
        const std::size_t l = cfg.predict_first + k;
        const bool is_masked = m.masked.at(l, t) == cfg.mask_id();
        targets[k].push_back(is_masked ? m.target.at(l, t) : -1);
        masked += is_masked;
      }
    }
  }
  if (masked == 0) return {Tensor::scalar(0.0), 0};
  std::vector<ModelInput> inputs;
  inputs.reserve(batch.size());
  for (const auto& m : batch) inputs.push_back({&m.masked, m.visual});
  const Tensor hidden = model.forward_hidden(inputs);
  const auto logits = model.head_logits(hidden, rows);
  Tensor loss;
  for (std::size_t k = 0; k < cfg.predict_levels; ++k) {
    const Tensor lk = ops::cross_entropy(logits[k], targets[k], smoothing, {}, static_cast<double>(masked));
    loss = loss.defined() ? ops::add(loss, lk) : lk;
  }
  return {loss, masked};
}

// Shuffled index order, refreshed each pass over the data.
class EpochSampler {
 public:
  EpochSampler(std::size_t n, Rng& rng) : order_(n), rng_(rng) { reshuffle(); }

  std::vector<std::size_t> next(std::size_t count) {
    std::vector<std::size_t> out;
    out.reserve(count);
    while (out.size() < count) {
      if (pos_ == order_.size()) reshuffle();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_.below(i)]);
    pos_ = 0;
  }
  std::vector<std::size_t> order_;
  Rng& rng_;
  std::size_t pos_ = 0;
};

}  // namespace

Tensor masked_prediction_loss(const MultiwayModel& model, const std::vector<MaskedExample>& batch,
                              double label_smoothing) {
  return masked_loss_parts(model, batch, label_smoothing).loss;
}

double pretrain_step(MultiwayModel& model, AdamW& opt, const std::vector<MaskedExample>& batch,
                     double label_smoothing) {
  opt.zero_grad();
  const auto parts = masked_loss_parts(model, batch, label_smoothing);
  if (parts.masked == 0) throw std::invalid_argument("pretrain_step: batch has no masked tokens");
  parts.loss.backward();
  opt.step();
  return parts.loss.item();
}

TrainLog pretrain(MultiwayModel& model, std::span<const Example> data, const PretrainConfig& cfg,
                  const StepCallback& on_step) {
  AdamW opt(model.params().tensors(), cfg.schedule.adamw());
  Rng rng(derive_seed(cfg.schedule.seed, {0x70726574}));
  TrainLog log;
  for (std::int64_t step = 0; step < cfg.schedule.steps; ++step) {
    const auto examples = sample_batch(data, cfg.schedule.batch_size, cfg.augment, rng);
    std::vector<MaskedExample> batch;
    batch.reserve(examples.size());
    for (const auto& e : examples) {
      const double ratio = sample_mask_ratio(rng, cfg.mask_ratio);
      batch.push_back(make_masked_example(e, model.config(), ratio, rng, cfg.per_level_mask));
    }
    log.lr.push_back(lr_at(std::min(opt.steps_taken() + 1, cfg.schedule.steps), opt.config()));
    const double loss = pretrain_step(model, opt, batch, cfg.label_smoothing);
    log.loss.push_back(loss);
    if (on_step) on_step(step, loss);
  }
  return log;
}

double validation_loss(const MultiwayModel& model, std::span<const Example> data, const MaskRatioConfig& ratio,
                       std::uint64_t seed, std::size_t batch_size) {
  NoGradGuard no_grad;
  Rng rng(seed);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    std::vector<MaskedExample> batch;
    for (std::size_t i = start; i < end; ++i) {
      batch.push_back(make_masked_example(data[i], model.config(), sample_mask_ratio(rng, ratio), rng));
    }
    const auto parts = masked_loss_parts(model, batch, 0.0);
    total += parts.loss.item() * static_cast<double>(parts.masked);
    count += parts.masked;
  }
  if (count == 0) throw std::invalid_argument("validation_loss: no masked tokens");
  return total / static_cast<double>(count);
}

// ---------------------------------------------------------------- contrastive

Tensor contrastive_loss(const Tensor& audio_reps, const Tensor& visual_reps, const Tensor& log_tau, bool symmetric) {
  if (audio_reps.shape() != visual_reps.shape()) {
    throw std::invalid_argument("contrastive_loss: audio " + shape_str(audio_reps.shape()) + " vs visual " +
                                shape_str(visual_reps.shape()));
  }
  const std::size_t n = audio_reps.rows();
  if (n < 2) throw std::invalid_argument("contrastive_loss: batch of " + std::to_string(n) + " needs at least 2 pairs");
  const Tensor sim = ops::matmul_nt(ops::l2_normalize(audio_reps), ops::l2_normalize(visual_reps));
  const Tensor logits = ops::mul_scalar(sim, ops::exp(ops::scale(log_tau, -1.0)));
  std::vector<int> targets(n);
  std::iota(targets.begin(), targets.end(), 0);
  const Tensor a2v = ops::cross_entropy(logits, targets);
  if (!symmetric) return a2v;
  const Tensor v2a = ops::cross_entropy(ops::transpose(logits), targets);
  return ops::scale(ops::add(a2v, v2a), 0.5);
}

double ContrastiveState::tau() const { return std::exp(log_tau.item()); }

ContrastiveState make_contrastive_state(double initial_tau) {
  if (!(initial_tau > 0.0)) throw std::invalid_argument("contrastive: initial tau must be positive");
  return {Tensor::scalar(std::log(initial_tau), true)};
}

namespace {

Tensor pooled_audio(const MultiwayModel& model, const std::vector<const TokenGrid*>& grids) {
  const auto levels = model.config().input_levels;
  std::vector<TokenGrid> cut;
  cut.reserve(grids.size());
  for (const auto* g : grids) cut.push_back(g->levels == levels ? *g : g->level_range(0, levels));
  std::vector<ModelInput> inputs;
  for (const auto& g : cut) inputs.push_back({&g, nullptr});
  return model.pooled_features(inputs, ForwardMode::audio_only);
}

Tensor pooled_visual(const MultiwayModel& model, const std::vector<const VisualFeatures*>& visuals) {
  std::vector<ModelInput> inputs;
  for (const auto* v : visuals) inputs.push_back({nullptr, v});
  return model.pooled_features(inputs, ForwardMode::visual_only);
}

}  // namespace

Tensor audio_representation(const MultiwayModel& model, const std::vector<const TokenGrid*>& grids) {
  return ops::l2_normalize(pooled_audio(model, grids));
}

Tensor visual_representation(const MultiwayModel& model, const std::vector<const VisualFeatures*>& visuals) {
  return ops::l2_normalize(pooled_visual(model, visuals));
}

RetrievalResult evaluate_retrieval(const MultiwayModel& model, std::span<const Example> data) {
  NoGradGuard ng;
  const std::size_t bs = 16;
  Matrix audio, visual;
  for (std::size_t i = 0; i < data.size(); i += bs) {
    std::vector<const TokenGrid*> g;
    std::vector<const VisualFeatures*> v;
    for (std::size_t j = i; j < std::min(data.size(), i + bs); ++j) {
      g.push_back(&data[j].tokens);
      v.push_back(&data[j].visual);
    }
    const Matrix a = to_matrix(audio_representation(model, g));
    const Matrix b = to_matrix(visual_representation(model, v));
    if (audio.size() == 0) {
      audio.resize(0, a.cols());
      visual.resize(0, b.cols());
    }
    audio.conservativeResize(audio.rows() + a.rows(), Eigen::NoChange);
    audio.bottomRows(a.rows()) = a;
    visual.conservativeResize(visual.rows() + b.rows(), Eigen::NoChange);
    visual.bottomRows(b.rows()) = b;
  }
  return retrieval_eval(audio, visual);
}

double contrastive_step(MultiwayModel& model, ContrastiveState& state, AdamW& opt, std::span<const Example> batch,
                        bool symmetric) {
  std::vector<const TokenGrid*> grids;
  std::vector<const VisualFeatures*> visuals;
  for (const auto& e : batch) {
    grids.push_back(&e.tokens);
    visuals.push_back(&e.visual);
  }
  opt.zero_grad();
  const Tensor loss =
      contrastive_loss(pooled_audio(model, grids), pooled_visual(model, visuals), state.log_tau, symmetric);
  loss.backward();
  opt.step();
  return loss.item();
}

TrainLog contrastive_finetune(MultiwayModel& model, ContrastiveState& state, std::span<const Example> data,
                              const ContrastiveConfig& cfg, const StepCallback& on_step) {
  if (cfg.schedule.batch_size < 2) throw std::invalid_argument("contrastive: batch size must be at least 2");
  auto params = model.encoder_parameters();
  params.push_back(state.log_tau);
  AdamW opt(params, cfg.schedule.adamw());
  Rng rng(derive_seed(cfg.schedule.seed, {0x636f6e74}));
  EpochSampler sampler(data.size(), rng);
  TrainLog log;
  const std::size_t batch_size = std::min(cfg.schedule.batch_size, data.size());
  for (std::int64_t step = 0; step < cfg.schedule.steps; ++step) {
    std::vector<Example> batch;
    for (auto i : sampler.next(batch_size)) batch.push_back(data[i]);
    log.lr.push_back(lr_at(std::min(opt.steps_taken() + 1, cfg.schedule.steps), opt.config()));
    const double loss = contrastive_step(model, state, opt, batch, cfg.symmetric);
    log.loss.push_back(loss);
    if (on_step) on_step(step, loss);
  }
  return log;
}

// ------------------------------------------------------------- classification

ClassifyMode parse_classify_mode(const std::string& s) {
  if (s == "V" || s == "visual") return ClassifyMode::visual;
  if (s == "A" || s == "audio") return ClassifyMode::audio;
  if (s == "V+A" || s == "VA" || s == "joint") return ClassifyMode::joint;
  throw std::invalid_argument("unknown classification mode '" + s + "' (expected V, A or V+A)");
}

std::string to_string(ClassifyMode m) {
  switch (m) {
    case ClassifyMode::visual:
      return "V";
    case ClassifyMode::audio:
      return "A";
    case ClassifyMode::joint:
      return "V+A";
  }
  return "?";
}

ClassifierHead::ClassifierHead(std::size_t d, std::size_t classes_, std::uint64_t seed) : classes(classes_) {
  if (classes_ < 2) throw std::invalid_argument("classifier head: need at least 2 classes");
  Rng rng(derive_seed(seed, {0x68656164}));
  params.add("cls.w", {d, classes_}, 0.02, rng);
  params.add_filled("cls.b", {classes_}, 0.0);
}

Tensor ClassifierHead::logits(const Tensor& features) const {
  return ops::linear(features, params.get("cls.w"), params.get("cls.b"));
}

Tensor classification_features(const MultiwayModel& model, std::span<const Example> batch, ClassifyMode mode) {
  const auto levels = model.config().input_levels;
  std::vector<TokenGrid> grids;
  grids.reserve(batch.size());
  for (const auto& e : batch) grids.push_back(e.tokens.levels == levels ? e.tokens : e.tokens.level_range(0, levels));
  std::vector<ModelInput> inputs;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const VisualFeatures* v = batch[i].visual_dropped ? nullptr : &batch[i].visual;
    inputs.push_back({&grids[i], v});
  }
  switch (mode) {
    case ClassifyMode::visual:
      return model.pooled_features(inputs, ForwardMode::visual_only);
    case ClassifyMode::audio:
      return model.pooled_features(inputs, ForwardMode::audio_only);
    case ClassifyMode::joint:
      return model.pooled_features(inputs, ForwardMode::joint);
  }
  throw std::logic_error("classification_features: bad mode");
}

namespace {

void check_labels(std::span<const Example> data, std::size_t classes) {
  for (const auto& e : data) {
    if (e.labels.empty()) throw std::invalid_argument("classification: example without a label");
    for (const auto& [c, w] : e.labels) {
      if (c >= classes) {
        throw std::out_of_range("classification: label " + std::to_string(c) + " outside [0, " +
                                std::to_string(classes) + ")");
      }
    }
  }
}

// Soft-label cross-entropy: one weighted row per (example, label) pair.
Tensor weighted_label_loss(const Tensor& logits, std::span<const Example> batch, double smoothing) {
  std::vector<std::size_t> rows;
  std::vector<int> targets;
  std::vector<double> weights;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (const auto& [c, w] : batch[i].labels) {
      rows.push_back(i);
      targets.push_back(static_cast<int>(c));
      weights.push_back(w);
    }
  }
  return ops::cross_entropy(ops::gather_rows(logits, rows), targets, smoothing, weights,
                            static_cast<double>(batch.size()));
}

std::size_t primary_label(const Example& e) {
  std::size_t best = e.labels[0].first;
  double w = e.labels[0].second;
  for (const auto& [c, cw] : e.labels) {
    if (cw > w || (cw == w && c < best)) {
      best = c;
      w = cw;
    }
  }
  return best;
}

std::size_t argmax_row(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j) {
    if (row[j] > row[best]) best = j;
  }
  return best;
}

double accuracy_from_logits(const Tensor& logits, std::span<const Example> data) {
  std::size_t correct = 0;
  const std::size_t c = logits.cols();
  for (std::size_t i = 0; i < data.size(); ++i) {
    correct += argmax_row(logits.data().subspan(i * c, c)) == primary_label(data[i]);
  }
  return data.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace

double classify_accuracy(const MultiwayModel& model, const ClassifierHead& head, std::span<const Example> data,
                         ClassifyMode mode, std::size_t batch_size) {
  NoGradGuard no_grad;
  check_labels(data, head.classes);
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const auto part = data.subspan(start, std::min(batch_size, data.size() - start));
    const Tensor logits = head.logits(classification_features(model, part, mode));
    correct += static_cast<std::size_t>(std::lround(accuracy_from_logits(logits, part) * part.size()));
  }
  return data.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(data.size());
}

ClassifyResult classify_finetune(MultiwayModel& model, ClassifierHead& head, std::span<const Example> train,
                                 std::span<const Example> test, ClassifyMode mode, const ClassifyConfig& cfg,
                                 const StepCallback& on_step) {
  check_labels(train, head.classes);
  check_labels(test, head.classes);
  auto params = model.encoder_parameters();
  for (const auto& t : head.params.tensors()) params.push_back(t);
  AdamW opt(params, cfg.schedule.adamw());
  Rng rng(derive_seed(cfg.schedule.seed, {0x636c7366}));
  ClassifyResult result;
  for (std::int64_t step = 0; step < cfg.schedule.steps; ++step) {
    const auto batch = sample_batch(train, cfg.schedule.batch_size, cfg.augment, rng);
    opt.zero_grad();
    const Tensor loss =
        weighted_label_loss(head.logits(classification_features(model, batch, mode)), batch, cfg.label_smoothing);
    loss.backward();
    result.log.lr.push_back(opt.step());
    result.log.loss.push_back(loss.item());
    if (on_step) on_step(step, loss.item());
  }
  result.accuracy = classify_accuracy(model, head, test, mode);
  return result;
}

ClassifyResult linear_probe(const MultiwayModel& model, ClassifierHead& head, std::span<const Example> train,
                            std::span<const Example> test, ClassifyMode mode, const ClassifyConfig& cfg,
                            const StepCallback& on_step) {
  check_labels(train, head.classes);
  check_labels(test, head.classes);
  Tensor train_features, test_features;
  {
    NoGradGuard no_grad;
    std::vector<Tensor> parts;
    for (std::size_t start = 0; start < train.size(); start += 16) {
      parts.push_back(classification_features(model, train.subspan(start, std::min<std::size_t>(16, train.size() - start)), mode));
    }
    train_features = ops::concat_rows(parts).detach();
    parts.clear();
    for (std::size_t start = 0; start < test.size(); start += 16) {
      parts.push_back(classification_features(model, test.subspan(start, std::min<std::size_t>(16, test.size() - start)), mode));
    }
    test_features = ops::concat_rows(parts).detach();
  }
  AdamW opt(head.params.tensors(), cfg.schedule.adamw());
  Rng rng(derive_seed(cfg.schedule.seed, {0x70726f62}));
  EpochSampler sampler(train.size(), rng);
  ClassifyResult result;
  for (std::int64_t step = 0; step < cfg.schedule.steps; ++step) {
    const auto idx = sampler.next(std::min(cfg.schedule.batch_size, train.size()));
    std::vector<Example> batch;
    for (auto i : idx) batch.push_back(train[i]);
    opt.zero_grad();
    const Tensor loss =
        weighted_label_loss(head.logits(ops::gather_rows(train_features, idx)), batch, cfg.label_smoothing);
    loss.backward();
    result.log.lr.push_back(opt.step());
    result.log.loss.push_back(loss.item());
    if (on_step) on_step(step, loss.item());
  }
  NoGradGuard no_grad;
  result.accuracy = accuracy_from_logits(head.logits(test_features), test);
  return result;
}

}  // namespace vab
