#include "vab/ar_baseline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "vab/optim.hpp"

namespace vab {

ArModel::ArModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  if (cfg_.predict_first != 0 || cfg_.predict_levels != cfg_.input_levels) {
    throw std::invalid_argument("ar model: must predict every input level");
  }
  Rng rng(derive_seed(cfg_.seed, {0x6172}));
  const std::size_t d = cfg_.d_emb;
  for (std::size_t l = 0; l < cfg_.input_levels; ++l) {
    params_.add("tok_emb." + std::to_string(l), {cfg_.vocab + 1, d}, cfg_.init_std, rng);
  }
  params_.add("vis_proj.w", {cfg_.visual_dim, d}, cfg_.init_std, rng);
  params_.add_filled("vis_proj.b", {d}, 0.0);
  params_.add("mod_emb.visual", {d}, cfg_.init_std, rng);
  params_.add("mod_emb.audio", {d}, cfg_.init_std, rng);
  params_.add("null_cond", {1, d}, cfg_.init_std, rng);
  TransformerConfig tc{d, cfg_.layers, cfg_.expert_layers, cfg_.heads, cfg_.ffn_mult, true, cfg_.init_std};
  stack_ = TransformerStack(tc, "", params_, rng);
  params_.add_filled("final_ln.g", {d}, 1.0);
  params_.add_filled("final_ln.b", {d}, 0.0);
  for (std::size_t k = 0; k < cfg_.predict_levels; ++k) {
    params_.add("head." + std::to_string(k) + ".w", {d, cfg_.vocab}, cfg_.init_std, rng);
    params_.add_filled("head." + std::to_string(k) + ".b", {cfg_.vocab}, 0.0);
  }
}

Tensor ArModel::embed(const VisualFeatures* visual, std::span<const int> tokens) const {
  const std::size_t F = cfg_.visual_frames;
  Tensor vis;
  if (visual) {
    if (static_cast<std::size_t>(visual->rows()) != F || static_cast<std::size_t>(visual->cols()) != cfg_.visual_dim) {
      throw std::invalid_argument("ar model: visual features have the wrong shape");
    }
    const Tensor x = Tensor::from({F, cfg_.visual_dim}, std::vector<double>(visual->data(), visual->data() + visual->size()));
    vis = ops::linear(x, params_.get("vis_proj.w"), params_.get("vis_proj.b"));
  } else {
    vis = ops::embedding(params_.get("null_cond"), std::vector<int>(F, 0));
  }
  vis = ops::add_row(vis, params_.get("mod_emb.visual"));

  // Audio rows: BOS (mask id of level 0), then tokens, each through its level's table.
  const std::size_t levels = cfg_.input_levels;
  std::vector<std::vector<int>> ids(levels);
  std::vector<std::vector<std::size_t>> rows(levels);
  ids[0].push_back(cfg_.mask_id());
  rows[0].push_back(0);
  for (std::size_t j = 0; j < tokens.size(); ++j) {
    const int id = tokens[j];
    if (id < 0 || id >= cfg_.mask_id()) throw std::out_of_range("ar model: token " + std::to_string(id) + " out of range");
    ids[level_of(j)].push_back(id);
    rows[level_of(j)].push_back(j + 1);
  }
  std::vector<std::pair<Tensor, std::vector<std::size_t>>> parts;
  for (std::size_t l = 0; l < levels; ++l) {
    if (ids[l].empty()) continue;
    parts.emplace_back(ops::embedding(params_.get("tok_emb." + std::to_string(l)), ids[l]), rows[l]);
  }
  const Tensor audio = ops::add_row(ops::scatter_rows(parts, tokens.size() + 1), params_.get("mod_emb.audio"));
  return ops::concat_rows({vis, audio});
}

Tensor ArModel::forward(const VisualFeatures* visual, std::span<const int> tokens) const {
  const std::size_t F = cfg_.visual_frames;
  const std::size_t n = tokens.size() + 1;
  const Tensor x = embed(visual, tokens);
  Routing routing;
  for (std::size_t i = 0; i < F; ++i) routing.visual_rows.push_back(i);
  for (std::size_t i = 0; i < n; ++i) routing.audio_rows.push_back(F + i);
  const Tensor h = stack_.run(x, 1, F + n, routing, 0, cfg_.layers);
  const Tensor audio = ops::layer_norm(ops::slice_rows(h, F, F + n), params_.get("final_ln.g"), params_.get("final_ln.b"));
  // Row j predicts flattened token j, whose level is j mod levels.
  std::vector<std::pair<Tensor, std::vector<std::size_t>>> parts;
  for (std::size_t l = 0; l < cfg_.input_levels && l < n; ++l) {
    std::vector<std::size_t> rows;
    for (std::size_t j = l; j < n; j += cfg_.input_levels) rows.push_back(j);
    const auto name = "head." + std::to_string(l);
    parts.emplace_back(ops::linear(ops::gather_rows(audio, rows), params_.get(name + ".w"), params_.get(name + ".b")),
                       rows);
  }
  return ops::scatter_rows(parts, n);
}

std::vector<double> ArModel::next_logits(const VisualFeatures* visual, std::span<const int> tokens) const {
  NoGradGuard no_grad;
  const Tensor logits = forward(visual, tokens);
  const std::size_t v = logits.cols();
  const auto last = logits.data().subspan((logits.rows() - 1) * v, v);
  return {last.begin(), last.end()};
}

// -------------------------------------------------------------------- ArCache

ArCache::ArCache(const ArModel& model) : model_(model) {
  const auto& c = model.config();
  keys_.assign(c.layers, Matrix(0, static_cast<Eigen::Index>(c.d_emb)));
  values_ = keys_;
}

std::vector<double> ArCache::feed(const Tensor& row, bool visual, std::size_t head_level) {
  NoGradGuard no_grad;
  const auto& c = model_.config();
  const auto& p = model_.params();
  const std::size_t H = c.heads, d = c.d_emb, dh = d / H;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const std::size_t pos = length_;
  Tensor x = row;
  for (std::size_t i = 0; i < c.layers; ++i) {
    const std::string pre = "layer" + std::to_string(i) + ".";
    const Tensor h = ops::layer_norm(x, p.get(pre + "ln1.g"), p.get(pre + "ln1.b"));
    const Tensor q = ops::linear(h, p.get(pre + "attn.q.w"), p.get(pre + "attn.q.b"));
    const Tensor k = ops::linear(h, p.get(pre + "attn.k.w"), p.get(pre + "attn.k.b"));
    const Tensor v = ops::linear(h, p.get(pre + "attn.v.w"), p.get(pre + "attn.v.b"));
    auto& K = keys_[i];
    auto& V = values_[i];
    K.conservativeResize(static_cast<Eigen::Index>(pos + 1), Eigen::NoChange);
    V.conservativeResize(static_cast<Eigen::Index>(pos + 1), Eigen::NoChange);
    std::copy(k.data().begin(), k.data().end(), K.row(static_cast<Eigen::Index>(pos)).data());
    std::copy(v.data().begin(), v.data().end(), V.row(static_cast<Eigen::Index>(pos)).data());
    std::vector<double> attn(d);
    Eigen::VectorXd scores(static_cast<Eigen::Index>(pos + 1));
    for (std::size_t hd = 0; hd < H; ++hd) {
      const auto cols = Eigen::seqN(static_cast<Eigen::Index>(hd * dh), static_cast<Eigen::Index>(dh));
      const Eigen::Map<const Eigen::RowVectorXd> qh(q.data().data() + hd * dh, static_cast<Eigen::Index>(dh));
      scores.noalias() = (K(Eigen::all, cols) * qh.transpose()) * inv_sqrt;
      const double slope = ops::alibi_slope(hd, H);
      for (std::size_t j = 0; j <= pos; ++j) scores(static_cast<Eigen::Index>(j)) -= slope * static_cast<double>(pos - j);
      scores = (scores.array() - scores.maxCoeff()).exp();
      scores /= scores.sum();
      const Eigen::RowVectorXd out = scores.transpose() * V(Eigen::all, cols);
      std::copy(out.data(), out.data() + dh, attn.begin() + static_cast<std::ptrdiff_t>(hd * dh));
    }
    const Tensor a = Tensor::from({1, d}, std::move(attn));
    x = ops::add(x, ops::linear(a, p.get(pre + "attn.o.w"), p.get(pre + "attn.o.b")));
    const Tensor h2 = ops::layer_norm(x, p.get(pre + "ln2.g"), p.get(pre + "ln2.b"));
    const std::string ffn = pre + (i < c.expert_layers ? (visual ? "ffn_visual" : "ffn_audio") : "ffn");
    const Tensor f = ops::linear(ops::gelu(ops::linear(h2, p.get(ffn + ".w1"), p.get(ffn + ".b1"))),
                                 p.get(ffn + ".w2"), p.get(ffn + ".b2"));
    x = ops::add(x, f);
  }
  ++length_;
  if (visual) return {};
  const Tensor y = ops::layer_norm(x, p.get("final_ln.g"), p.get("final_ln.b"));
  const auto name = "head." + std::to_string(head_level);
  const Tensor logits = ops::linear(y, p.get(name + ".w"), p.get(name + ".b"));
  return {logits.data().begin(), logits.data().end()};
}

std::vector<double> ArCache::start(const VisualFeatures* visual) {
  NoGradGuard no_grad;
  const auto& c = model_.config();
  const auto& p = model_.params();
  if (length_ != 0) throw std::logic_error("ar cache: already started");
  Tensor vis;
  if (visual) {
    const Tensor x =
        Tensor::from({c.visual_frames, c.visual_dim}, std::vector<double>(visual->data(), visual->data() + visual->size()));
    vis = ops::linear(x, p.get("vis_proj.w"), p.get("vis_proj.b"));
  } else {
    vis = ops::embedding(p.get("null_cond"), std::vector<int>(c.visual_frames, 0));
  }
  vis = ops::add_row(vis, p.get("mod_emb.visual"));
  for (std::size_t f = 0; f < c.visual_frames; ++f) feed(ops::slice_rows(vis, f, f + 1), true, 0);
  const std::vector<int> bos{c.mask_id()};
  const Tensor row = ops::add_row(ops::embedding(p.get("tok_emb.0"), bos), p.get("mod_emb.audio"));
  return feed(row, false, 0);
}

std::vector<double> ArCache::push(int token, std::size_t flat_index) {
  NoGradGuard no_grad;
  const auto& c = model_.config();
  const auto& p = model_.params();
  if (token < 0 || token >= c.mask_id()) throw std::out_of_range("ar cache: token out of range");
  const std::vector<int> id{token};
  const Tensor row = ops::add_row(ops::embedding(p.get("tok_emb." + std::to_string(model_.level_of(flat_index))), id),
                                  p.get("mod_emb.audio"));
  return feed(row, false, model_.level_of(flat_index + 1));
}

// ------------------------------------------------------------------- decoding

int sample_top_k(std::span<const double> logits, std::size_t k, Rng& rng) {
  if (logits.empty() || k == 0) throw std::invalid_argument("sample_top_k: empty candidate set");
  std::vector<std::size_t> idx(logits.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t keep = std::min(k, logits.size());
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  double mx = -std::numeric_limits<double>::infinity();
  for (auto i : idx) mx = std::max(mx, logits[i]);
  double total = 0.0;
  for (auto i : idx) total += std::exp(logits[i] - mx);
  const double u = rng.uniform() * total;
  double acc = 0.0;
  for (auto i : idx) {
    acc += std::exp(logits[i] - mx);
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(idx.back());
}

ArDecodeResult ar_decode(const ArModel& model, const VisualFeatures& visual, std::size_t timesteps,
                         const ArDecodeConfig& cfg) {
  const std::size_t levels = model.config().input_levels;
  const std::size_t total = levels * timesteps;
  Rng rng(derive_seed(cfg.seed, {0x61726463}));
  std::vector<int> flat;
  flat.reserve(total);
  ArDecodeResult r;
  if (cfg.kv_cache) {
    ArCache cache(model);
    auto logits = cache.start(&visual);
    ++r.invocations;
    for (std::size_t j = 0; j < total; ++j) {
      flat.push_back(sample_top_k(logits, cfg.top_k, rng));
      if (j + 1 < total) {
        logits = cache.push(flat.back(), j);
        ++r.invocations;
      }
    }
  } else {
    for (std::size_t j = 0; j < total; ++j) {
      const auto logits = model.next_logits(&visual, flat);
      ++r.invocations;
      flat.push_back(sample_top_k(logits, cfg.top_k, rng));
    }
  }
  r.tokens = TokenGrid(levels, timesteps);
  for (std::size_t j = 0; j < total; ++j) r.tokens.at(j % levels, j / levels) = flat[j];
  return r;
}

TrainLog ar_train(ArModel& model, std::span<const Example> data, const TrainSchedule& schedule, double visual_dropout,
                  const StepCallback& on_step) {
  AdamW opt(model.params().tensors(), schedule.adamw());
  Rng rng(derive_seed(schedule.seed, {0x61727472}));
  const std::size_t levels = model.config().input_levels;
  TrainLog log;
  for (std::int64_t step = 0; step < schedule.steps; ++step) {
    opt.zero_grad();
    Tensor loss;
    for (std::size_t b = 0; b < schedule.batch_size; ++b) {
      const Example& e = data[rng.below(data.size())];
      const bool drop = rng.bernoulli(visual_dropout);
      const std::size_t S = e.tokens.steps;
      std::vector<int> flat(levels * S);
      for (std::size_t t = 0; t < S; ++t) {
        for (std::size_t l = 0; l < levels; ++l) flat[t * levels + l] = e.tokens.at(l, t);
      }
      const Tensor logits =
          model.forward(drop ? nullptr : &e.visual, std::span<const int>(flat).first(flat.size() - 1));
      const Tensor lb = ops::scale(ops::cross_entropy(logits, flat), 1.0 / static_cast<double>(schedule.batch_size));
      loss = loss.defined() ? ops::add(loss, lb) : lb;
    }
    loss.backward();
    log.lr.push_back(opt.step());
    log.loss.push_back(loss.item());
    if (on_step) on_step(step, loss.item());
  }
  return log;
}

}  // namespace vab
