#include "vab/model.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace vab {

// ---------------------------------------------------------------- ParamStore

Tensor& ParamStore::add(const std::string& name, Shape shape, double init_std, Rng& rng) {
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = rng.normal(0.0, init_std);
  insert(name, Tensor::from(std::move(shape), std::move(values), true));
  return items_.back().second;
}

Tensor& ParamStore::add_filled(const std::string& name, Shape shape, double value) {
  insert(name, Tensor::full(std::move(shape), value, true));
  return items_.back().second;
}

void ParamStore::insert(const std::string& name, Tensor t) {
  if (index_.count(name)) throw std::invalid_argument("parameter '" + name + "' registered twice");
  index_[name] = items_.size();
  items_.emplace_back(name, std::move(t));
}

const Tensor& ParamStore::get(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return items_[it->second].second;
}

std::vector<Tensor> ParamStore::tensors() const {
  std::vector<Tensor> out;
  out.reserve(items_.size());
  for (const auto& [name, t] : items_) out.push_back(t);
  return out;
}

std::vector<Tensor> ParamStore::tensors_with_prefix(const std::vector<std::string>& prefixes) const {
  std::vector<Tensor> out;
  for (const auto& [name, t] : items_) {
    for (const auto& p : prefixes) {
      if (name.compare(0, p.size(), p) == 0) {
        out.push_back(t);
        break;
      }
    }
  }
  return out;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : items_) n += t.numel();
  return n;
}

void ParamStore::assign_from(const ParamStore& other) {
  if (other.items_.size() != items_.size()) throw std::invalid_argument("assign_from: parameter count differs");
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const auto& [name, src] = other.items_[i];
    auto& dst = items_[i].second;
    if (name != items_[i].first || src.shape() != dst.shape()) {
      throw std::invalid_argument("assign_from: parameter '" + name + "' does not match '" + items_[i].first + "'");
    }
    std::copy(src.data().begin(), src.data().end(), dst.mutable_data().begin());
  }
}

ParamStore ParamStore::deep_copy() const {
  ParamStore out;
  for (const auto& [name, t] : items_) out.insert(name, t.clone(true));
  return out;
}

// ---------------------------------------------------------- TransformerStack

TransformerStack::TransformerStack(TransformerConfig cfg, std::string prefix, ParamStore& store, Rng& rng)
    : cfg_(cfg), prefix_(std::move(prefix)), store_(&store) {
  const std::size_t d = cfg_.d_model;
  const std::size_t f = d * cfg_.ffn_mult;
  const double out_std = cfg_.init_std / std::sqrt(2.0 * static_cast<double>(cfg_.layers));
  for (std::size_t i = 0; i < cfg_.layers; ++i) {
    const auto p = layer_prefix(i);
    store.add_filled(p + "ln1.g", {d}, 1.0);
    store.add_filled(p + "ln1.b", {d}, 0.0);
    for (const char* m : {"q", "k", "v"}) {
      store.add(p + "attn." + m + ".w", {d, d}, cfg_.init_std, rng);
      store.add_filled(p + "attn." + m + ".b", {d}, 0.0);
    }
    store.add(p + "attn.o.w", {d, d}, out_std, rng);
    store.add_filled(p + "attn.o.b", {d}, 0.0);
    store.add_filled(p + "ln2.g", {d}, 1.0);
    store.add_filled(p + "ln2.b", {d}, 0.0);
    std::vector<std::string> ffns;
    if (i < cfg_.expert_layers) {
      ffns = {"ffn_visual", "ffn_audio"};
    } else {
      ffns = {"ffn"};
    }
    for (const auto& n : ffns) {
      store.add(p + n + ".w1", {d, f}, cfg_.init_std, rng);
      store.add_filled(p + n + ".b1", {f}, 0.0);
      store.add(p + n + ".w2", {f, d}, out_std, rng);
      store.add_filled(p + n + ".b2", {d}, 0.0);
    }
  }
}

TransformerStack::TransformerStack(TransformerConfig cfg, std::string prefix, const ParamStore& store)
    : cfg_(cfg), prefix_(std::move(prefix)), store_(&store) {
  for (std::size_t i = 0; i < cfg_.layers; ++i) {
    const auto p = layer_prefix(i);
    const std::string ffn = i < cfg_.expert_layers ? "ffn_audio" : "ffn";
    for (const auto& n : {p + "ln1.g", p + "attn.q.w", p + "attn.o.w", p + "ln2.g", p + ffn + ".w1"}) {
      store.get(n);
    }
  }
}

std::string TransformerStack::layer_prefix(std::size_t layer) const {
  return prefix_ + "layer" + std::to_string(layer) + ".";
}

Tensor TransformerStack::ffn(const Tensor& h, const std::string& name) const {
  const auto& s = *store_;
  const Tensor hidden = ops::gelu(ops::linear(h, s.get(name + ".w1"), s.get(name + ".b1")));
  return ops::linear(hidden, s.get(name + ".w2"), s.get(name + ".b2"));
}

Tensor TransformerStack::run(const Tensor& x_in, std::size_t batch, std::size_t seq_len, const Routing& routing,
                             std::size_t layer_begin, std::size_t layer_end) const {
  if (layer_end > cfg_.layers || layer_begin > layer_end) {
    throw std::out_of_range("transformer: layer range [" + std::to_string(layer_begin) + ", " +
                            std::to_string(layer_end) + ") outside " + std::to_string(cfg_.layers) + " layers");
  }
  if (x_in.rows() != batch * seq_len || x_in.cols() != cfg_.d_model) {
    throw std::invalid_argument("transformer: input " + shape_str(x_in.shape()) + " does not match batch " +
                                std::to_string(batch) + " × seq " + std::to_string(seq_len) + " × d " +
                                std::to_string(cfg_.d_model));
  }
  const auto& s = *store_;
  const ops::AttentionSpec spec{batch, seq_len, cfg_.heads, true, cfg_.causal};
  Tensor x = x_in;
  for (std::size_t i = layer_begin; i < layer_end; ++i) {
    const auto p = layer_prefix(i);
    Tensor h = ops::layer_norm(x, s.get(p + "ln1.g"), s.get(p + "ln1.b"));
    const Tensor q = ops::linear(h, s.get(p + "attn.q.w"), s.get(p + "attn.q.b"));
    const Tensor k = ops::linear(h, s.get(p + "attn.k.w"), s.get(p + "attn.k.b"));
    const Tensor v = ops::linear(h, s.get(p + "attn.v.w"), s.get(p + "attn.v.b"));
    const Tensor a = ops::attention(q, k, v, spec);
    x = ops::add(x, ops::linear(a, s.get(p + "attn.o.w"), s.get(p + "attn.o.b")));

    h = ops::layer_norm(x, s.get(p + "ln2.g"), s.get(p + "ln2.b"));
    Tensor f;
    if (i >= cfg_.expert_layers) {
      f = ffn(h, p + "ffn");
    } else if (routing.visual_rows.empty()) {
      f = ffn(h, p + "ffn_audio");
    } else if (routing.audio_rows.empty()) {
      f = ffn(h, p + "ffn_visual");
    } else {
      const Tensor fv = ffn(ops::gather_rows(h, routing.visual_rows), p + "ffn_visual");
      const Tensor fa = ffn(ops::gather_rows(h, routing.audio_rows), p + "ffn_audio");
      f = ops::scatter_rows({{fv, routing.visual_rows}, {fa, routing.audio_rows}}, h.rows());
    }
    x = ops::add(x, f);
  }
  return x;
}

// --------------------------------------------------------------- ModelConfig

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("model config: " + m); };
  if (d_emb == 0 || layers == 0 || heads == 0) fail("d_emb, layers and heads must be positive");
  if (expert_layers > layers) fail("expert_layers exceeds layers");
  if (d_emb % heads != 0) fail("d_emb " + std::to_string(d_emb) + " not divisible by heads " + std::to_string(heads));
  if (vocab < 2) fail("vocab must be at least 2");
  if (input_levels == 0) fail("input_levels must be positive");
  if (predict_levels == 0 || predict_first + predict_levels > input_levels) fail("predicted levels outside input levels");
  if (visual_dim == 0 || visual_frames == 0) fail("visual_dim and visual_frames must be positive");
  if (ffn_mult == 0) fail("ffn_mult must be positive");
  if (!(init_std > 0.0)) fail("init_std must be positive");
}

std::string ModelConfig::to_text() const {
  std::ostringstream o;
  o.precision(17);
  o << "d_emb=" << d_emb << "\nlayers=" << layers << "\nexpert_layers=" << expert_layers << "\nheads=" << heads
    << "\nffn_mult=" << ffn_mult << "\nvocab=" << vocab << "\ninput_levels=" << input_levels
    << "\npredict_first=" << predict_first << "\npredict_levels=" << predict_levels << "\nvisual_dim=" << visual_dim
    << "\nvisual_frames=" << visual_frames << "\ninit_std=" << init_std << "\nseed=" << seed << "\n";
  return o.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("model config: malformed line '" + line + "'");
    const auto key = line.substr(0, eq);
    const auto val = line.substr(eq + 1);
    auto u = [&] { return static_cast<std::size_t>(std::stoull(val)); };
    if (key == "d_emb") c.d_emb = u();
    else if (key == "layers") c.layers = u();
    else if (key == "expert_layers") c.expert_layers = u();
    else if (key == "heads") c.heads = u();
    else if (key == "ffn_mult") c.ffn_mult = u();
    else if (key == "vocab") c.vocab = u();
    else if (key == "input_levels") c.input_levels = u();
    else if (key == "predict_first") c.predict_first = u();
    else if (key == "predict_levels") c.predict_levels = u();
    else if (key == "visual_dim") c.visual_dim = u();
    else if (key == "visual_frames") c.visual_frames = u();
    else if (key == "init_std") c.init_std = std::stod(val);
    else if (key == "seed") c.seed = std::stoull(val);
    else throw std::invalid_argument("model config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

ModelConfig ModelConfig::coarse_to_fine(const ModelConfig& backbone, std::size_t total_levels) {
  ModelConfig c = backbone;
  c.expert_layers = 0;
  c.predict_first = backbone.input_levels;
  c.input_levels = total_levels;
  if (total_levels <= backbone.input_levels) throw std::invalid_argument("coarse_to_fine: no fine levels");
  c.predict_levels = total_levels - backbone.input_levels;
  c.seed = derive_seed(backbone.seed, {0xc2f});
  c.validate();
  return c;
}

// ------------------------------------------------------------- MultiwayModel

namespace {

TransformerConfig stack_config(const ModelConfig& c) {
  return TransformerConfig{c.d_emb, c.layers, c.expert_layers, c.heads, c.ffn_mult, false, c.init_std};
}

}  // namespace

MultiwayModel::MultiwayModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(derive_seed(cfg_.seed, {0x6d6f64656c}));
  build(rng);
}

MultiwayModel::MultiwayModel(ModelConfig cfg, ParamStore params) : cfg_(std::move(cfg)), params_(std::move(params)) {
  cfg_.validate();
  bind();
}

MultiwayModel::MultiwayModel(const MultiwayModel& other) : cfg_(other.cfg_), params_(other.params_.deep_copy()) {
  bind();
}

MultiwayModel& MultiwayModel::operator=(const MultiwayModel& other) {
  if (this != &other) {
    cfg_ = other.cfg_;
    params_ = other.params_.deep_copy();
    bind();
  }
  return *this;
}

MultiwayModel::MultiwayModel(MultiwayModel&& other) noexcept
    : cfg_(std::move(other.cfg_)), params_(std::move(other.params_)) {
  bind();
}

MultiwayModel& MultiwayModel::operator=(MultiwayModel&& other) noexcept {
  cfg_ = std::move(other.cfg_);
  params_ = std::move(other.params_);
  bind();
  return *this;
}

void MultiwayModel::build(Rng& rng) {
  const std::size_t d = cfg_.d_emb;
  for (std::size_t l = 0; l < cfg_.input_levels; ++l) {
    params_.add("tok_emb." + std::to_string(l), {cfg_.vocab + 1, d}, cfg_.init_std, rng);
  }
  params_.add("vis_proj.w", {cfg_.visual_dim, d}, cfg_.init_std, rng);
  params_.add_filled("vis_proj.b", {d}, 0.0);
  params_.add("mod_emb.visual", {d}, cfg_.init_std, rng);
  params_.add("mod_emb.audio", {d}, cfg_.init_std, rng);
  params_.add("null_cond", {1, d}, cfg_.init_std, rng);
  stack_ = TransformerStack(stack_config(cfg_), "", params_, rng);
  params_.add_filled("final_ln.g", {d}, 1.0);
  params_.add_filled("final_ln.b", {d}, 0.0);
  for (std::size_t k = 0; k < cfg_.predict_levels; ++k) {
    params_.add("head." + std::to_string(k) + ".w", {d, cfg_.vocab}, cfg_.init_std, rng);
    params_.add_filled("head." + std::to_string(k) + ".b", {cfg_.vocab}, 0.0);
  }
}

void MultiwayModel::bind() {
  stack_ = TransformerStack(stack_config(cfg_), "", params_);
  for (std::size_t l = 0; l < cfg_.input_levels; ++l) {
    const auto& t = params_.get("tok_emb." + std::to_string(l));
    if (t.shape() != Shape{cfg_.vocab + 1, cfg_.d_emb}) {
      throw std::invalid_argument("model: tok_emb." + std::to_string(l) + " has shape " + shape_str(t.shape()));
    }
  }
  params_.get("vis_proj.w");
  params_.get("null_cond");
  for (std::size_t k = 0; k < cfg_.predict_levels; ++k) params_.get("head." + std::to_string(k) + ".w");
}

std::size_t MultiwayModel::sequence_length(ForwardMode mode, std::size_t steps) const {
  switch (mode) {
    case ForwardMode::joint:
      return cfg_.visual_frames + steps;
    case ForwardMode::audio_only:
      return steps;
    case ForwardMode::visual_only:
      return cfg_.visual_frames;
  }
  return 0;
}

std::size_t MultiwayModel::audio_row(std::size_t b, std::size_t t, std::size_t steps) const {
  return b * (cfg_.visual_frames + steps) + cfg_.visual_frames + t;
}

void MultiwayModel::check_input(const ModelInput& in, ForwardMode mode) const {
  if (mode != ForwardMode::visual_only) {
    if (!in.tokens) throw std::invalid_argument("model: audio tokens required for this forward mode");
    const auto& g = *in.tokens;
    if (g.levels != cfg_.input_levels) {
      throw std::invalid_argument("model: grid has " + std::to_string(g.levels) + " levels, expected " +
                                  std::to_string(cfg_.input_levels));
    }
    if (g.steps == 0) throw std::invalid_argument("model: empty token grid");
    for (std::size_t l = 0; l < g.levels; ++l) {
      for (std::size_t t = 0; t < g.steps; ++t) {
        const int id = g.at(l, t);
        if (id < 0 || id > cfg_.mask_id()) {
          throw std::out_of_range("model: token " + std::to_string(id) + " at level " + std::to_string(l) +
                                  " outside [0, mask id " + std::to_string(cfg_.mask_id()) + "]");
        }
        if (l < cfg_.predict_first && id == cfg_.mask_id()) {
          throw std::invalid_argument("model: masked conditioning token at level " + std::to_string(l) + ", step " +
                                      std::to_string(t));
        }
      }
    }
  }
  if (mode != ForwardMode::audio_only && in.visual) {
    const auto& v = *in.visual;
    if (static_cast<std::size_t>(v.rows()) != cfg_.visual_frames ||
        static_cast<std::size_t>(v.cols()) != cfg_.visual_dim) {
      throw std::invalid_argument("model: visual features " + std::to_string(v.rows()) + "×" +
                                  std::to_string(v.cols()) + ", expected " + std::to_string(cfg_.visual_frames) +
                                  "×" + std::to_string(cfg_.visual_dim));
    }
  }
}

Tensor MultiwayModel::embed(const std::vector<ModelInput>& batch, ForwardMode mode) const {
  if (batch.empty()) throw std::invalid_argument("model: empty batch");
  for (const auto& in : batch) check_input(in, mode);
  const std::size_t B = batch.size();
  const std::size_t F = cfg_.visual_frames;
  const std::size_t S = mode == ForwardMode::visual_only ? 0 : batch[0].tokens->steps;
  for (const auto& in : batch) {
    if (mode != ForwardMode::visual_only && in.tokens->steps != S) {
      throw std::invalid_argument("model: batch mixes grids of " + std::to_string(S) + " and " +
                                  std::to_string(in.tokens->steps) + " steps");
    }
  }
  const std::size_t L = sequence_length(mode, S);

  Tensor audio;
  if (mode != ForwardMode::visual_only) {
    std::vector<int> ids(B * S);
    for (std::size_t l = 0; l < cfg_.input_levels; ++l) {
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t t = 0; t < S; ++t) ids[b * S + t] = batch[b].tokens->at(l, t);
      }
      const Tensor e = ops::embedding(params_.get("tok_emb." + std::to_string(l)), ids);
      audio = audio.defined() ? ops::add(audio, e) : e;
    }
    audio = ops::add_row(audio, params_.get("mod_emb.audio"));
    if (mode == ForwardMode::audio_only) return audio;
  }

  // Visual rows: projected features for conditioned samples, the null
  // embedding otherwise.
  std::vector<std::size_t> cond_samples, null_samples;
  for (std::size_t b = 0; b < B; ++b) (batch[b].visual ? cond_samples : null_samples).push_back(b);
  const std::size_t base = mode == ForwardMode::joint ? L : F;
  std::vector<std::pair<Tensor, std::vector<std::size_t>>> parts;
  if (!cond_samples.empty()) {
    std::vector<double> x;
    x.reserve(cond_samples.size() * F * cfg_.visual_dim);
    std::vector<std::size_t> rows;
    for (auto b : cond_samples) {
      const auto& v = *batch[b].visual;
      x.insert(x.end(), v.data(), v.data() + v.size());
      for (std::size_t f = 0; f < F; ++f) rows.push_back(b * base + f);
    }
    const Tensor xv = Tensor::from({cond_samples.size() * F, cfg_.visual_dim}, std::move(x));
    parts.emplace_back(ops::add_row(ops::linear(xv, params_.get("vis_proj.w"), params_.get("vis_proj.b")),
                                    params_.get("mod_emb.visual")),
                       std::move(rows));
  }
  if (!null_samples.empty()) {
    const std::vector<int> zeros(null_samples.size() * F, 0);
    std::vector<std::size_t> rows;
    for (auto b : null_samples) {
      for (std::size_t f = 0; f < F; ++f) rows.push_back(b * base + f);
    }
    parts.emplace_back(ops::add_row(ops::embedding(params_.get("null_cond"), zeros), params_.get("mod_emb.visual")),
                       std::move(rows));
  }
  if (mode == ForwardMode::joint) {
    std::vector<std::size_t> rows(B * S);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t t = 0; t < S; ++t) rows[b * S + t] = b * L + F + t;
    }
    parts.emplace_back(audio, std::move(rows));
  }
  return ops::scatter_rows(parts, B * L);
}

Routing MultiwayModel::routing_for(std::size_t batch, std::size_t steps, ForwardMode mode) const {
  Routing r;
  const std::size_t F = cfg_.visual_frames;
  if (mode == ForwardMode::audio_only) {
    r.audio_rows.resize(batch * steps);
    for (std::size_t i = 0; i < r.audio_rows.size(); ++i) r.audio_rows[i] = i;
  } else if (mode == ForwardMode::visual_only) {
    r.visual_rows.resize(batch * F);
    for (std::size_t i = 0; i < r.visual_rows.size(); ++i) r.visual_rows[i] = i;
  } else {
    const std::size_t L = F + steps;
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t f = 0; f < F; ++f) r.visual_rows.push_back(b * L + f);
      for (std::size_t t = 0; t < steps; ++t) r.audio_rows.push_back(b * L + F + t);
    }
  }
  return r;
}

Tensor MultiwayModel::run_layers(const Tensor& embedded, std::size_t batch, ForwardMode mode,
                                 std::size_t layer_end) const {
  if (batch == 0 || embedded.rows() % batch != 0) {
    throw std::invalid_argument("model: " + std::to_string(embedded.rows()) + " rows do not split into batch " +
                                std::to_string(batch));
  }
  const std::size_t L = embedded.rows() / batch;
  std::size_t steps = 0;
  switch (mode) {
    case ForwardMode::joint:
      if (L <= cfg_.visual_frames) {
        throw std::invalid_argument("model: joint sequence of " + std::to_string(L) + " rows has no audio block");
      }
      steps = L - cfg_.visual_frames;
      break;
    case ForwardMode::audio_only:
      steps = L;
      break;
    case ForwardMode::visual_only:
      if (L != cfg_.visual_frames) {
        throw std::invalid_argument("model: visual-only sequence of " + std::to_string(L) + " rows, expected " +
                                    std::to_string(cfg_.visual_frames));
      }
      break;
  }
  if (mode != ForwardMode::joint && layer_end > cfg_.expert_layers) {
    throw std::invalid_argument("model: uni-modal forward may only run the " + std::to_string(cfg_.expert_layers) +
                                " expert layers, requested " + std::to_string(layer_end));
  }
  return stack_.run(embedded, batch, L, routing_for(batch, steps, mode), 0, layer_end);
}

Tensor MultiwayModel::forward_hidden(const std::vector<ModelInput>& batch) const {
  const Tensor h = run_layers(embed(batch, ForwardMode::joint), batch.size(), ForwardMode::joint, cfg_.layers);
  return ops::layer_norm(h, params_.get("final_ln.g"), params_.get("final_ln.b"));
}

std::vector<Tensor> MultiwayModel::head_logits(const Tensor& hidden, const std::vector<std::size_t>& rows) const {
  const Tensor g = ops::gather_rows(hidden, rows);
  std::vector<Tensor> out;
  out.reserve(cfg_.predict_levels);
  for (std::size_t k = 0; k < cfg_.predict_levels; ++k) {
    const auto n = std::to_string(k);
    out.push_back(ops::linear(g, params_.get("head." + n + ".w"), params_.get("head." + n + ".b")));
  }
  return out;
}

std::vector<Tensor> MultiwayModel::forward(const std::vector<ModelInput>& batch) const {
  const Tensor hidden = forward_hidden(batch);
  const std::size_t S = batch[0].tokens->steps;
  std::vector<std::size_t> rows;
  rows.reserve(batch.size() * S);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    for (std::size_t t = 0; t < S; ++t) rows.push_back(audio_row(b, t, S));
  }
  return head_logits(hidden, rows);
}

Tensor MultiwayModel::pooled_features(const std::vector<ModelInput>& batch, ForwardMode mode) const {
  const std::size_t depth = cfg_.expert_layers > 0 ? cfg_.expert_layers : cfg_.layers;
  const Tensor e = embed(batch, mode);
  const Tensor h = run_layers(e, batch.size(), mode, depth);
  return ops::mean_pool_segments(h, h.rows() / batch.size());
}

std::vector<Tensor> MultiwayModel::encoder_parameters() const {
  std::vector<std::string> prefixes = {"tok_emb.", "vis_proj.", "mod_emb.", "null_cond"};
  for (std::size_t i = 0; i < cfg_.expert_layers; ++i) prefixes.push_back(stack_.layer_prefix(i));
  return params_.tensors_with_prefix(prefixes);
}

Tensor alibi_bias(std::size_t seq_len, std::size_t heads) {
  if (heads == 0) throw std::invalid_argument("alibi_bias: heads must be positive");
  std::vector<double> v(heads * seq_len * seq_len);
  for (std::size_t h = 0; h < heads; ++h) {
    const double slope = ops::alibi_slope(h, heads);
    for (std::size_t i = 0; i < seq_len; ++i) {
      for (std::size_t j = 0; j < seq_len; ++j) {
        const double dist = i > j ? static_cast<double>(i - j) : static_cast<double>(j - i);
        v[(h * seq_len + i) * seq_len + j] = -slope * dist;
      }
    }
  }
  return Tensor::from({heads, seq_len, seq_len}, std::move(v));
}

}  // namespace vab
