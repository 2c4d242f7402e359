#include "vab/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "vab/errors.hpp"

namespace vab {

namespace {

std::vector<ConfigKey> build_keys() {
  std::vector<ConfigKey> k = {
      {"seed", "0", "master seed for every stage"},
      {"data.audio_factors", "4", "audio factors C_a"},
      {"data.visual_factors", "4", "visual factors C_v"},
      {"data.pairs_per_class", "8", "clips per composite class and split"},
      {"data.duration", "10", "clip length in seconds"},
      {"data.visual_dim", "32", "visual feature dimension"},
      {"data.audio_noise", "0.01", "audio noise standard deviation"},
      {"data.visual_noise", "0.1", "visual noise standard deviation"},
      {"data.event_gain", "1", "visual shift during audio events"},
      {"data.pairing", "factorized", "factorized | aligned"},
      {"data.align_prob", "1", "aligned pairing: probability that a = v mod C_a"},
      {"data.splits", "train,valid,test,probe", "splits written by datagen"},
      {"codec.levels", "12", "RVQ levels K"},
      {"codec.entries", "256", "entries per level V_c"},
      {"codec.feature_dim", "64", "DCT coefficients kept per frame"},
      {"codec.frame_size", "320", "samples per frame"},
      {"codec.sample_rate", "16000", "sample rate in Hz"},
      {"codec.kmeans_iters", "10", "Lloyd iterations per level"},
      {"codec.frame_stride", "10", "keep every n-th frame when training codebooks"},
      {"model.d_emb", "128", "embedding width"},
      {"model.layers", "8", "transformer layers N"},
      {"model.expert_layers", "4", "modal-expert layers N1"},
      {"model.heads", "4", "attention heads"},
      {"model.ffn_mult", "4", "FFN width multiplier"},
      {"model.init_std", "0.02", "weight init standard deviation"},
      {"model.coarse_levels", "4", "levels modelled by the backbone"},
      {"contrastive.tau", "0.05", "initial temperature"},
      {"contrastive.symmetric", "true", "average both retrieval directions"},
      {"classify.mode", "V+A", "V | A | V+A"},
      {"probe.target", "linear", "linear (frozen-backbone probe) | eval (metric embedder)"},
      {"probe.hidden", "32", "evaluation probe hidden width"},
      {"probe.eval_steps", "400", "evaluation probe training steps"},
      {"decode.steps", "16", "iterative decoding steps t_T"},
      {"decode.cfg_scale", "5", "classifier-free guidance scale s"},
      {"decode.alpha0", "10.5", "initial Gumbel temperature"},
      {"decode.c2f_steps", "36", "coarse-to-fine decoding steps"},
      {"decode.levels", "4", "codec levels to generate (4, or 12 with a c2f checkpoint)"},
      {"decode.count", "8", "clips to generate"},
      {"ar.top_k", "256", "AR baseline top-k"},
      {"ar.kv_cache", "false", "AR baseline incremental key/value cache"},
      {"bench.axes", "cfg_scale,alpha0,steps", "swept axes: cfg_scale, alpha0, steps"},
      {"bench.cfg_scale", "1,3,5,7,11", "guidance scales"},
      {"bench.alpha0", "4.5,10.5,12.5,15.5,20.5,25.5", "initial temperatures"},
      {"bench.steps", "8,16,36,48", "decoding steps"},
      {"bench.seeds", "0", "comma separated seeds"},
      {"bench.clips", "8", "eval clips per cell"},
      {"bench.threads", "1", "worker threads over cells"},
      {"in.data", "", "dataset directory written by datagen"},
      {"in.codec", "", "codebook file"},
      {"in.backbone", "", "backbone checkpoint"},
      {"in.c2f", "", "coarse-to-fine checkpoint"},
      {"in.eval_probe", "", "evaluation probe checkpoint"},
      {"in.reference", "", "directory of reference WAVs (evaluate)"},
      {"in.generated", "", "directory of generated WAVs (evaluate)"},
  };
  // Per-stage optimisation keys.
  struct Stage {
    const char* ns;
    const char* steps;
    const char* batch;
    const char* lr;
    const char* warmup;
    const char* mixup;
    const char* roll;
    const char* dropout;
  };
  const Stage stages[] = {
      {"pretrain", "1000", "8", "2e-4", "100", "0.5", "0.1", "0.1"},
      {"c2f", "1000", "8", "2e-4", "100", "0.5", "0.1", "0.1"},
      {"contrastive", "300", "16", "1e-4", "30", "0", "0", "0"},
      {"classify", "300", "16", "1e-4", "30", "0.5", "0.1", "0"},
      {"probe", "300", "32", "1e-3", "30", "0", "0", "0"},
      {"ar", "200", "4", "2e-4", "20", "0", "0", "0.1"},
  };
  for (const auto& s : stages) {
    const std::string ns = s.ns;
    k.push_back({ns + ".steps", s.steps, "optimizer steps"});
    k.push_back({ns + ".batch_size", s.batch, "batch size"});
    k.push_back({ns + ".lr", s.lr, "peak learning rate"});
    k.push_back({ns + ".warmup", s.warmup, "linear warmup steps"});
    k.push_back({ns + ".weight_decay", "1e-5", "decoupled weight decay"});
    k.push_back({ns + ".beta1", "0.9", "AdamW beta1"});
    k.push_back({ns + ".beta2", "0.95", "AdamW beta2"});
    k.push_back({ns + ".grad_clip", "1.0", "global gradient norm clip (0 = off)"});
    k.push_back({ns + ".mixup_prob", s.mixup, "temporal mixup probability"});
    k.push_back({ns + ".roll_prob", s.roll, "temporal rolling probability"});
    k.push_back({ns + ".visual_dropout", s.dropout, "visual dropout probability"});
    k.push_back({ns + ".label_smoothing", "0.1", "label smoothing"});
  }
  for (const char* ns : {"pretrain", "c2f"}) {
    k.push_back({std::string(ns) + ".mask_mean", "0.55", "mask ratio mean"});
    k.push_back({std::string(ns) + ".mask_std", "0.25", "mask ratio standard deviation"});
    k.push_back({std::string(ns) + ".per_level_mask", "false", "mask levels independently"});
  }
  return k;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

Config::Config() {
  for (const auto& k : config_keys()) values_[k.key] = k.default_value;
}

void Config::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  load_text(ss.str(), path);
}

void Config::load_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError(origin + ":" + std::to_string(n) + ": expected key=value");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void Config::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ValidationError("override '" + assignment + "' is not key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::set(const std::string& key, const std::string& value) {
  // "axes" is accepted as shorthand for bench.axes.
  const std::string k = key == "axes" ? "bench.axes" : key;
  if (!values_.count(k)) throw ValidationError("unknown config key '" + key + "'");
  values_[k] = value;
}

const std::string& Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("unknown config key '" + key + "'");
  return it->second;
}

namespace {
template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ValidationError("config key '" + key + "': cannot parse '" + v + "'");
  return out;
}
}  // namespace

std::int64_t Config::get_int(const std::string& key) const { return parse_number<std::int64_t>(key, get(key)); }
std::uint64_t Config::get_u64(const std::string& key) const { return parse_number<std::uint64_t>(key, get(key)); }
std::size_t Config::get_size(const std::string& key) const { return parse_number<std::size_t>(key, get(key)); }
double Config::get_double(const std::string& key) const { return parse_number<double>(key, get(key)); }

bool Config::get_bool(const std::string& key) const {
  const auto& v = get(key);
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ValidationError("config key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<std::string> Config::get_list(const std::string& key) const {
  std::vector<std::string> out;
  std::istringstream in(get(key));
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string Config::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

std::string Config::hash_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_text())));
  return buf;
}

std::string config_help_text() {
  std::ostringstream o;
  for (const auto& k : config_keys()) {
    o << "  " << k.key << " = " << (k.default_value.empty() ? "\"\"" : k.default_value) << "    " << k.help << "\n";
  }
  return o.str();
}

DatasetConfig dataset_config(const Config& c) {
  DatasetConfig d;
  d.audio_factors = c.get_size("data.audio_factors");
  d.visual_factors = c.get_size("data.visual_factors");
  d.pairs_per_class = c.get_size("data.pairs_per_class");
  d.duration_seconds = static_cast<int>(c.get_int("data.duration"));
  d.sample_rate = static_cast<int>(c.get_int("codec.sample_rate"));
  d.frame_size = c.get_size("codec.frame_size");
  d.visual_dim = c.get_size("data.visual_dim");
  d.audio_noise = c.get_double("data.audio_noise");
  d.visual_noise = c.get_double("data.visual_noise");
  d.event_gain = c.get_double("data.event_gain");
  const auto& p = c.get("data.pairing");
  if (p == "factorized") d.pairing = Pairing::factorized;
  else if (p == "aligned") d.pairing = Pairing::aligned;
  else throw ValidationError("data.pairing must be factorized or aligned, got '" + p + "'");
  d.align_prob = c.get_double("data.align_prob");
  d.seed = c.get_u64("seed");
  try {
    d.validate();
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
  return d;
}

CodecConfig codec_config(const Config& c) {
  CodecConfig k;
  k.sample_rate = static_cast<int>(c.get_int("codec.sample_rate"));
  k.frame_size = c.get_size("codec.frame_size");
  k.feature_dim = c.get_size("codec.feature_dim");
  k.levels = c.get_size("codec.levels");
  k.entries = c.get_size("codec.entries");
  k.kmeans_iters = static_cast<int>(c.get_int("codec.kmeans_iters"));
  k.frame_stride = c.get_size("codec.frame_stride");
  k.seed = derive_seed(c.get_u64("seed"), {0xc0dec});
  try {
    k.validate();
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
  return k;
}

ModelConfig backbone_config(const Config& c, std::size_t visual_dim, std::size_t visual_frames) {
  ModelConfig m;
  m.d_emb = c.get_size("model.d_emb");
  m.layers = c.get_size("model.layers");
  m.expert_layers = c.get_size("model.expert_layers");
  m.heads = c.get_size("model.heads");
  m.ffn_mult = c.get_size("model.ffn_mult");
  m.init_std = c.get_double("model.init_std");
  m.vocab = c.get_size("codec.entries");
  m.input_levels = c.get_size("model.coarse_levels");
  m.predict_first = 0;
  m.predict_levels = m.input_levels;
  m.visual_dim = visual_dim;
  m.visual_frames = visual_frames;
  m.seed = derive_seed(c.get_u64("seed"), {0xbacb});
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
  return m;
}

TrainSchedule schedule_config(const Config& c, const std::string& ns) {
  TrainSchedule s;
  s.batch_size = c.get_size(ns + ".batch_size");
  s.steps = c.get_int(ns + ".steps");
  s.warmup_steps = c.get_int(ns + ".warmup");
  s.base_lr = c.get_double(ns + ".lr");
  s.weight_decay = c.get_double(ns + ".weight_decay");
  s.beta1 = c.get_double(ns + ".beta1");
  s.beta2 = c.get_double(ns + ".beta2");
  s.max_grad_norm = c.get_double(ns + ".grad_clip");
  s.seed = derive_seed(c.get_u64("seed"), {fnv1a(ns)});
  if (s.batch_size == 0 || s.steps < 0 || s.warmup_steps < 0 || !(s.base_lr >= 0.0)) {
    throw ValidationError(ns + ": batch size, steps, warmup and lr must be non-negative (batch > 0)");
  }
  if (s.warmup_steps > s.steps) {
    throw ValidationError(ns + ".warmup (" + std::to_string(s.warmup_steps) + ") exceeds " + ns + ".steps (" +
                          std::to_string(s.steps) + ")");
  }
  return s;
}

namespace {
AugmentConfig augment_config(const Config& c, const std::string& ns) {
  AugmentConfig a;
  a.mixup_prob = c.get_double(ns + ".mixup_prob");
  a.roll_prob = c.get_double(ns + ".roll_prob");
  a.visual_dropout = c.get_double(ns + ".visual_dropout");
  for (double p : {a.mixup_prob, a.roll_prob, a.visual_dropout}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(ns + ": augmentation probabilities must lie in [0, 1]");
  }
  const auto fps = static_cast<std::size_t>(c.get_int("codec.sample_rate")) / c.get_size("codec.frame_size");
  a.timing = {fps, 1};
  return a;
}
}  // namespace

PretrainConfig pretrain_config(const Config& c, const std::string& ns) {
  PretrainConfig p;
  p.schedule = schedule_config(c, ns);
  p.augment = augment_config(c, ns);
  p.label_smoothing = c.get_double(ns + ".label_smoothing");
  p.mask_ratio.mean = c.get_double(ns + ".mask_mean");
  p.mask_ratio.stddev = c.get_double(ns + ".mask_std");
  p.per_level_mask = c.get_bool(ns + ".per_level_mask");
  return p;
}

ContrastiveConfig contrastive_config(const Config& c) {
  ContrastiveConfig k;
  k.schedule = schedule_config(c, "contrastive");
  k.initial_tau = c.get_double("contrastive.tau");
  k.symmetric = c.get_bool("contrastive.symmetric");
  return k;
}

ClassifyConfig classify_config(const Config& c, const std::string& ns, std::size_t classes) {
  ClassifyConfig k;
  k.schedule = schedule_config(c, ns);
  k.augment = augment_config(c, ns);
  k.label_smoothing = c.get_double(ns + ".label_smoothing");
  k.classes = classes;
  return k;
}

DecodeConfig decode_config(const Config& c) {
  DecodeConfig d;
  d.steps = c.get_size("decode.steps");
  d.cfg_scale = c.get_double("decode.cfg_scale");
  d.alpha0 = c.get_double("decode.alpha0");
  d.c2f_steps = c.get_size("decode.c2f_steps");
  d.seed = derive_seed(c.get_u64("seed"), {0xdec0de});
  try {
    d.validate();
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
  return d;
}

}  // namespace vab
