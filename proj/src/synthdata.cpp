#include "vab/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace vab {

namespace {

constexpr std::size_t kBankSize = 4;
constexpr std::size_t kSinusoids = 3;
constexpr std::size_t kBursts = 2;
constexpr double kBaseLevel = 0.25;
constexpr double kBurstLevel = 1.0;
constexpr double kPeak = 0.8;

enum StreamTag : std::uint64_t { kEvents = 1, kAudio = 2, kVisual = 3, kBank = 11, kMean = 12, kEventVec = 13, kAlign = 14 };

std::vector<double> unit_gaussian(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double norm = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

// Per-token-frame burst indicator shared by both modalities.
std::vector<char> burst_frames(const DatasetConfig& cfg, std::uint64_t seed) {
  const std::size_t steps = cfg.token_steps();
  const std::size_t tps = cfg.tokens_per_second();
  std::vector<char> on(steps, 0);
  Rng rng(derive_seed(seed, {kEvents}));
  const std::size_t min_len = std::max<std::size_t>(1, (2 * tps) / 5);  // 0.4 s
  const std::size_t max_len = std::min(steps, (8 * tps) / 5);          // 1.6 s
  for (std::size_t b = 0; b < kBursts; ++b) {
    const std::size_t len = min_len + rng.below(max_len - min_len + 1);
    const std::size_t start = rng.below(steps - len + 1);
    for (std::size_t t = start; t < start + len; ++t) on[t] = 1;
  }
  return on;
}

}  // namespace

void DatasetConfig::validate() const {
  if (audio_factors < 2 || visual_factors < 2) throw std::invalid_argument("dataset: need at least 2 audio and 2 visual factors");
  if (duration_seconds < 1) throw std::invalid_argument("dataset: duration must be at least one second");
  if (frame_size == 0 || sample_rate % static_cast<int>(frame_size) != 0)
    throw std::invalid_argument("dataset: sample_rate must be a multiple of frame_size");
  if (visual_rate < 1) throw std::invalid_argument("dataset: visual_rate must be >= 1");
  const double hop_hz = static_cast<double>(sample_rate) / static_cast<double>(frame_size);
  const auto candidates = static_cast<std::size_t>(std::floor((0.1 * sample_rate - 3 * hop_hz) / hop_hz + 1e-9)) + 1;
  if (audio_factors * kBankSize > candidates)
    throw std::invalid_argument("dataset: too many audio factors for the frequency range");
  if (visual_dim == 0) throw std::invalid_argument("dataset: visual_dim must be positive");
  if (audio_noise < 0 || visual_noise < 0) throw std::invalid_argument("dataset: noise levels must be >= 0");
  if (align_prob < 0 || align_prob > 1) throw std::invalid_argument("dataset: align_prob outside [0,1]");
  if (pairs_per_class == 0) throw std::invalid_argument("dataset: pairs_per_class must be positive");
}

std::vector<double> frequency_bank(const DatasetConfig& cfg, std::size_t audio_factor) {
  if (audio_factor >= cfg.audio_factors) throw std::out_of_range("frequency_bank: audio factor out of range");
  // Multiples of the frame rate keep every frame an exact number of periods,
  // ending below 10% of the sample rate (inside the 64-coefficient band at 16 kHz).
  const double hop_hz = static_cast<double>(cfg.sample_rate) / static_cast<double>(cfg.frame_size);
  std::vector<double> candidates;
  for (double f = 2 * hop_hz; f <= 0.1 * cfg.sample_rate - hop_hz + 1e-9; f += hop_hz) candidates.push_back(f);
  Rng rng(derive_seed(cfg.seed, {kBank}));
  for (std::size_t i = candidates.size(); i > 1; --i) std::swap(candidates[i - 1], candidates[rng.below(i)]);
  return {candidates.begin() + static_cast<std::ptrdiff_t>(audio_factor * kBankSize),
          candidates.begin() + static_cast<std::ptrdiff_t>((audio_factor + 1) * kBankSize)};
}

std::vector<double> visual_mean(const DatasetConfig& cfg, std::size_t visual_factor) {
  if (visual_factor >= cfg.visual_factors) throw std::out_of_range("visual_mean: visual factor out of range");
  Rng rng(derive_seed(cfg.seed, {kMean, visual_factor}));
  return unit_gaussian(rng, cfg.visual_dim);
}

std::vector<double> event_vector(const DatasetConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, {kEventVec}));
  return unit_gaussian(rng, cfg.visual_dim);
}

PairedSample generate_pair(const DatasetConfig& cfg, ClassLabel label, std::uint64_t seed) {
  cfg.validate();
  if (label.audio_factor >= cfg.audio_factors || label.visual_factor >= cfg.visual_factors) {
    throw std::out_of_range("generate_pair: class (" + std::to_string(label.audio_factor) + ", " +
                            std::to_string(label.visual_factor) + ") out of range");
  }
  PairedSample out;
  out.label = label;
  out.seed = seed;
  const auto bursts = burst_frames(cfg, seed);

  // Audio: three sinusoids from the factor's bank under a burst envelope.
  {
    Rng rng(derive_seed(seed, {kAudio, label.audio_factor}));
    auto bank = frequency_bank(cfg, label.audio_factor);
    for (std::size_t i = 0; i < kSinusoids; ++i) std::swap(bank[i], bank[i + rng.below(bank.size() - i)]);
    double amp[kSinusoids], phase[kSinusoids], amp_sum = 0.0;
    for (std::size_t i = 0; i < kSinusoids; ++i) {
      amp[i] = 0.5 + 0.5 * rng.uniform();
      phase[i] = 2.0 * std::numbers::pi * rng.uniform();
      amp_sum += amp[i];
    }
    const std::size_t n = cfg.samples_per_clip();
    out.waveform.sample_rate = cfg.sample_rate;
    out.waveform.samples.resize(n);
    const double sr = static_cast<double>(cfg.sample_rate);
    for (std::size_t s = 0; s < n; ++s) {
      const double t = static_cast<double>(s) / sr;
      double tone = 0.0;
      for (std::size_t i = 0; i < kSinusoids; ++i) tone += amp[i] * std::sin(2.0 * std::numbers::pi * bank[i] * t + phase[i]);
      const double env = bursts[s / cfg.frame_size] ? kBurstLevel : kBaseLevel;
      out.waveform.samples[s] = kPeak * env * tone / amp_sum;
      if (cfg.audio_noise > 0.0) out.waveform.samples[s] += cfg.audio_noise * rng.normal();
    }
  }

  // Visual: factor mean plus noise, shifted along the shared event vector by
  // the fraction of each second covered by a burst.
  {
    Rng rng(derive_seed(seed, {kVisual, label.visual_factor}));
    const auto mean = visual_mean(cfg, label.visual_factor);
    const auto event = event_vector(cfg);
    const std::size_t frames = cfg.visual_frames();
    const std::size_t per_frame = cfg.token_steps() / frames;
    out.visual.resize(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(cfg.visual_dim));
    for (std::size_t f = 0; f < frames; ++f) {
      std::size_t covered = 0;
      for (std::size_t t = f * per_frame; t < (f + 1) * per_frame; ++t) covered += bursts[t] ? 1 : 0;
      const double overlap = static_cast<double>(covered) / static_cast<double>(per_frame);
      for (std::size_t j = 0; j < cfg.visual_dim; ++j) {
        double x = mean[j] + overlap * cfg.event_gain * event[j];
        if (cfg.visual_noise > 0.0) x += cfg.visual_noise * rng.normal();
        out.visual(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(j)) = x;
      }
    }
  }
  return out;
}

std::vector<SampleSpec> dataset_plan(const DatasetConfig& cfg, std::uint64_t split) {
  cfg.validate();
  std::vector<SampleSpec> plan;
  if (cfg.pairing == Pairing::factorized) {
    for (std::size_t a = 0; a < cfg.audio_factors; ++a)
      for (std::size_t v = 0; v < cfg.visual_factors; ++v)
        for (std::size_t j = 0; j < cfg.pairs_per_class; ++j)
          plan.push_back({{a, v}, derive_seed(cfg.seed, {split, a, v, j})});
  } else {
    const std::size_t per_visual = cfg.audio_factors * cfg.pairs_per_class;
    for (std::size_t v = 0; v < cfg.visual_factors; ++v) {
      for (std::size_t j = 0; j < per_visual; ++j) {
        Rng rng(derive_seed(cfg.seed, {kAlign, split, v, j}));
        const std::size_t a = rng.bernoulli(cfg.align_prob) ? v % cfg.audio_factors : rng.below(cfg.audio_factors);
        plan.push_back({{a, v}, derive_seed(cfg.seed, {split, v, j, kAlign})});
      }
    }
  }
  return plan;
}

std::vector<PairedSample> generate_dataset(const DatasetConfig& cfg, std::uint64_t split) {
  std::vector<PairedSample> out;
  for (const auto& s : dataset_plan(cfg, split)) out.push_back(generate_pair(cfg, s.label, s.seed));
  return out;
}

double sample_mask_ratio(Rng& rng, const MaskRatioConfig& cfg) {
  if (cfg.stddev <= 0.0) return std::clamp(cfg.mean, cfg.low, cfg.high);
  for (;;) {
    const double x = rng.normal(cfg.mean, cfg.stddev);
    if (x >= cfg.low && x <= cfg.high) return x;
  }
}

bool MaskSpec::is_masked(std::size_t level, std::size_t step) const {
  const auto& set = per_level.empty() ? steps : per_level.at(level);
  return std::binary_search(set.begin(), set.end(), step);
}

std::size_t MaskSpec::masked_tokens(std::size_t levels) const {
  if (per_level.empty()) return steps.size() * levels;
  std::size_t n = 0;
  for (const auto& s : per_level) n += s.size();
  return n;
}

namespace {
std::vector<std::size_t> choose_steps(std::size_t total, std::size_t count, Rng& rng) {
  std::vector<std::size_t> idx(total);
  for (std::size_t i = 0; i < total; ++i) idx[i] = i;
  for (std::size_t i = 0; i < count; ++i) std::swap(idx[i], idx[i + rng.below(total - i)]);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}
}  // namespace

std::pair<TokenGrid, MaskSpec> apply_mask(const TokenGrid& grid, double ratio, int mask_id, Rng& rng, bool per_level) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw std::invalid_argument("apply_mask: ratio outside [0, 1]");
  const auto count = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(grid.steps)));
  MaskSpec spec;
  spec.ratio = ratio;
  spec.mask_id = mask_id;
  TokenGrid masked = grid;
  if (per_level) {
    for (std::size_t l = 0; l < grid.levels; ++l) {
      spec.per_level.push_back(choose_steps(grid.steps, count, rng));
      for (auto t : spec.per_level.back()) masked.at(l, t) = mask_id;
    }
  } else {
    spec.steps = choose_steps(grid.steps, count, rng);
    for (std::size_t l = 0; l < grid.levels; ++l)
      for (auto t : spec.steps) masked.at(l, t) = mask_id;
  }
  return {std::move(masked), std::move(spec)};
}

namespace {
std::size_t clip_seconds(const Example& e, const ClipTiming& timing) {
  if (e.tokens.steps % timing.tokens_per_second != 0)
    throw std::invalid_argument("augmentation: token steps are not whole seconds");
  const std::size_t secs = e.tokens.steps / timing.tokens_per_second;
  if (static_cast<std::size_t>(e.visual.rows()) != secs * timing.frames_per_second)
    throw std::invalid_argument("augmentation: visual frames do not match clip length");
  return secs;
}

std::vector<std::pair<std::size_t, double>> merge_labels(const Example& a, double wa, const Example& b, double wb) {
  std::vector<std::pair<std::size_t, double>> out;
  auto add = [&out](std::size_t c, double w) {
    if (w <= 0.0) return;
    for (auto& [cc, ww] : out) {
      if (cc == c) {
        ww += w;
        return;
      }
    }
    out.emplace_back(c, w);
  };
  for (const auto& [c, w] : a.labels) add(c, w * wa);
  for (const auto& [c, w] : b.labels) add(c, w * wb);
  return out;
}
}  // namespace

Example temporal_mixup_at(const Example& a, const Example& b, std::size_t seconds, const ClipTiming& timing) {
  const std::size_t secs = clip_seconds(a, timing);
  if (clip_seconds(b, timing) != secs || a.tokens.levels != b.tokens.levels || a.visual.cols() != b.visual.cols())
    throw std::invalid_argument("temporal_mixup: samples differ in shape");
  if (seconds > secs) throw std::out_of_range("temporal_mixup: break point beyond clip");
  Example out = b;
  const std::size_t cut = seconds * timing.tokens_per_second;
  for (std::size_t l = 0; l < a.tokens.levels; ++l)
    for (std::size_t t = 0; t < cut; ++t) out.tokens.at(l, t) = a.tokens.at(l, t);
  const auto rows = static_cast<Eigen::Index>(seconds * timing.frames_per_second);
  out.visual.topRows(rows) = a.visual.topRows(rows);
  out.visual_dropped = a.visual_dropped && b.visual_dropped;
  const double w = static_cast<double>(seconds) / static_cast<double>(secs);
  out.labels = merge_labels(a, w, b, 1.0 - w);
  return out;
}

Example temporal_mixup(const Example& a, const Example& b, Rng& rng, const ClipTiming& timing) {
  const std::size_t secs = clip_seconds(a, timing);
  return temporal_mixup_at(a, b, rng.below(secs + 1), timing);
}

Example temporal_roll_by(const Example& e, std::size_t seconds, const ClipTiming& timing) {
  const std::size_t secs = clip_seconds(e, timing);
  const std::size_t r = seconds % secs;
  Example out = e;
  const std::size_t S = e.tokens.steps;
  const std::size_t shift = r * timing.tokens_per_second;
  for (std::size_t l = 0; l < e.tokens.levels; ++l)
    for (std::size_t t = 0; t < S; ++t) out.tokens.at(l, (t + shift) % S) = e.tokens.at(l, t);
  const auto F = static_cast<std::size_t>(e.visual.rows());
  const std::size_t vshift = r * timing.frames_per_second;
  for (std::size_t f = 0; f < F; ++f)
    out.visual.row(static_cast<Eigen::Index>((f + vshift) % F)) = e.visual.row(static_cast<Eigen::Index>(f));
  return out;
}

Example temporal_roll(const Example& e, Rng& rng, const ClipTiming& timing) {
  return temporal_roll_by(e, rng.below(clip_seconds(e, timing)), timing);
}

std::optional<VisualFeatures> visual_dropout(const VisualFeatures& v, double p, Rng& rng) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("visual_dropout: p outside [0, 1]");
  if (rng.uniform() < p) return std::nullopt;
  return v;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << "# id seed audio_factor visual_factor wav visual\n";
  for (const auto& e : entries) {
    f << e.id << ' ' << e.seed << ' ' << e.label.audio_factor << ' ' << e.label.visual_factor << ' ' << e.wav_path
      << ' ' << e.visual_path << '\n';
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open manifest " + path);
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    ManifestEntry e;
    if (!(is >> e.id >> e.seed >> e.label.audio_factor >> e.label.visual_factor >> e.wav_path >> e.visual_path)) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed manifest line");
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace vab
