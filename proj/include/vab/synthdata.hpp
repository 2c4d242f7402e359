#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vab/rng.hpp"
#include "vab/types.hpp"

namespace vab {

enum class Pairing {
  factorized,  // composite classes cover the full audio × visual product
  aligned,     // audio factor follows the visual factor with probability align_prob
};

struct DatasetConfig {
  std::size_t audio_factors = 4;
  std::size_t visual_factors = 4;
  std::size_t pairs_per_class = 8;
  int duration_seconds = 10;
  int sample_rate = 16000;
  std::size_t frame_size = 320;  // codec hop; token rate = sample_rate / frame_size
  int visual_rate = 1;           // frames per second
  std::size_t visual_dim = 32;
  double audio_noise = 0.01;
  double visual_noise = 0.1;
  double event_gain = 1.0;
  Pairing pairing = Pairing::factorized;
  double align_prob = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t classes() const { return audio_factors * visual_factors; }
  std::size_t samples_per_clip() const { return static_cast<std::size_t>(duration_seconds) * sample_rate; }
  std::size_t token_steps() const { return (samples_per_clip() + frame_size - 1) / frame_size; }
  std::size_t tokens_per_second() const { return static_cast<std::size_t>(sample_rate) / frame_size; }
  std::size_t visual_frames() const { return static_cast<std::size_t>(duration_seconds * visual_rate); }
};

struct ClassLabel {
  std::size_t audio_factor = 0;
  std::size_t visual_factor = 0;

  std::size_t composite(std::size_t visual_factors) const { return audio_factor * visual_factors + visual_factor; }
  bool operator==(const ClassLabel&) const = default;
};

struct PairedSample {
  Waveform waveform;
  VisualFeatures visual;
  ClassLabel label;
  std::uint64_t seed = 0;
};

/// Deterministic in (cfg, label, seed). Audio draws only from streams keyed by
/// the audio factor and visual only from streams keyed by the visual factor;
/// event timing is shared so the modalities co-vary in time.
PairedSample generate_pair(const DatasetConfig& cfg, ClassLabel label, std::uint64_t seed);

// Composite-class list for one split (0 = train, 1 = validation, 2 = test, ...).
struct SampleSpec {
  ClassLabel label;
  std::uint64_t seed = 0;
};
std::vector<SampleSpec> dataset_plan(const DatasetConfig& cfg, std::uint64_t split);
std::vector<PairedSample> generate_dataset(const DatasetConfig& cfg, std::uint64_t split);

// Dataset-level constants derived from the master seed.
std::vector<double> frequency_bank(const DatasetConfig& cfg, std::size_t audio_factor);
std::vector<double> visual_mean(const DatasetConfig& cfg, std::size_t visual_factor);
std::vector<double> event_vector(const DatasetConfig& cfg);

struct MaskRatioConfig {
  double mean = 0.55;
  double stddev = 0.25;
  double low = 0.5;
  double high = 1.0;
};

// Rejection sampling of N(mean, stddev²) restricted to [low, high].
double sample_mask_ratio(Rng& rng, const MaskRatioConfig& cfg = {});

struct MaskSpec {
  double ratio = 0.0;
  int mask_id = 0;
  // Joint masking: masked timesteps shared by every level. Per-level masking
  // fills `per_level` instead (one sorted set per level).
  std::vector<std::size_t> steps;
  std::vector<std::vector<std::size_t>> per_level;

  bool is_masked(std::size_t level, std::size_t step) const;
  std::size_t masked_tokens(std::size_t levels) const;
};

/// Replaces round(ratio·S) uniformly chosen timesteps by `mask_id` in every
/// level (or, with per_level, an independent choice per level).
std::pair<TokenGrid, MaskSpec> apply_mask(const TokenGrid& grid, double ratio, int mask_id, Rng& rng,
                                          bool per_level = false);

/// Token/visual training example with soft composite labels.
struct Example {
  TokenGrid tokens;
  VisualFeatures visual;
  bool visual_dropped = false;
  std::vector<std::pair<std::size_t, double>> labels;  // (composite class, weight)
};

struct ClipTiming {
  std::size_t tokens_per_second = 50;
  std::size_t frames_per_second = 1;
};

// First `seconds` from a, the rest from b; labels weighted by the split.
Example temporal_mixup_at(const Example& a, const Example& b, std::size_t seconds, const ClipTiming& timing = {});
Example temporal_mixup(const Example& a, const Example& b, Rng& rng, const ClipTiming& timing = {});

// Circular shift forward in time by whole seconds.
Example temporal_roll_by(const Example& e, std::size_t seconds, const ClipTiming& timing = {});
Example temporal_roll(const Example& e, Rng& rng, const ClipTiming& timing = {});

// nullopt stands for the learned null-condition embedding.
std::optional<VisualFeatures> visual_dropout(const VisualFeatures& v, double p, Rng& rng);

struct ManifestEntry {
  std::size_t id = 0;
  std::uint64_t seed = 0;
  ClassLabel label;
  std::string wav_path;
  std::string visual_path;
};

void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path);
std::vector<ManifestEntry> read_manifest(const std::string& path);

}  // namespace vab
