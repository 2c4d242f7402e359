#include <doctest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "vab/synthdata.hpp"

using namespace vab;
using test::truncated_normal_mean;

namespace {

TokenGrid ramp_grid(std::size_t levels, std::size_t steps) {
  TokenGrid g(levels, steps);
  for (std::size_t i = 0; i < g.tokens.size(); ++i) g.tokens[i] = int(i % 97);
  return g;
}

Example example_of(std::size_t label, int offset) {
  Example e;
  e.tokens = ramp_grid(4, 500);
  for (auto& t : e.tokens.tokens) t += offset;
  e.visual = VisualFeatures::Constant(10, 3, double(offset));
  for (Eigen::Index r = 0; r < 10; ++r) e.visual(r, 0) = double(r) + 100.0 * offset;
  e.labels = {{label, 1.0}};
  return e;
}

}  // namespace

TEST_CASE("generate_pair is deterministic and shaped") {
  DatasetConfig cfg;
  const auto a = generate_pair(cfg, {1, 2}, 77);
  const auto b = generate_pair(cfg, {1, 2}, 77);
  CHECK(a.waveform.samples == b.waveform.samples);
  CHECK(a.visual == b.visual);
  CHECK(a.waveform.samples.size() == 160000);
  CHECK(a.visual.rows() == 10);
  CHECK(a.visual.cols() == 32);
  CHECK_THROWS_AS(generate_pair(cfg, {4, 0}, 1), std::out_of_range);
}

TEST_CASE("noise-free pairs are factorized across modalities") {
  DatasetConfig cfg;
  cfg.audio_noise = 0;
  cfg.visual_noise = 0;
  const auto a = generate_pair(cfg, {2, 0}, 5);
  const auto b = generate_pair(cfg, {2, 3}, 5);
  CHECK(a.waveform.samples == b.waveform.samples);
  CHECK(a.visual != b.visual);
  const auto c = generate_pair(cfg, {1, 3}, 5);
  CHECK(c.visual == b.visual);
  CHECK(c.waveform.samples != b.waveform.samples);
}

TEST_CASE("frequency banks are disjoint multiples of the frame rate") {
  DatasetConfig cfg;
  std::set<double> seen;
  for (std::size_t a = 0; a < cfg.audio_factors; ++a) {
    for (double f : frequency_bank(cfg, a)) {
      CHECK(std::fmod(f, 50.0) == doctest::Approx(0.0));
      CHECK(f < 1600.0);
      CHECK(seen.insert(f).second);
    }
  }
}

TEST_CASE("visual rows converge to the factor mean") {
  DatasetConfig cfg;
  cfg.event_gain = 0.0;  // isolate the factor mean
  const auto mean = visual_mean(cfg, 1);
  const std::size_t n = 1000;
  std::vector<double> acc(cfg.visual_dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = generate_pair(cfg, {0, 1}, 1000 + i);
    for (Eigen::Index r = 0; r < s.visual.rows(); ++r)
      for (std::size_t j = 0; j < cfg.visual_dim; ++j) acc[j] += s.visual(r, Eigen::Index(j));
  }
  const double rows = double(n * cfg.visual_frames());
  const double tol = 3.0 * cfg.visual_noise / std::sqrt(rows);
  for (std::size_t j = 0; j < cfg.visual_dim; ++j) CHECK(std::abs(acc[j] / rows - mean[j]) <= tol);
}

TEST_CASE("dataset plan sizes and pairing modes") {
  DatasetConfig cfg;
  cfg.pairs_per_class = 3;
  CHECK(dataset_plan(cfg, 0).size() == 48);
  CHECK(dataset_plan(cfg, 0)[0].seed != dataset_plan(cfg, 1)[0].seed);
  cfg.pairing = Pairing::aligned;
  cfg.align_prob = 1.0;
  const auto plan = dataset_plan(cfg, 0);
  CHECK(plan.size() == 48);
  for (const auto& s : plan) CHECK(s.label.audio_factor == s.label.visual_factor % cfg.audio_factors);
}

TEST_CASE("mask ratio: truncation bounds and mean against the closed form") {
  Rng rng(123);
  const MaskRatioConfig c;
  const std::size_t n = 1000000;
  double sum = 0, lo = 1, hi = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = sample_mask_ratio(rng, c);
    sum += r;
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  CHECK(lo >= 0.5);
  CHECK(hi <= 1.0);
  CHECK(std::abs(sum / double(n) - truncated_normal_mean(0.55, 0.25, 0.5, 1.0)) < 0.002);
  MaskRatioConfig degenerate;
  degenerate.stddev = 0;
  CHECK(sample_mask_ratio(rng, degenerate) == 0.55);
}

TEST_CASE("apply_mask masks whole timesteps") {
  Rng rng(8);
  const auto g = ramp_grid(4, 500);
  SUBCASE("ratio 1 masks everything") {
    const auto [m, spec] = apply_mask(g, 1.0, 256, rng);
    for (int t : m.tokens) CHECK(t == 256);
    CHECK(spec.steps.size() == 500);
  }
  SUBCASE("ratio 0.5 masks exactly 250 joint timesteps") {
    const auto [m, spec] = apply_mask(g, 0.5, 256, rng);
    CHECK(spec.steps.size() == 250);
    CHECK(spec.masked_tokens(4) == 1000);
    std::set<std::size_t> uniq(spec.steps.begin(), spec.steps.end());
    CHECK(uniq.size() == 250);
    for (std::size_t t = 0; t < 500; ++t) {
      const bool masked = spec.is_masked(0, t);
      for (std::size_t l = 0; l < 4; ++l) {
        if (masked) CHECK(m.at(l, t) == 256);
        else CHECK(m.at(l, t) == g.at(l, t));
      }
    }
  }
  SUBCASE("per-level masking picks independent sets") {
    const auto [m, spec] = apply_mask(g, 0.6, 256, rng, true);
    REQUIRE(spec.per_level.size() == 4);
    for (const auto& s : spec.per_level) CHECK(s.size() == 300);
    CHECK(spec.per_level[0] != spec.per_level[1]);
  }
  CHECK_THROWS_AS(apply_mask(g, 1.5, 256, rng), std::invalid_argument);
  CHECK_THROWS_AS(apply_mask(g, -0.1, 256, rng), std::invalid_argument);
}

TEST_CASE("temporal mixup splices at whole seconds") {
  const auto a = example_of(3, 1);
  const auto b = example_of(7, 2);
  const auto m0 = temporal_mixup_at(a, b, 0);
  CHECK(m0.tokens == b.tokens);
  CHECK(m0.visual == b.visual);
  const auto m10 = temporal_mixup_at(a, b, 10);
  CHECK(m10.tokens == a.tokens);
  CHECK(m10.visual == a.visual);
  const auto m4 = temporal_mixup_at(a, b, 4);
  for (std::size_t l = 0; l < 4; ++l) {
    for (std::size_t t = 0; t < 500; ++t) CHECK(m4.tokens.at(l, t) == (t < 200 ? a : b).tokens.at(l, t));
  }
  for (Eigen::Index r = 0; r < 10; ++r) CHECK(m4.visual.row(r) == (r < 4 ? a : b).visual.row(r));
  REQUIRE(m4.labels.size() == 2);
  double wa = 0, wb = 0;
  for (const auto& [c, w] : m4.labels) (c == 3 ? wa : wb) += w;
  CHECK(wa == doctest::Approx(0.4));
  CHECK(wb == doctest::Approx(0.6));
}

TEST_CASE("temporal roll is a cyclic group action") {
  const auto e = example_of(1, 1);
  CHECK(temporal_roll_by(e, 0).tokens == e.tokens);
  CHECK(temporal_roll_by(e, 10).tokens == e.tokens);
  for (std::size_t r = 0; r <= 10; ++r) {
    const auto back = temporal_roll_by(temporal_roll_by(e, r), 10 - r);
    CHECK(back.tokens == e.tokens);
    CHECK(back.visual == e.visual);
  }
  const auto r3 = temporal_roll_by(e, 3);
  CHECK(r3.tokens.at(2, 150) == e.tokens.at(2, 0));
  CHECK(r3.visual.row(3) == e.visual.row(0));
}

TEST_CASE("visual dropout rates") {
  const VisualFeatures v = VisualFeatures::Ones(10, 4);
  Rng rng(99);
  const std::size_t n = 100000;
  auto rate = [&](double p) {
    std::size_t dropped = 0;
    for (std::size_t i = 0; i < n; ++i) dropped += visual_dropout(v, p, rng).has_value() ? 0 : 1;
    return double(dropped) / double(n);
  };
  CHECK(rate(0.0) == 0.0);
  CHECK(rate(1.0) == 1.0);
  CHECK(std::abs(rate(0.1) - 0.1) <= 0.003);
  CHECK_THROWS(visual_dropout(v, 1.1, rng));
}

TEST_CASE("manifest round-trips") {
  std::vector<ManifestEntry> entries = {{0, 11, {1, 2}, "00000.wav", "00000.vabv"},
                                        {1, 12, {3, 0}, "00001.wav", "00001.vabv"}};
  const std::string p = "/tmp/vab_test_manifest.txt";
  write_manifest(entries, p);
  const auto back = read_manifest(p);
  REQUIRE(back.size() == 2);
  CHECK(back[1].seed == 12);
  CHECK(back[1].label == ClassLabel{3, 0});
  CHECK(back[0].visual_path == "00000.vabv");
}
