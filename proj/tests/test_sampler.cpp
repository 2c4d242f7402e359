#include <doctest.h>

#include <cmath>
#include <map>
#include <numbers>

#include "oracles.hpp"
#include "vab/sampler.hpp"

using namespace vab;
using test::ToyLogits;
using test::ToyPredictor;
using test::enumerate_chain;

namespace {

// Constant logits; records every grid it is shown.
class FlatPredictor : public TokenPredictor {
 public:
  FlatPredictor(std::size_t levels, std::size_t vocab) : levels_(levels), vocab_(vocab) {}
  std::size_t predict_first() const override { return 0; }
  std::size_t predict_levels() const override { return levels_; }
  int mask_id() const override { return int(vocab_); }
  std::vector<Matrix> predict(const TokenGrid& grid, bool conditional) override {
    seen.push_back(grid);
    conditional_flags.push_back(conditional);
    return std::vector<Matrix>(levels_, Matrix::Zero(Eigen::Index(grid.steps), Eigen::Index(vocab_)));
  }
  std::vector<TokenGrid> seen;
  std::vector<bool> conditional_flags;

 private:
  std::size_t levels_, vocab_;
};

}  // namespace

TEST_CASE("cfg_logits") {
  Matrix c(1, 2), u(1, 2);
  c << 1, 0;
  u << 0, 0;
  Matrix want(1, 2);
  want << 5, 0;
  CHECK(cfg_logits(c, u, 5.0) == want);
  Matrix c2(2, 3), u2(2, 3);
  c2 << 0.1, -2, 3.3, 1e-3, 7, -0.5;
  u2 << 4, 0.2, -1, 2, 2, 2;
  CHECK(cfg_logits(c2, u2, 1.0) == c2);
  CHECK(cfg_logits(c2, u2, 0.0) == u2);
  CHECK_THROWS_AS(cfg_logits(c, c2, 2.0), std::invalid_argument);
}

TEST_CASE("confidence adds Gumbel noise with the Euler-Mascheroni mean") {
  const std::vector<double> lp = {-0.5, -1.25, -3.0};
  Rng r0(1);
  CHECK(confidence(lp, 0.0, r0) == lp);
  Rng a(42), b(42);
  CHECK(confidence(lp, 2.0, a) == confidence(lp, 2.0, b));
  const std::size_t n = 1000000;
  const std::vector<double> zeros(n, 0.0);
  Rng rng(7);
  const auto z = confidence(zeros, 1.0, rng);
  double mean = 0;
  for (double v : z) mean += v;
  mean /= double(n);
  CHECK(std::abs(mean - std::numbers::egamma) < 0.005);
}

TEST_CASE("temperature annealing") {
  CHECK(anneal_alpha(0, 16, 10.5) == 10.5);
  CHECK(anneal_alpha(15, 16, 10.5) == 0.0);
  CHECK(anneal_alpha(5, 16, 10.5) == doctest::Approx(7.0).epsilon(1e-15));
  CHECK(anneal_alpha(0, 1, 10.5) == 0.0);
  CHECK_THROWS_AS(anneal_alpha(16, 16, 10.5), std::out_of_range);
}

TEST_CASE("remask schedule matches the ceil-cosine table") {
  for (std::size_t t = 0; t < 16; ++t) {
    const long double gamma = std::cos(std::numbers::pi_v<long double> / 2.0L * (t + 1) / 16.0L);
    const auto want = t == 15 ? std::size_t(0) : std::size_t(std::ceil(gamma * 500.0L));
    CHECK(remask_count(t, 16, 500) == want);
  }
  CHECK(remask_count(7, 16, 500) == 354);
  CHECK(remask_count(15, 16, 500) == 0);
  CHECK(remask_count(0, 1, 500) == 0);
  for (std::size_t t = 1; t < 16; ++t) CHECK(remask_count(t, 16, 500) < remask_count(t - 1, 16, 500));
  CHECK_THROWS_AS(remask_count(16, 16, 500), std::out_of_range);
}

TEST_CASE("categorical sampling frequencies and log-probabilities") {
  const std::vector<double> logits = {0.0, std::log(3.0), -1e9};
  Rng rng(5);
  std::array<std::size_t, 3> counts{};
  const std::size_t n = 200000;
  for (std::size_t i = 0; i < n; ++i) {
    const auto [tok, lp] = sample_categorical(logits, rng);
    ++counts[std::size_t(tok)];
    CHECK(lp == doctest::Approx(tok == 0 ? std::log(0.25) : std::log(0.75)));
  }
  CHECK(counts[2] == 0);
  CHECK(std::abs(double(counts[1]) / double(n) - 0.75) < 0.005);
}

TEST_CASE("decode trace: strictly decreasing masks, invocation counts, monotone commitment") {
  for (const double s : {1.0, 5.0}) {
    FlatPredictor p(4, 8);
    TokenGrid grid(4, 500, 8);
    Rng rng(11);
    const auto [out, trace] = decode_masked(p, grid, 16, s, 10.5, rng);
    CHECK(trace.invocations == (s == 1.0 ? 16u : 32u));
    REQUIRE(trace.iterations.size() == 16);
    std::size_t finalized = 0, prev = 500;
    for (const auto& it : trace.iterations) {
      CHECK(it.masked < prev);
      CHECK(it.masked_before == prev);
      prev = it.masked;
      finalized += it.finalized;
    }
    CHECK(prev == 0);
    CHECK(finalized == 500);
    for (int tok : out.tokens) CHECK((tok >= 0 && tok < 8));
    // A committed timestep never changes in later calls.
    for (std::size_t i = 1; i < p.seen.size(); ++i) {
      for (std::size_t j = 0; j < out.tokens.size(); ++j) {
        if (p.seen[i - 1].tokens[j] != 8) CHECK(p.seen[i].tokens[j] == p.seen[i - 1].tokens[j]);
      }
    }
    if (s != 1.0) {
      CHECK(p.conditional_flags[0]);
      CHECK_FALSE(p.conditional_flags[1]);
    }
    // All levels of a timestep are committed together.
    for (const auto& g : p.seen) {
      for (std::size_t t = 0; t < 500; ++t) {
        for (std::size_t l = 1; l < 4; ++l) CHECK((g.at(l, t) == 8) == (g.at(0, t) == 8));
      }
    }
  }
}

TEST_CASE("single-step decode samples everything at once") {
  FlatPredictor p(2, 4);
  Rng rng(3);
  const auto [out, trace] = decode_masked(p, TokenGrid(2, 50, 4), 1, 5.0, 10.5, rng);
  REQUIRE(trace.iterations.size() == 1);
  CHECK(trace.iterations[0].remasked == 0);
  CHECK(trace.iterations[0].finalized == 50);
  CHECK(trace.invocations == 2);
}

TEST_CASE("equal confidences re-mask the lower positions first") {
  FlatPredictor p(1, 4);
  Rng rng(9);
  // Flat logits and α0 = 0 make every confidence equal to ln(1/4).
  const auto [out, trace] = decode_masked(p, TokenGrid(1, 10, 4), 4, 1.0, 0.0, rng);
  REQUIRE(p.seen.size() >= 2);
  // k_0 = ceil(cos(π/8)·10) = 10 → clamped to 9: only position 9 is committed.
  for (std::size_t t = 0; t < 9; ++t) CHECK(p.seen[1].at(0, t) == 4);
  CHECK(p.seen[1].at(0, 9) != 4);
  CHECK(trace.iterations[0].remasked == 9);
  // k_1 = ceil(cos(π/4)·10) = 8: positions 8 is committed next.
  for (std::size_t t = 0; t < 8; ++t) CHECK(p.seen[2].at(0, t) == 4);
  CHECK(p.seen[2].at(0, 8) != 4);
}

TEST_CASE("partially masked timesteps are rejected") {
  FlatPredictor p(2, 4);
  TokenGrid g(2, 5, 4);
  g.at(1, 2) = 0;
  Rng rng(1);
  CHECK_THROWS_AS(decode_masked(p, g, 4, 1.0, 0.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(decode_masked(p, TokenGrid(2, 5, 4), 0, 1.0, 0.0, rng), std::invalid_argument);
}

TEST_CASE("toy-model decode distribution matches exhaustive enumeration") {
  const ToyLogits toy;
  const std::size_t total_steps = 3;
  const auto exact = enumerate_chain(toy, total_steps);
  double mass = 0;
  for (const auto& [g, p] : exact) mass += p;
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));

  ToyPredictor pred(toy);
  Rng rng(2024);
  std::map<std::vector<int>, double> empirical;
  const std::size_t runs = 100000;
  for (std::size_t r = 0; r < runs; ++r) {
    const auto [out, trace] = decode_masked(pred, TokenGrid(1, 3, ToyLogits::kMask), total_steps, 1.0, 0.0, rng);
    empirical[out.tokens] += 1.0 / double(runs);
  }
  double tv = 0;
  for (const auto& [g, p] : exact) tv += std::abs(p - (empirical.count(g) ? empirical.at(g) : 0.0));
  for (const auto& [g, p] : empirical) {
    if (!exact.count(g)) tv += p;
  }
  tv *= 0.5;
  MESSAGE("total variation " << tv << " over " << exact.size() << " grids");
  CHECK(tv < 0.01);
}

TEST_CASE("coarse-to-fine keeps conditioning levels and generate yields the requested length") {
  ModelConfig bc;
  bc.d_emb = 8;
  bc.layers = 1;
  bc.expert_layers = 1;
  bc.heads = 2;
  bc.ffn_mult = 2;
  bc.vocab = 8;
  bc.input_levels = 2;
  bc.predict_levels = 2;
  bc.visual_dim = 3;
  bc.visual_frames = 2;
  bc.seed = 4;
  const MultiwayModel backbone(bc);
  const MultiwayModel c2f(ModelConfig::coarse_to_fine(bc, 4));
  const VisualFeatures v = VisualFeatures::Constant(2, 3, 0.5);

  TokenGrid coarse(2, 20);
  for (std::size_t i = 0; i < coarse.tokens.size(); ++i) coarse.tokens[i] = int(i % 8);
  DecodeConfig dc;
  dc.c2f_steps = 36;
  const auto [full, trace] = coarse_to_fine(c2f, coarse, v, dc);
  CHECK(full.level_range(0, 2) == coarse);
  CHECK(trace.iterations.back().masked == 0);
  for (int t : full.tokens) CHECK((t >= 0 && t < 8));
  dc.c2f_steps = 1;
  CHECK(coarse_to_fine(c2f, coarse, v, dc).second.iterations.size() == 1);
  TokenGrid bad = coarse;
  bad.at(1, 3) = 8;
  CHECK_THROWS_AS(coarse_to_fine(c2f, bad, v, dc), std::invalid_argument);

  // Tiny codebooks over a 2-level residual stack of a sine corpus.
  CodecConfig cc;
  cc.levels = 4;
  cc.entries = 8;
  cc.feature_dim = 16;
  cc.kmeans_iters = 2;
  Waveform w;
  for (std::size_t i = 0; i < 16000; ++i) w.samples.push_back(0.3 * std::sin(0.05 * double(i)));
  const std::vector<Waveform> corpus = {w};
  const auto cb = train_codebooks(corpus, cc);
  DecodeConfig gd;
  gd.steps = 4;
  gd.c2f_steps = 4;
  const auto r = generate(v, cb, backbone, &c2f, 4, 10.0, gd);
  CHECK(r.waveform.samples.size() == 160000);
  CHECK(r.tokens.steps == 500);
  CHECK(r.tokens.levels == 4);
  CHECK(r.c2f_trace.has_value());
  CHECK(r.trace.invocations == 8);
  const auto again = generate(v, cb, backbone, &c2f, 4, 10.0, gd);
  CHECK(again.waveform.samples == r.waveform.samples);
  CHECK(generate(v, cb, backbone, nullptr, 2, 1.0, gd).waveform.samples.size() == 16000);
  CHECK_THROWS_AS(generate(v, cb, backbone, nullptr, 4, 1.0, gd), std::invalid_argument);
}
