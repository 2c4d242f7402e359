#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "vab/ar_baseline.hpp"
#include "vab/bench.hpp"
#include "vab/cli.hpp"
#include "vab/config.hpp"
#include "vab/errors.hpp"
#include "vab/metrics.hpp"

using namespace vab;
namespace fs = std::filesystem;
using test::gaussian_rows;
using test::population_frechet;

namespace {

ModelConfig tiny_ar_config() {
  ModelConfig c;
  c.d_emb = 8;
  c.layers = 2;
  c.expert_layers = 1;
  c.heads = 2;
  c.ffn_mult = 2;
  c.vocab = 6;
  c.input_levels = 2;
  c.predict_levels = 2;
  c.visual_dim = 3;
  c.visual_frames = 2;
  c.init_std = 0.3;
  c.seed = 21;
  return c;
}

int cli(const std::vector<std::string>& args, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int rc = run_cli(args, out, err);
  if (err_text) *err_text = err.str();
  return rc;
}

}  // namespace

TEST_CASE("Frechet distance: identity, 1-D closed form, symmetry, dimension check") {
  Rng rng(1);
  Matrix x(50, 4);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal(0.0, 1.0);
  CHECK(std::abs(frechet_distance(x, x)) < 1e-9);
  Matrix y = x.array() * 1.7 + 0.3;
  CHECK(std::abs(frechet_distance(x, y) - frechet_distance(y, x)) < 1e-9);
  // 1-D: means 0 and 1 and unit variances built exactly.
  Matrix a(2, 1), b(2, 1);
  a << -1, 1;
  b << 0, 2;
  // Sample covariance with n−1 normalization: 2 for both; means 0 and 1.
  CHECK(frechet_distance(a, b) == doctest::Approx(1.0).epsilon(1e-9));
  Matrix c(4, 1), d(4, 1);
  c << -1, 1, -1, 1;
  d << 0, 2, 0, 2;
  CHECK(frechet_distance(c, d) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS_AS(frechet_distance(x, Matrix::Zero(10, 3)), std::invalid_argument);
}

TEST_CASE("Frechet distance matches the two-Gaussian population value") {
  const std::size_t n = 10000, reps = 20;
  Eigen::VectorXd m1(3), m2(3);
  m1 << 0.0, 1.0, -0.5;
  m2 << 0.5, 0.2, 0.0;
  Matrix l1(3, 3), l2(3, 3);
  l1 << 1.0, 0, 0, 0.4, 0.8, 0, -0.2, 0.3, 0.6;
  l2 << 0.7, 0, 0, -0.5, 1.1, 0, 0.1, 0.2, 0.9;
  const Matrix s1 = l1 * l1.transpose(), s2 = l2 * l2.transpose();
  const double want = population_frechet(m1, s1, m2, s2);
  // Replicates give the estimator's spread; its bias is O(d/n).
  Rng rng(2);
  std::vector<double> est;
  for (std::size_t r = 0; r < reps; ++r) {
    est.push_back(frechet_distance(gaussian_rows(n, m1, l1, rng), gaussian_rows(n, m2, l2, rng)));
  }
  double mean = 0, var = 0;
  for (double e : est) mean += e / double(reps);
  for (double e : est) var += (e - mean) * (e - mean) / double(reps - 1);
  const double sd = std::sqrt(var);
  MESSAGE("population " << want << ", replicate mean " << mean << " sd " << sd);
  CHECK(std::abs(mean - want) < 4.0 * sd / std::sqrt(double(reps)) + 0.01);
  for (double e : est) CHECK(std::abs(e - want) < 5.0 * sd + 0.01);

  // Diagonal covariances: Σ (σ1 − σ2)² + ‖Δμ‖², independent of any matrix square root.
  Matrix d1 = Matrix::Zero(2, 2), d2 = Matrix::Zero(2, 2);
  d1.diagonal() << 1.0, 2.0;
  d2.diagonal() << 0.5, 3.0;
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(2), o = Eigen::VectorXd::Ones(2);
  const double diag_want = 2.0 + 0.25 + 1.0;
  CHECK(population_frechet(z, d1.cwiseProduct(d1), o, d2.cwiseProduct(d2)) == doctest::Approx(diag_want));
  double diag_mean = 0;
  for (std::size_t r = 0; r < reps; ++r) {
    diag_mean += frechet_distance(gaussian_rows(n, z, d1, rng), gaussian_rows(n, o, d2, rng)) / double(reps);
  }
  // Delta-method sd of one estimate is about 0.08 here.
  CHECK(std::abs(diag_mean - diag_want) < 4.0 * 0.08 / std::sqrt(double(reps)) + 0.01);
}

TEST_CASE("KL divergence examples") {
  const std::vector<double> p = {0.9, 0.1}, q = {0.5, 0.5};
  CHECK(kl_divergence(p, q) == doctest::Approx(0.9 * std::log(1.8) + 0.1 * std::log(0.2)).epsilon(1e-12));
  CHECK(kl_divergence(p, q) == doctest::Approx(0.3680).epsilon(1e-3));
  CHECK(kl_divergence(p, p) == 0.0);
  const std::vector<double> zero = {1.0, 0.0};
  CHECK(std::isfinite(kl_divergence(q, zero)));
  Matrix r(3, 2);
  r << 0.9, 0.1, 0.2, 0.8, 0.5, 0.5;
  CHECK(std::abs(kld_metric(r, r)) < 1e-9);
  const Matrix u = Matrix::Constant(3, 2, 0.5);
  CHECK(std::abs(kld_metric(u, u)) < 1e-9);
  CHECK_THROWS_AS(kld_metric(r, Matrix::Constant(2, 2, 0.5)), std::invalid_argument);
}

TEST_CASE("retrieval recall examples") {
  const Matrix eye = Matrix::Identity(12, 12);
  const auto r = retrieval_eval(eye, eye);
  CHECK(r.visual_to_audio[0] == 1.0);
  CHECK(r.audio_to_visual[0] == 1.0);
  const Matrix same = Matrix::Ones(12, 4);
  const auto t = retrieval_eval(same, same);
  CHECK(t.visual_to_audio[0] == doctest::Approx(1.0 / 12));
  CHECK(t.visual_to_audio[1] == doctest::Approx(5.0 / 12));
  CHECK(t.visual_to_audio[2] == doctest::Approx(10.0 / 12));
  const std::vector<std::size_t> big_k = {13};
  CHECK_THROWS_AS(recall_at(eye, eye, big_k), std::invalid_argument);
}

TEST_CASE("random representations retrieve at chance") {
  Rng rng(4);
  const std::size_t n = 1000;
  Matrix a(Eigen::Index(n), 64), v(Eigen::Index(n), 64);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    a.data()[i] = rng.normal(0.0, 1.0);
    v.data()[i] = rng.normal(0.0, 1.0);
  }
  const auto r = retrieval_eval(a, v);
  // Binomial(1000, 0.001): 99.9% of the mass lies in [0, 6] hits.
  CHECK(r.visual_to_audio[0] <= 0.006);
  CHECK(r.audio_to_visual[0] <= 0.006);
  for (const auto& dir : {r.visual_to_audio, r.audio_to_visual}) {
    CHECK(dir[0] <= dir[1]);
    CHECK(dir[1] <= dir[2]);
  }
  CHECK(std::abs(r.visual_to_audio[2] - 0.01) < 0.01);
}

TEST_CASE("AR baseline: invocation count, causality, cache equivalence") {
  const ArModel m(tiny_ar_config());
  const VisualFeatures v = VisualFeatures::Constant(2, 3, 0.2);
  ArDecodeConfig dc;
  dc.top_k = 4;
  dc.seed = 3;
  const auto r = ar_decode(m, v, 7, dc);
  CHECK(r.invocations == 14);
  CHECK(r.tokens.levels == 2);
  CHECK(r.tokens.steps == 7);
  dc.kv_cache = true;
  const auto rc = ar_decode(m, v, 7, dc);
  CHECK(rc.invocations == 14);
  CHECK(rc.tokens == r.tokens);

  std::vector<int> seq = {1, 4, 0, 2, 5, 3};
  NoGradGuard ng;
  const Tensor full = m.forward(&v, seq);
  auto changed = seq;
  changed[4] = 0;
  changed[5] = 1;
  const Tensor alt = m.forward(&v, changed);
  for (std::size_t row = 0; row <= 4; ++row) {
    for (std::size_t j = 0; j < 6; ++j) CHECK(full.at(row, j) == alt.at(row, j));
  }
  bool differs = false;
  for (std::size_t j = 0; j < 6; ++j) differs |= full.at(5, j) != alt.at(5, j);
  CHECK(differs);

  ArCache cache(m);
  auto logits = cache.start(&v);
  for (std::size_t i = 0; i <= seq.size(); ++i) {
    for (std::size_t j = 0; j < 6; ++j) CHECK(logits[j] == doctest::Approx(full.at(i, j)).epsilon(1e-10));
    if (i < seq.size()) logits = cache.push(seq[i], i);
  }
  CHECK(m.params().parameter_count() == MultiwayModel(tiny_ar_config()).params().parameter_count());
}

TEST_CASE("top-k sampling stays within the top k") {
  const std::vector<double> logits = {0.1, 3.0, 2.0, -1.0, 2.0};
  Rng rng(6);
  for (int i = 0; i < 2000; ++i) {
    const int t = sample_top_k(logits, 2, rng);
    CHECK((t == 1 || t == 2));
  }
  CHECK(sample_top_k(logits, 1, rng) == 1);
}

TEST_CASE("bench grid arithmetic") {
  BenchAxes a;
  a.axes = {"steps"};
  auto cells = bench_grid(a);
  REQUIRE(cells.size() == 4);
  CHECK(cells[0].steps == 8);
  CHECK(cells[3].steps == 48);
  CHECK(cells[2].cfg_scale == 5.0);
  a.axes = {"cfg_scale", "alpha0", "steps"};
  a.seeds = {0, 1, 2};
  CHECK(bench_grid(a).size() == (5 + 6 + 4) * 3);
  a.axes = {"bogus"};
  CHECK_THROWS_AS(bench_grid(a), std::invalid_argument);
}

TEST_CASE("bench rows are reproducible and independent of the worker count") {
  DatasetConfig dcfg;
  dcfg.duration_seconds = 1;
  dcfg.pairs_per_class = 1;
  std::vector<PairedSample> eval;
  for (std::size_t i = 0; i < 4; ++i) eval.push_back(generate_pair(dcfg, {i % 4, i % 4}, 100 + i));
  CodecConfig cc;
  cc.levels = 4;
  cc.entries = 8;
  cc.kmeans_iters = 2;
  std::vector<Waveform> corpus;
  for (const auto& s : eval) corpus.push_back(s.waveform);
  const auto cb = train_codebooks(corpus, cc);
  ModelConfig mc;
  mc.d_emb = 8;
  mc.layers = 1;
  mc.expert_layers = 1;
  mc.heads = 2;
  mc.vocab = 8;
  mc.visual_dim = dcfg.visual_dim;
  mc.visual_frames = 1;
  const MultiwayModel backbone(mc);
  EvalProbe probe(4, 8, 1);
  const Matrix feats = EvalProbe::waveform_features(corpus, cc);
  const std::vector<std::size_t> labels = {0, 1, 2, 3};
  probe.train(feats, labels, 20);

  BenchInputs in;
  in.backbone = &backbone;
  in.codebooks = &cb;
  in.probe = &probe;
  in.eval_set = eval;
  BenchAxes axes;
  axes.axes = {"cfg_scale"};
  axes.cfg_scales = {1, 5};
  axes.defaults.steps = 4;
  const auto cells = bench_grid(axes);
  const auto r1 = run_bench(in, cells, 1);
  const auto r2 = run_bench(in, cells, 2);
  REQUIRE(r1.rows.size() == 2);
  CHECK(r1.metrics_tsv() == r2.metrics_tsv());
  CHECK(r1.rows[0].invocations == 4);
  CHECK(r1.rows[1].invocations == 8);
  for (const auto& row : r1.rows) {
    CHECK(row.fad >= 0.0);
    CHECK(row.kld >= 0.0);
  }
  CHECK(r1.to_tsv().starts_with("config\tcfg_scale"));
}

TEST_CASE("config parsing") {
  Config c;
  CHECK(c.get("decode.steps") == "16");
  CHECK(c.get_double("decode.cfg_scale") == 5.0);
  c.set("decode.steps=8");
  CHECK(c.get_size("decode.steps") == 8);
  c.set("axes=steps");
  CHECK(c.get_list("bench.axes") == std::vector<std::string>{"steps"});
  CHECK_THROWS_AS(c.set("decode.nope=1"), ValidationError);
  CHECK_THROWS_AS(c.set("no_equals_sign"), ValidationError);
  c.load_text("# comment\n\nmodel.d_emb = 64\n");
  CHECK(c.get_size("model.d_emb") == 64);
  const auto before = c.hash_hex();
  c.set("seed=9");
  CHECK(c.hash_hex() != before);
  CHECK(decode_config(c).steps == 8);
  CHECK(backbone_config(c, 32, 10).d_emb == 64);
  c.set("pretrain.warmup=5000");
  CHECK_THROWS_AS(pretrain_config(c), ValidationError);
  CHECK(config_help_text().find("decode.cfg_scale") != std::string::npos);
}

TEST_CASE("CLI exit codes and reference-vs-reference evaluation") {
  const fs::path root = fs::temp_directory_path() / "vab_cli_test";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string cfg = (root / "tiny.cfg").string();
  std::ofstream(cfg) << "data.duration=1\ndata.pairs_per_class=1\nprobe.eval_steps=20\n";

  std::string err;
  CHECK(cli({"frobnicate"}, &err) != 0);
  CHECK(cli({"datagen", "--config", cfg, "--set", "data.bogus=1", "--out", (root / "x").string()}, &err) == 1);
  CHECK(err.find("data.bogus") != std::string::npos);
  CHECK(cli({"datagen", "--config", (root / "missing.cfg").string(), "--out", (root / "x").string()}) == 1);
  CHECK(cli({"pretrain", "--config", cfg, "--out", (root / "p").string()}, &err) == 1);

  const std::string data = (root / "data").string();
  REQUIRE(cli({"datagen", "--config", cfg, "--out", data}, &err) == 0);
  CHECK(fs::exists(root / "data" / "test" / "manifest.txt"));
  CHECK(fs::exists(root / "data" / "manifest.txt"));
  const std::string probe_dir = (root / "probe").string();
  REQUIRE(cli({"probe-train", "--config", cfg, "--set", "probe.target=eval", "--set", "in.data=" + data, "--out",
               probe_dir},
              &err) == 0);
  const std::string probe = (root / "probe" / "eval_probe.vabm").string();
  const std::string test_dir = (root / "data" / "test").string();
  const std::string ev = (root / "ev").string();
  REQUIRE(cli({"evaluate", "--config", cfg, "--set", "in.eval_probe=" + probe, "--set", "in.reference=" + test_dir,
               "--set", "in.generated=" + test_dir, "--out", ev},
              &err) == 0);
  std::ifstream tsv(root / "ev" / "evaluate.tsv");
  std::string header, fad, kld;
  std::getline(tsv, header);
  tsv >> fad >> kld;
  CHECK(std::abs(std::stod(fad)) < 1e-9);
  CHECK(std::abs(std::stod(kld)) < 1e-9);

  // A corrupted checkpoint is a validation failure naming the file.
  {
    std::fstream f(probe, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(40);
    f.put('\x7f');
  }
  CHECK(cli({"evaluate", "--config", cfg, "--set", "in.eval_probe=" + probe, "--set", "in.reference=" + test_dir,
             "--set", "in.generated=" + test_dir, "--out", ev},
            &err) == 1);
  CHECK(err.find("eval_probe.vabm") != std::string::npos);
  fs::remove_all(root);
}
