#include <doctest.h>

#include <cmath>
#include <set>

#include "test_util.hpp"
#include "vab/training.hpp"

using namespace vab;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.d_emb = 16;
  c.layers = 2;
  c.expert_layers = 1;
  c.heads = 2;
  c.ffn_mult = 2;
  c.vocab = 6;
  c.input_levels = 2;
  c.predict_levels = 2;
  c.visual_dim = 3;
  c.visual_frames = 2;
  c.init_std = 0.1;
  c.seed = 3;
  return c;
}

// Grid with a deterministic token pattern per class, visual rows one-hot-ish.
Example toy_example(std::size_t cls, std::size_t steps, Rng& rng) {
  Example e;
  e.tokens = TokenGrid(2, steps);
  for (std::size_t t = 0; t < steps; ++t) {
    e.tokens.at(0, t) = int((cls + t) % 6);
    e.tokens.at(1, t) = int((2 * cls + t) % 6);
  }
  e.visual = VisualFeatures::Zero(2, 3);
  for (Eigen::Index r = 0; r < 2; ++r) {
    e.visual(r, Eigen::Index(cls % 3)) = 1.0;
    for (Eigen::Index j = 0; j < 3; ++j) e.visual(r, j) += rng.normal(0.0, 0.05);
  }
  e.labels = {{cls, 1.0}};
  return e;
}

std::vector<Example> toy_set(std::size_t n, std::size_t classes, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Example> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(toy_example(i % classes, 6, rng));
  return out;
}

double log_softmax_at(const Tensor& logits, std::size_t row, int target) {
  const std::size_t v = logits.cols();
  double mx = -1e300;
  for (std::size_t j = 0; j < v; ++j) mx = std::max(mx, logits.at(row, j));
  double z = 0;
  for (std::size_t j = 0; j < v; ++j) z += std::exp(logits.at(row, j) - mx);
  return logits.at(row, std::size_t(target)) - mx - std::log(z);
}

TrainSchedule short_schedule(std::int64_t steps, std::size_t batch, double lr) {
  TrainSchedule s;
  s.steps = steps;
  s.warmup_steps = std::min<std::int64_t>(10, steps);
  s.batch_size = batch;
  s.base_lr = lr;
  s.seed = 5;
  return s;
}

}  // namespace

TEST_CASE("masked loss equals hand-computed cross-entropy over masked tokens only") {
  const MultiwayModel m(tiny_config());
  const auto data = toy_set(2, 4, 1);
  Rng rng(2);
  std::vector<MaskedExample> batch = {make_masked_example(data[0], m.config(), 0.5, rng),
                                      make_masked_example(data[1], m.config(), 0.7, rng)};
  NoGradGuard ng;
  const double got = masked_prediction_loss(m, batch, 0.0).item();
  std::vector<ModelInput> in;
  for (const auto& b : batch) in.push_back({&b.masked, b.visual});
  const auto logits = m.forward(in);
  double sum = 0;
  std::size_t count = 0;
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t t = 0; t < 6; ++t) {
      for (std::size_t l = 0; l < 2; ++l) {
        if (batch[b].masked.at(l, t) != m.config().mask_id()) continue;
        sum -= log_softmax_at(logits[l], b * 6 + t, batch[b].target.at(l, t));
        ++count;
      }
    }
  }
  CHECK(count == 3 * 2 + 4 * 2);
  CHECK(got == doctest::Approx(sum / double(count)).epsilon(1e-12));

  // Unmasked targets do not enter the loss.
  auto altered = batch;
  for (std::size_t t = 0; t < 6; ++t) {
    if (altered[0].masked.at(0, t) != m.config().mask_id()) altered[0].target.at(0, t) = 5 - altered[0].target.at(0, t);
  }
  CHECK(masked_prediction_loss(m, altered, 0.0).item() == doctest::Approx(got).epsilon(1e-14));
}

TEST_CASE("no masked tokens: zero loss and a rejected step") {
  MultiwayModel m(tiny_config());
  const auto data = toy_set(1, 4, 1);
  Rng rng(3);
  const std::vector<MaskedExample> batch = {make_masked_example(data[0], m.config(), 0.0, rng)};
  CHECK(masked_prediction_loss(m, batch, 0.1).item() == 0.0);
  AdamW opt(m.params().tensors(), short_schedule(10, 1, 1e-3).adamw());
  CHECK_THROWS_AS(pretrain_step(m, opt, batch, 0.1), std::invalid_argument);
}

TEST_CASE("coarse-to-fine masking leaves conditioning levels intact") {
  auto cfg = tiny_config();
  cfg.expert_layers = 0;
  cfg.input_levels = 3;
  cfg.predict_first = 1;
  cfg.predict_levels = 2;
  Example e;
  e.tokens = TokenGrid(4, 8, 2);
  e.visual = VisualFeatures::Zero(2, 3);
  Rng rng(4);
  const auto m = make_masked_example(e, cfg, 1.0, rng);
  CHECK(m.masked.levels == 3);
  for (std::size_t t = 0; t < 8; ++t) {
    CHECK(m.masked.at(0, t) == 2);
    CHECK(m.masked.at(1, t) == cfg.mask_id());
    CHECK(m.masked.at(2, t) == cfg.mask_id());
  }
  e.visual_dropped = true;
  CHECK(make_masked_example(e, cfg, 0.5, rng).visual == nullptr);
  Example shallow;
  shallow.tokens = TokenGrid(2, 8);
  CHECK_THROWS_AS(make_masked_example(shallow, cfg, 0.5, rng), std::invalid_argument);
}

TEST_CASE("contrastive loss closed form on orthonormal pairs") {
  const std::size_t n = 4;
  std::vector<double> eye(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) eye[i * n + i] = 1.0;
  const Tensor a = Tensor::from({n, n}, eye), v = Tensor::from({n, n}, eye);
  const auto st = make_contrastive_state(0.05);
  const double want = std::log1p(3.0 * std::exp(-20.0));
  CHECK(contrastive_loss(a, v, st.log_tau, false).item() == doctest::Approx(want).epsilon(1e-9));
  CHECK(contrastive_loss(a, v, st.log_tau, true).item() == doctest::Approx(want).epsilon(1e-9));
  CHECK(st.tau() == doctest::Approx(0.05));
  // Scaling rows does not matter (normalization inside).
  const Tensor a3 = ops::scale(a, 3.0);
  CHECK(contrastive_loss(a3, v, st.log_tau, true).item() == doctest::Approx(want).epsilon(1e-9));
  CHECK_THROWS_AS(make_contrastive_state(0.0), std::invalid_argument);
  CHECK_THROWS_AS(contrastive_loss(Tensor::from({1, 2}, {1, 0}), Tensor::from({1, 2}, {0, 1}), st.log_tau, true),
                  std::invalid_argument);
}

TEST_CASE("contrastive loss matches a direct evaluation and its gradients") {
  Rng rng(9);
  const Tensor a = test::random_tensor({5, 3}, rng), v = test::random_tensor({5, 3}, rng);
  const Tensor lt = Tensor::scalar(std::log(0.3), true);
  // Direct evaluation.
  auto unit = [](const Tensor& x, std::size_t r) {
    double nn = 0;
    for (std::size_t j = 0; j < 3; ++j) nn += x.at(r, j) * x.at(r, j);
    return std::sqrt(nn);
  };
  double s[5][5];
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      double dot = 0;
      for (std::size_t c = 0; c < 3; ++c) dot += a.at(i, c) * v.at(j, c);
      s[i][j] = dot / (unit(a, i) * unit(v, j)) / 0.3;
    }
  }
  double a2v = 0, v2a = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    double za = 0, zv = 0;
    for (std::size_t j = 0; j < 5; ++j) {
      za += std::exp(s[i][j]);
      zv += std::exp(s[j][i]);
    }
    a2v += std::log(za) - s[i][i];
    v2a += std::log(zv) - s[i][i];
  }
  CHECK(contrastive_loss(a, v, lt, false).item() == doctest::Approx(a2v / 5).epsilon(1e-12));
  CHECK(contrastive_loss(a, v, lt, true).item() == doctest::Approx((a2v + v2a) / 10).epsilon(1e-12));
  const double err = test::max_grad_rel_error([&] { return contrastive_loss(a, v, lt, true); }, {a, v, lt});
  CHECK(err < 1e-6);
}

TEST_CASE("pretraining drives the masked loss down on a learnable toy set") {
  MultiwayModel m(tiny_config());
  // Constant grids per class: masked tokens are recoverable from any visible one.
  auto data = toy_set(8, 4, 6);
  for (auto& e : data) {
    for (std::size_t t = 0; t < 6; ++t) {
      e.tokens.at(0, t) = int(e.labels[0].first);
      e.tokens.at(1, t) = int(e.labels[0].first + 1);
    }
  }
  PretrainConfig pc;
  pc.schedule = short_schedule(300, 8, 1e-2);
  pc.augment = {0.0, 0.0, 0.0, {}};
  pc.label_smoothing = 0.0;
  const double before = validation_loss(m, data, pc.mask_ratio, 17);
  const auto log = pretrain(m, data, pc);
  const double after = validation_loss(m, data, pc.mask_ratio, 17);
  MESSAGE("validation loss " << before << " -> " << after);
  CHECK(log.loss.size() == 300);
  CHECK(log.lr.size() == 300);
  CHECK(log.lr[0] == doctest::Approx(1e-3));
  CHECK(after < 0.5 * before);
}

TEST_CASE("pretraining is deterministic") {
  const auto data = toy_set(4, 4, 6);
  PretrainConfig pc;
  pc.schedule = short_schedule(5, 2, 1e-3);
  pc.augment.timing = {3, 1};
  MultiwayModel a(tiny_config()), b(tiny_config());
  const auto la = pretrain(a, data, pc);
  const auto lb = pretrain(b, data, pc);
  CHECK(la.loss == lb.loss);
  for (std::size_t i = 0; i < a.params().items().size(); ++i) {
    const auto& ta = a.params().items()[i].second;
    const auto& tb = b.params().items()[i].second;
    CHECK(std::equal(ta.data().begin(), ta.data().end(), tb.data().begin()));
  }
}

TEST_CASE("linear probe leaves the backbone frozen; fine-tuning only moves the encoder") {
  const auto train = toy_set(16, 4, 7), test = toy_set(8, 4, 8);
  MultiwayModel m(tiny_config());
  const MultiwayModel original = m;
  ClassifyConfig cc;
  cc.schedule = short_schedule(40, 8, 1e-2);
  cc.augment = {0.0, 0.0, 0.0, {}};
  cc.classes = 4;
  ClassifierHead head(m.config().d_emb, 4, 1);
  const auto probe = linear_probe(m, head, train, test, ClassifyMode::joint, cc);
  for (std::size_t i = 0; i < m.params().items().size(); ++i) {
    const auto& t = m.params().items()[i].second;
    const auto& o = original.params().items()[i].second;
    CHECK(std::equal(t.data().begin(), t.data().end(), o.data().begin()));
  }
  MESSAGE("probe accuracy " << probe.accuracy);
  CHECK(probe.accuracy >= 0.0);
  CHECK(probe.accuracy <= 1.0);

  ClassifierHead head2(m.config().d_emb, 4, 1);
  const auto ft = classify_finetune(m, head2, train, test, ClassifyMode::joint, cc);
  MESSAGE("fine-tune accuracy " << ft.accuracy);
  std::set<std::string> encoder = {"tok_emb.0", "tok_emb.1", "vis_proj.w", "mod_emb.audio", "layer0.ffn_audio.w1"};
  for (std::size_t i = 0; i < m.params().items().size(); ++i) {
    const auto& [name, t] = m.params().items()[i];
    const auto& o = original.params().items()[i].second;
    const bool same = std::equal(t.data().begin(), t.data().end(), o.data().begin());
    if (name.starts_with("layer1.") || name.starts_with("head.") || name.starts_with("final_ln")) CHECK(same);
    if (encoder.count(name)) CHECK_FALSE(same);
  }
  CHECK(ft.accuracy == 1.0);
}

TEST_CASE("classification label checks and accuracy tie-break") {
  const MultiwayModel m(tiny_config());
  ClassifierHead head(m.config().d_emb, 4, 2);
  for (const auto& t : head.params.tensors()) {
    for (auto& x : Tensor(t).mutable_data()) x = 0.0;
  }
  auto data = toy_set(4, 4, 9);
  // All-zero logits predict class 0; the label tie (0.5/0.5) resolves to the lower class.
  data[1].labels = {{2, 0.5}, {0, 0.5}};
  CHECK(classify_accuracy(m, head, data, ClassifyMode::visual) == doctest::Approx(0.5));
  data[2].labels = {{9, 1.0}};
  CHECK_THROWS_AS(classify_accuracy(m, head, data, ClassifyMode::audio), std::out_of_range);
  CHECK_THROWS_AS(ClassifierHead(8, 1, 0), std::invalid_argument);
  CHECK(parse_classify_mode("V+A") == ClassifyMode::joint);
  CHECK(to_string(parse_classify_mode("A")) == "A");
  CHECK_THROWS_AS(parse_classify_mode("X"), std::invalid_argument);
}

TEST_CASE("contrastive fine-tuning raises pair similarity") {
  const auto data = toy_set(8, 8, 10);
  MultiwayModel m(tiny_config());
  auto state = make_contrastive_state(0.05);
  ContrastiveConfig cc;
  cc.schedule = short_schedule(60, 8, 5e-3);
  const auto log = contrastive_finetune(m, state, data, cc);
  MESSAGE("contrastive loss " << log.loss.front() << " -> " << log.loss.back());
  CHECK(log.loss.back() < log.loss.front());
  CHECK(state.tau() != 0.05);
}
