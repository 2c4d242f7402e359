#include "vab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "vab/optim.hpp"

namespace vab {

namespace {

Matrix shrunk_covariance(const Matrix& x) {
  Matrix c = covariance(x);
  if (static_cast<std::size_t>(x.rows()) <= static_cast<std::size_t>(x.cols()) + 1) {
    c += 1e-6 * Matrix::Identity(c.rows(), c.cols());
  }
  return c;
}

}  // namespace

double frechet_distance(const Matrix& x, const Matrix& y) {
  if (x.cols() != y.cols()) {
    throw std::invalid_argument("frechet_distance: embedding dims " + std::to_string(x.cols()) + " vs " +
                                std::to_string(y.cols()));
  }
  if (x.rows() < 2 || y.rows() < 2) throw std::invalid_argument("frechet_distance: need at least 2 rows per set");
  const Vector mx = column_mean(x);
  const Vector my = column_mean(y);
  const Matrix sx = shrunk_covariance(x);
  const Matrix sy = shrunk_covariance(y);
  // tr((Σx^½ Σy Σx^½)^½) is the nuclear norm of Σx^½·Σy^½; the SVD form keeps
  // tiny eigenvalues that squaring would push below rounding.
  const Matrix cross = psd_sqrt(sx) * psd_sqrt(sy);
  const double tr_cross = Eigen::JacobiSVD<Matrix>(cross).singularValues().sum();
  const double d = (mx - my).squaredNorm() + sx.trace() + sy.trace() - 2.0 * tr_cross;
  return std::max(0.0, d);
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty()) throw std::invalid_argument("kl_divergence: distributions differ in size");
  auto floored = [](std::span<const double> d) {
    std::vector<double> out(d.size());
    double total = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (!(d[i] >= 0.0)) throw std::invalid_argument("kl_divergence: negative probability");
      out[i] = std::max(d[i], 1e-10);
      total += out[i];
    }
    for (auto& v : out) v /= total;
    return out;
  };
  const auto pp = floored(p);
  const auto qq = floored(q);
  double kl = 0.0;
  for (std::size_t i = 0; i < pp.size(); ++i) kl += pp[i] * std::log(pp[i] / qq[i]);
  return kl;
}

double kld_metric(const Matrix& reference_probs, const Matrix& generated_probs) {
  if (reference_probs.rows() != generated_probs.rows() || reference_probs.cols() != generated_probs.cols()) {
    throw std::invalid_argument("kld_metric: " + std::to_string(reference_probs.rows()) + " reference vs " +
                                std::to_string(generated_probs.rows()) + " generated clips are not paired");
  }
  if (reference_probs.rows() == 0) throw std::invalid_argument("kld_metric: empty sets");
  const auto c = static_cast<std::size_t>(reference_probs.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < reference_probs.rows(); ++i) {
    total += kl_divergence({reference_probs.row(i).data(), c}, {generated_probs.row(i).data(), c});
  }
  return total / static_cast<double>(reference_probs.rows());
}

std::vector<double> recall_at(const Matrix& queries, const Matrix& candidates, std::span<const std::size_t> ks) {
  if (queries.rows() != candidates.rows() || queries.cols() != candidates.cols()) {
    throw std::invalid_argument("retrieval: query and candidate sets differ in shape");
  }
  const auto n = static_cast<std::size_t>(queries.rows());
  for (auto k : ks) {
    if (k > n) {
      throw std::invalid_argument("retrieval: R@" + std::to_string(k) + " needs at least " + std::to_string(k) +
                                  " candidates, have " + std::to_string(n));
    }
  }
  auto normalized = [](const Matrix& m) {
    Matrix out = m;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      const double norm = out.row(i).norm();
      if (norm > 0.0) out.row(i) /= norm;
    }
    return out;
  };
  const Matrix sim = normalized(queries) * normalized(candidates).transpose();
  std::vector<std::size_t> hits(ks.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double own = sim(i, i);
    std::size_t rank = 1;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (sim(i, j) > own || (sim(i, j) == own && j < i)) ++rank;
    }
    for (std::size_t q = 0; q < ks.size(); ++q) hits[q] += rank <= ks[q];
  }
  std::vector<double> out(ks.size());
  for (std::size_t q = 0; q < ks.size(); ++q) out[q] = static_cast<double>(hits[q]) / static_cast<double>(n);
  return out;
}

RetrievalResult retrieval_eval(const Matrix& audio, const Matrix& visual) {
  const std::array<std::size_t, 3> ks{1, 5, 10};
  RetrievalResult r;
  const auto v2a = recall_at(visual, audio, ks);
  const auto a2v = recall_at(audio, visual, ks);
  std::copy(v2a.begin(), v2a.end(), r.visual_to_audio.begin());
  std::copy(a2v.begin(), a2v.end(), r.audio_to_visual.begin());
  return r;
}

Matrix to_matrix(const Tensor& t) {
  Matrix m(t.rows(), t.cols());
  std::copy(t.data().begin(), t.data().end(), m.data());
  return m;
}

// ------------------------------------------------------------------ EvalProbe

EvalProbe::EvalProbe(std::size_t classes, std::size_t hidden, std::uint64_t seed) : classes_(classes), hidden_(hidden) {
  if (classes < 2 || hidden < 1) throw std::invalid_argument("eval probe: need >= 2 classes and a hidden layer");
  Rng rng(derive_seed(seed, {0x70726f6265}));
  const std::size_t in = 2 * kBins;
  params_.add_filled("norm.mean", {in}, 0.0);
  params_.add_filled("norm.scale", {in}, 1.0);
  params_.add("fc1.w", {in, hidden}, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  params_.add_filled("fc1.b", {hidden}, 0.0);
  params_.add("fc2.w", {hidden, classes}, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
  params_.add_filled("fc2.b", {classes}, 0.0);
}

Matrix EvalProbe::waveform_features(std::span<const Waveform> clips, const CodecConfig& frames) {
  CodecConfig c = frames;
  c.feature_dim = kBins;
  Matrix out(static_cast<Eigen::Index>(clips.size()), static_cast<Eigen::Index>(2 * kBins));
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const Matrix f = frame_transform(clips[i], c).cwiseAbs();
    const Eigen::RowVectorXd mean = f.colwise().mean();
    const Matrix centered = f.rowwise() - mean;
    const Eigen::RowVectorXd sd = (centered.cwiseProduct(centered).colwise().mean()).cwiseSqrt();
    out.row(static_cast<Eigen::Index>(i)).head(kBins) = mean;
    out.row(static_cast<Eigen::Index>(i)).tail(kBins) = sd;
  }
  return out;
}

Tensor EvalProbe::hidden_layer(const Tensor& x) const {
  return ops::gelu(ops::linear(x, params_.get("fc1.w"), params_.get("fc1.b")));
}

Tensor EvalProbe::logits(const Tensor& x) const {
  return ops::linear(hidden_layer(x), params_.get("fc2.w"), params_.get("fc2.b"));
}

Tensor EvalProbe::standardized(const Matrix& features) const {
  if (static_cast<std::size_t>(features.cols()) != 2 * kBins) throw std::invalid_argument("eval probe: bad feature width");
  const auto mean = params_.get("norm.mean").data();
  const auto scale = params_.get("norm.scale").data();
  std::vector<double> v(static_cast<std::size_t>(features.size()));
  const auto c = static_cast<std::size_t>(features.cols());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (features.data()[i] - mean[i % c]) * scale[i % c];
  return Tensor::from({static_cast<std::size_t>(features.rows()), c}, std::move(v));
}

void EvalProbe::train(const Matrix& features, std::span<const std::size_t> labels, std::int64_t steps) {
  if (static_cast<std::size_t>(features.rows()) != labels.size() || labels.empty()) {
    throw std::invalid_argument("eval probe: features and labels differ in count");
  }
  for (auto l : labels) {
    if (l >= classes_) throw std::out_of_range("eval probe: label " + std::to_string(l) + " outside class range");
  }
  if (static_cast<std::size_t>(features.cols()) != 2 * kBins) throw std::invalid_argument("eval probe: bad feature width");
  const Vector mean = column_mean(features);
  Tensor mu = params_.get("norm.mean");
  Tensor sc = params_.get("norm.scale");
  for (Eigen::Index j = 0; j < features.cols(); ++j) {
    const double var = (features.col(j).array() - mean(j)).square().mean();
    mu.mutable_data()[static_cast<std::size_t>(j)] = mean(j);
    sc.mutable_data()[static_cast<std::size_t>(j)] = 1.0 / std::sqrt(var + 1e-12);
  }
  const Tensor x = standardized(features);
  const std::vector<int> targets(labels.begin(), labels.end());
  AdamWConfig cfg;
  cfg.base_lr = 1e-2;
  cfg.weight_decay = 1e-4;
  cfg.warmup_steps = std::max<std::int64_t>(1, steps / 10);
  cfg.total_steps = steps;
  std::vector<Tensor> trainable = {params_.get("fc1.w"), params_.get("fc1.b"), params_.get("fc2.w"),
                                   params_.get("fc2.b")};
  AdamW opt(trainable, cfg);
  for (std::int64_t s = 0; s < steps; ++s) {
    opt.zero_grad();
    const Tensor loss = ops::cross_entropy(logits(x), targets);
    loss.backward();
    opt.step();
  }
}

Matrix EvalProbe::embed(const Matrix& features) const {
  NoGradGuard no_grad;
  return to_matrix(hidden_layer(standardized(features)));
}

Matrix EvalProbe::probabilities(const Matrix& features) const {
  NoGradGuard no_grad;
  return to_matrix(ops::softmax(logits(standardized(features)), 1));
}

std::vector<std::size_t> EvalProbe::predict(const Matrix& features) const {
  const Matrix p = probabilities(features);
  std::vector<std::size_t> out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < p.cols(); ++j) {
      if (p(i, j) > p(i, best)) best = j;
    }
    out[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best);
  }
  return out;
}

std::string EvalProbe::config_text() const {
  return "classes=" + std::to_string(classes_) + "\nhidden=" + std::to_string(hidden_) + "\n";
}

EvalProbe EvalProbe::from_checkpoint(const std::string& config_text, ParamStore params) {
  EvalProbe p;
  std::istringstream in(config_text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const auto key = line.substr(0, eq);
    const auto val = std::stoull(line.substr(eq + 1));
    if (key == "classes") p.classes_ = val;
    else if (key == "hidden") p.hidden_ = val;
    else throw std::invalid_argument("eval probe: unknown config key '" + key + "'");
  }
  for (const char* n : {"norm.mean", "norm.scale", "fc1.w", "fc1.b", "fc2.w", "fc2.b"}) params.get(n);
  if (params.get("fc2.w").shape() != Shape{p.hidden_, p.classes_}) throw std::invalid_argument("eval probe: shape mismatch");
  p.params_ = std::move(params);
  return p;
}

}  // namespace vab
