#include "vab/codec.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "vab/binary_io.hpp"
#include "vab/rng.hpp"

namespace vab {

namespace {

constexpr std::uint32_t kCodebookVersion = 1;

double sq_dist(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double t = a[i] - b[i];
    s += t * t;
  }
  return s;
}

// Nearest entry by exhaustive scan; ties go to the lowest index.
std::size_t nearest(const double* x, const double* entries, std::size_t count, std::size_t d,
                    double* best_dist = nullptr) {
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < count; ++e) {
    const double dist = sq_dist(x, entries + e * d, d);
    if (dist < bd) {
      bd = dist;
      best = e;
    }
  }
  if (best_dist) *best_dist = bd;
  return best;
}

// Lloyd k-means over `points` (n × d) with entry 0 pinned at the origin.
std::vector<double> fit_level(const std::vector<double>& points, std::size_t n, std::size_t d,
                              const CodecConfig& cfg, Rng& rng, std::vector<double>* errors) {
  const std::size_t k = cfg.entries;
  std::vector<double> centers(k * d, 0.0);

  // k-means++ seeding; the zero entry counts as an existing center.
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) dist[i] = sq_dist(points.data() + i * d, centers.data(), d);
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : dist) total += v;
    double* dst = centers.data() + c * d;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      std::size_t pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        target -= dist[i];
        if (target < 0.0 && dist[i] > 0.0) {
          pick = i;
          break;
        }
      }
      while (dist[pick] == 0.0 && pick > 0) --pick;
      std::copy_n(points.data() + pick * d, d, dst);
    } else {
      // Every point already coincides with a center: place a distinct tiny vector.
      for (std::size_t j = 0; j < d; ++j) dst[j] = 1e-6 * rng.normal();
    }
    for (std::size_t i = 0; i < n; ++i) dist[i] = std::min(dist[i], sq_dist(points.data() + i * d, dst, d));
  }

  std::vector<std::size_t> assign(n);
  std::vector<double> best(n);
  auto assign_all = [&]() {
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      assign[i] = nearest(points.data() + i * d, centers.data(), k, d, &best[i]);
      err += best[i];
    }
    return err / static_cast<double>(n);
  };

  double err = assign_all();
  if (errors) errors->push_back(err);
  std::vector<double> sums(k * d);
  std::vector<std::size_t> counts(k);
  for (int it = 0; it < cfg.kmeans_iters; ++it) {
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      const double* p = points.data() + i * d;
      double* s = sums.data() + assign[i] * d;
      for (std::size_t j = 0; j < d; ++j) s[j] += p[j];
    }
    std::vector<char> taken(n, 0);
    for (std::size_t c = 1; c < k; ++c) {
      double* dst = centers.data() + c * d;
      if (counts[c] > 0) {
        for (std::size_t j = 0; j < d; ++j) dst[j] = sums[c * d + j] / static_cast<double>(counts[c]);
        continue;
      }
      // Empty cluster: reseed at the point farthest from its current entry.
      std::size_t far = n;
      double far_d = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!taken[i] && best[i] > far_d) {
          far_d = best[i];
          far = i;
        }
      }
      if (far < n) {
        taken[far] = 1;
        std::copy_n(points.data() + far * d, d, dst);
        best[far] = 0.0;
      }
    }
    err = assign_all();
    if (errors) errors->push_back(err);
  }

  // Entries must be pairwise distinct within a level.
  for (std::size_t a = 1; a < k; ++a) {
    for (std::size_t b = 0; b < a; ++b) {
      if (sq_dist(centers.data() + a * d, centers.data() + b * d, d) == 0.0) {
        for (std::size_t j = 0; j < d; ++j) centers[a * d + j] += 1e-9 * rng.normal();
        b = static_cast<std::size_t>(-1);  // recheck against all earlier entries
      }
    }
  }
  return centers;
}

}  // namespace

void CodecConfig::validate() const {
  if (sample_rate <= 0) throw std::invalid_argument("codec: sample_rate must be positive");
  if (frame_size == 0) throw std::invalid_argument("codec: frame_size must be positive");
  if (feature_dim == 0 || feature_dim > frame_size)
    throw std::invalid_argument("codec: feature_dim must be in [1, frame_size]");
  if (levels < 1) throw std::invalid_argument("codec: levels must be >= 1");
  if (entries < 2) throw std::invalid_argument("codec: entries_per_level must be >= 2");
  if (kmeans_iters < 0) throw std::invalid_argument("codec: kmeans_iters must be >= 0");
  if (frame_stride == 0) throw std::invalid_argument("codec: frame_stride must be >= 1");
}

Matrix dct_basis(std::size_t frame_size, std::size_t feature_dim) {
  Matrix basis(static_cast<Eigen::Index>(feature_dim), static_cast<Eigen::Index>(frame_size));
  const double n = static_cast<double>(frame_size);
  for (std::size_t k = 0; k < feature_dim; ++k) {
    const double alpha = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (std::size_t i = 0; i < frame_size; ++i) {
      basis(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) =
          alpha * std::cos(std::numbers::pi * (static_cast<double>(i) + 0.5) * static_cast<double>(k) / n);
    }
  }
  return basis;
}

Matrix frame_transform(const Waveform& w, const CodecConfig& cfg) {
  cfg.validate();
  if (w.samples.empty()) throw std::invalid_argument("frame_transform: empty waveform");
  if (w.sample_rate != cfg.sample_rate) {
    throw std::invalid_argument("frame_transform: waveform at " + std::to_string(w.sample_rate) +
                                " Hz, codec expects " + std::to_string(cfg.sample_rate));
  }
  const std::size_t fs = cfg.frame_size;
  const std::size_t steps = (w.samples.size() + fs - 1) / fs;
  Matrix frames = Matrix::Zero(static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(fs));
  std::copy(w.samples.begin(), w.samples.end(), frames.data());
  return frames * dct_basis(fs, cfg.feature_dim).transpose();
}

Waveform inverse_frame_transform(const Matrix& features, const CodecConfig& cfg) {
  cfg.validate();
  if (static_cast<std::size_t>(features.cols()) != cfg.feature_dim) {
    throw std::invalid_argument("inverse_frame_transform: feature width does not match codec");
  }
  const Matrix frames = features * dct_basis(cfg.frame_size, cfg.feature_dim);
  Waveform w;
  w.sample_rate = cfg.sample_rate;
  w.samples.assign(frames.data(), frames.data() + frames.size());
  return w;
}

std::uint64_t corpus_fingerprint(std::span<const Waveform> corpus) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& w : corpus) {
    const std::uint64_t n = w.samples.size();
    mix(&n, sizeof n);
    mix(w.samples.data(), w.samples.size() * sizeof(double));
  }
  return h;
}

Codebooks train_codebooks(std::span<const Waveform> corpus, const CodecConfig& cfg,
                          CodebookTrainingStats* stats) {
  cfg.validate();
  std::vector<double> points;
  std::size_t n = 0;
  const std::size_t d = cfg.feature_dim;
  for (const auto& w : corpus) {
    const Matrix f = frame_transform(w, cfg);
    for (Eigen::Index r = 0; r < f.rows(); r += static_cast<Eigen::Index>(cfg.frame_stride)) {
      points.insert(points.end(), f.row(r).data(), f.row(r).data() + d);
      ++n;
    }
  }
  if (n < cfg.entries) {
    throw std::invalid_argument("train_codebooks: corpus has " + std::to_string(n) + " frames, need at least " +
                                std::to_string(cfg.entries));
  }

  Codebooks cb;
  cb.config = cfg;
  cb.vectors.assign(cfg.levels * cfg.entries * d, 0.0);
  cb.fingerprint = corpus_fingerprint(corpus);
  if (stats) {
    stats->frames = n;
    stats->quantization_error.assign(cfg.levels, {});
    stats->residual_norm.assign(cfg.levels, 0.0);
  }

  Rng rng(derive_seed(cfg.seed, {0xc0debeefULL}));
  for (std::size_t level = 0; level < cfg.levels; ++level) {
    auto centers = fit_level(points, n, d, cfg, rng, stats ? &stats->quantization_error[level] : nullptr);
    std::copy(centers.begin(), centers.end(), cb.vectors.begin() + static_cast<std::ptrdiff_t>(level * cfg.entries * d));
    double norm_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double* p = points.data() + i * d;
      const std::size_t e = nearest(p, centers.data(), cfg.entries, d);
      const double* c = centers.data() + e * d;
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        p[j] -= c[j];
        s += p[j] * p[j];
      }
      norm_sum += std::sqrt(s);
    }
    if (stats) stats->residual_norm[level] = norm_sum / static_cast<double>(n);
  }
  cb.trained = true;
  return cb;
}

TokenGrid encode_features(const Matrix& features, const Codebooks& cb) {
  if (!cb.trained) throw std::logic_error("encode: codebooks are not trained");
  const auto& cfg = cb.config;
  const std::size_t d = cfg.feature_dim;
  if (static_cast<std::size_t>(features.cols()) != d) throw std::invalid_argument("encode: feature width mismatch");
  const std::size_t steps = static_cast<std::size_t>(features.rows());
  TokenGrid grid(cfg.levels, steps);
  std::vector<double> residual(d);
  for (std::size_t t = 0; t < steps; ++t) {
    std::copy_n(features.data() + t * d, d, residual.begin());
    for (std::size_t level = 0; level < cfg.levels; ++level) {
      const double* entries = cb.vectors.data() + level * cfg.entries * d;
      const std::size_t e = nearest(residual.data(), entries, cfg.entries, d);
      grid.at(level, t) = static_cast<int>(e);
      for (std::size_t j = 0; j < d; ++j) residual[j] -= entries[e * d + j];
    }
  }
  return grid;
}

TokenGrid encode(const Waveform& w, const Codebooks& cb) {
  if (!cb.trained) throw std::logic_error("encode: codebooks are not trained");
  return encode_features(frame_transform(w, cb.config), cb);
}

Matrix decode_features(const TokenGrid& g, const Codebooks& cb, std::size_t levels_used) {
  const auto& cfg = cb.config;
  if (levels_used < 1 || levels_used > cfg.levels || levels_used > g.levels) {
    throw std::invalid_argument("decode: levels_used " + std::to_string(levels_used) + " outside [1, " +
                                std::to_string(std::min(cfg.levels, g.levels)) + "]");
  }
  const std::size_t d = cfg.feature_dim;
  Matrix features = Matrix::Zero(static_cast<Eigen::Index>(g.steps), static_cast<Eigen::Index>(d));
  for (std::size_t t = 0; t < g.steps; ++t) {
    for (std::size_t level = 0; level < levels_used; ++level) {
      const int tok = g.at(level, t);
      if (tok < 0 || static_cast<std::size_t>(tok) >= cfg.entries) {
        throw std::out_of_range("decode: token " + std::to_string(tok) + " at level " + std::to_string(level) +
                                ", step " + std::to_string(t) + " outside [0, " + std::to_string(cfg.entries) + ")");
      }
      auto e = cb.entry(level, static_cast<std::size_t>(tok));
      for (std::size_t j = 0; j < d; ++j) features(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) += e[j];
    }
  }
  return features;
}

Waveform decode(const TokenGrid& g, const Codebooks& cb, std::size_t levels_used) {
  return inverse_frame_transform(decode_features(g, cb, levels_used), cb.config);
}

namespace {
std::pair<double, double> power_and_error(const Waveform& a, const Waveform& b) {
  const std::size_t n = std::max(a.samples.size(), b.samples.size());
  double sig = 0.0, err = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = i < a.samples.size() ? a.samples[i] : 0.0;
    const double y = i < b.samples.size() ? b.samples[i] : 0.0;
    sig += x * x;
    err += (x - y) * (x - y);
  }
  return {sig, err};
}
}  // namespace

double recon_snr(const Waveform& original, const Waveform& reconstructed) {
  const auto [sig, err] = power_and_error(original, reconstructed);
  if (sig == 0.0) throw std::invalid_argument("recon_snr: original has zero power");
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(sig / err);
}

double recon_mse(const Waveform& original, const Waveform& reconstructed) {
  const auto [sig, err] = power_and_error(original, reconstructed);
  (void)sig;
  const std::size_t n = std::max(original.samples.size(), reconstructed.samples.size());
  return n ? err / static_cast<double>(n) : 0.0;
}

void save_codebooks(const Codebooks& cb, const std::string& path) {
  if (!cb.trained) throw std::logic_error("save_codebooks: codebooks are not trained");
  const auto& c = cb.config;
  bin::Writer w;
  w.magic("VABC");
  w.put<std::uint32_t>(kCodebookVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.levels));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.entries));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.feature_dim));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.frame_size));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.sample_rate));
  w.put<std::uint64_t>(cb.fingerprint);
  for (double v : cb.vectors) w.put<double>(v);
  w.save(path);
}

Codebooks load_codebooks(const std::string& path) {
  auto r = bin::Reader::open(path);
  r.expect_magic("VABC");
  const auto version = r.get<std::uint32_t>();
  if (version != kCodebookVersion) throw std::runtime_error(path + ": unsupported codebook version " + std::to_string(version));
  Codebooks cb;
  cb.config.levels = r.get<std::uint32_t>();
  cb.config.entries = r.get<std::uint32_t>();
  cb.config.feature_dim = r.get<std::uint32_t>();
  cb.config.frame_size = r.get<std::uint32_t>();
  cb.config.sample_rate = static_cast<int>(r.get<std::uint32_t>());
  cb.config.validate();
  cb.fingerprint = r.get<std::uint64_t>();
  cb.vectors.resize(cb.config.levels * cb.config.entries * cb.config.feature_dim);
  for (auto& v : cb.vectors) v = r.get<double>();
  if (r.pos() != r.size()) throw std::runtime_error(path + ": trailing bytes after codebooks");
  cb.trained = true;
  return cb;
}

}  // namespace vab
