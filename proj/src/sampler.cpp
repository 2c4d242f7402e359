#include "vab/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace vab {

void DecodeConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("decode: steps must be at least 1");
  if (c2f_steps < 1) throw std::invalid_argument("decode: c2f steps must be at least 1");
  if (!(cfg_scale >= 0.0) || !std::isfinite(cfg_scale)) throw std::invalid_argument("decode: cfg scale must be >= 0");
  if (!(alpha0 >= 0.0) || !std::isfinite(alpha0)) throw std::invalid_argument("decode: alpha0 must be >= 0");
}

std::string DecodeTrace::to_table() const {
  std::ostringstream o;
  o.precision(10);
  o << "iteration\tmasked\tthreshold\tfinalized\talpha\tremasked\n";
  for (const auto& it : iterations) {
    o << it.iteration << '\t' << it.masked << '\t' << it.threshold << '\t' << it.finalized << '\t' << it.alpha << '\t'
      << it.remasked << '\n';
  }
  o << "# invocations\t" << invocations << '\n';
  return o.str();
}

std::vector<Matrix> ModelPredictor::predict(const TokenGrid& grid, bool conditional) {
  NoGradGuard no_grad;
  const std::vector<ModelInput> in{{&grid, conditional ? visual_ : nullptr}};
  const auto logits = model_.forward(in);
  std::vector<Matrix> out;
  out.reserve(logits.size());
  for (const auto& t : logits) {
    Matrix m(t.rows(), t.cols());
    std::copy(t.data().begin(), t.data().end(), m.data());
    out.push_back(std::move(m));
  }
  return out;
}

Matrix cfg_logits(const Matrix& cond, const Matrix& uncond, double s) {
  if (cond.rows() != uncond.rows() || cond.cols() != uncond.cols()) {
    throw std::invalid_argument("cfg_logits: cond " + std::to_string(cond.rows()) + "×" + std::to_string(cond.cols()) +
                                " vs uncond " + std::to_string(uncond.rows()) + "×" + std::to_string(uncond.cols()));
  }
  if (s == 1.0) return cond;
  if (s == 0.0) return uncond;
  return uncond + s * (cond - uncond);
}

std::vector<double> confidence(std::span<const double> log_probs, double alpha, Rng& rng) {
  std::vector<double> z(log_probs.begin(), log_probs.end());
  for (auto& v : z) {
    const double g = rng.gumbel();
    v += alpha * g;
  }
  return z;
}

double anneal_alpha(std::size_t t, std::size_t total_steps, double alpha0) {
  if (total_steps <= 1) return 0.0;
  if (t >= total_steps) throw std::out_of_range("anneal_alpha: iteration beyond schedule");
  return alpha0 * (1.0 - static_cast<double>(t) / static_cast<double>(total_steps - 1));
}

std::size_t remask_count(std::size_t t, std::size_t total_steps, std::size_t n) {
  if (total_steps == 0 || t >= total_steps) throw std::out_of_range("remask_count: iteration beyond schedule");
  if (t + 1 == total_steps) return 0;
  const double gamma = std::cos(std::numbers::pi / 2.0 * static_cast<double>(t + 1) / static_cast<double>(total_steps));
  // Guard against cos rounding pushing an exact product over an integer.
  return static_cast<std::size_t>(std::ceil(gamma * static_cast<double>(n) - 1e-9));
}

std::pair<int, double> sample_categorical(std::span<const double> logits, Rng& rng) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double l : logits) total += std::exp(l - mx);
  const double log_z = mx + std::log(total);
  const double u = rng.uniform() * total;
  double acc = 0.0;
  std::size_t pick = logits.size() - 1;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    acc += std::exp(logits[j] - mx);
    if (u < acc) {
      pick = j;
      break;
    }
  }
  return {static_cast<int>(pick), logits[pick] - log_z};
}

std::pair<TokenGrid, DecodeTrace> decode_masked(TokenPredictor& predictor, TokenGrid grid, std::size_t steps,
                                                double cfg_scale, double alpha0, Rng& rng) {
  if (steps < 1) throw std::invalid_argument("decode: steps must be at least 1");
  const std::size_t first = predictor.predict_first();
  const std::size_t levels = predictor.predict_levels();
  const int mask = predictor.mask_id();
  if (first + levels > grid.levels) throw std::invalid_argument("decode: grid lacks the predicted levels");
  const std::size_t S = grid.steps;

  std::vector<std::size_t> masked;
  for (std::size_t t = 0; t < S; ++t) {
    const bool m0 = grid.at(first, t) == mask;
    for (std::size_t k = 1; k < levels; ++k) {
      if ((grid.at(first + k, t) == mask) != m0) {
        throw std::invalid_argument("decode: timestep " + std::to_string(t) + " is partially masked");
      }
    }
    if (m0) masked.push_back(t);
  }

  DecodeTrace trace;
  for (std::size_t it = 0; it < steps && !masked.empty(); ++it) {
    auto logits = predictor.predict(grid, true);
    ++trace.invocations;
    if (cfg_scale != 1.0) {
      const auto uncond = predictor.predict(grid, false);
      ++trace.invocations;
      for (std::size_t k = 0; k < levels; ++k) logits[k] = cfg_logits(logits[k], uncond[k], cfg_scale);
    }
    if (logits.size() != levels) throw std::logic_error("decode: predictor returned wrong level count");

    std::vector<std::vector<int>> sampled(masked.size(), std::vector<int>(levels));
    std::vector<double> log_p(masked.size(), 0.0);
    for (std::size_t i = 0; i < masked.size(); ++i) {
      const std::size_t t = masked[i];
      for (std::size_t k = 0; k < levels; ++k) {
        const auto& m = logits[k];
        const auto [tok, lp] = sample_categorical({m.data() + t * m.cols(), static_cast<std::size_t>(m.cols())}, rng);
        sampled[i][k] = tok;
        log_p[i] += lp;
      }
    }
    const double alpha = anneal_alpha(it, steps, alpha0);
    const auto z = confidence(log_p, alpha, rng);

    // At least one position is committed per iteration so the masked count
    // strictly decreases.
    const std::size_t k_raw = remask_count(it, steps, S);
    const std::size_t k = std::min(k_raw, masked.size() - 1);
    std::vector<std::size_t> order(masked.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (z[a] != z[b]) return z[a] < z[b];
      return masked[a] < masked[b];
    });

    DecodeIteration rec;
    rec.iteration = it;
    rec.masked_before = masked.size();
    rec.remasked = k;
    rec.alpha = alpha;
    rec.threshold = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> still;
    std::vector<bool> keep_masked(masked.size(), false);
    for (std::size_t r = 0; r < k; ++r) keep_masked[order[r]] = true;
    for (std::size_t i = 0; i < masked.size(); ++i) {
      if (keep_masked[i]) {
        still.push_back(masked[i]);
        continue;
      }
      for (std::size_t l = 0; l < levels; ++l) grid.at(first + l, masked[i]) = sampled[i][l];
      rec.threshold = std::min(rec.threshold, z[i]);
    }
    rec.finalized = masked.size() - k;
    rec.masked = k;
    masked = std::move(still);
    trace.iterations.push_back(rec);
  }
  if (!masked.empty()) {
    throw std::logic_error("decode: " + std::to_string(masked.size()) + " positions still masked after " +
                           std::to_string(steps) + " iterations\n" + trace.to_table());
  }
  return {std::move(grid), std::move(trace)};
}

std::pair<TokenGrid, DecodeTrace> iterative_decode(const MultiwayModel& backbone, const VisualFeatures& visual,
                                                   std::size_t timesteps, const DecodeConfig& cfg) {
  cfg.validate();
  const auto& mc = backbone.config();
  if (mc.predict_first != 0) throw std::invalid_argument("iterative_decode: model is not a backbone");
  TokenGrid grid(mc.input_levels, timesteps, mc.mask_id());
  ModelPredictor predictor(backbone, &visual);
  Rng rng(derive_seed(cfg.seed, {0x64656364}));
  return decode_masked(predictor, std::move(grid), cfg.steps, cfg.cfg_scale, cfg.alpha0, rng);
}

std::pair<TokenGrid, DecodeTrace> coarse_to_fine(const MultiwayModel& c2f, const TokenGrid& coarse,
                                                 const VisualFeatures& visual, const DecodeConfig& cfg) {
  cfg.validate();
  const auto& mc = c2f.config();
  if (mc.predict_first == 0) throw std::invalid_argument("coarse_to_fine: model has no conditioning levels");
  if (coarse.levels < mc.predict_first) {
    throw std::invalid_argument("coarse_to_fine: coarse grid has " + std::to_string(coarse.levels) + " levels, need " +
                                std::to_string(mc.predict_first));
  }
  TokenGrid grid(mc.input_levels, coarse.steps, mc.mask_id());
  for (std::size_t l = 0; l < mc.predict_first; ++l) {
    for (std::size_t t = 0; t < coarse.steps; ++t) {
      const int id = coarse.at(l, t);
      if (id < 0 || id >= mc.mask_id()) {
        throw std::invalid_argument("coarse_to_fine: coarse token " + std::to_string(id) + " at level " +
                                    std::to_string(l) + ", step " + std::to_string(t) + " is masked or invalid");
      }
      grid.at(l, t) = id;
    }
  }
  ModelPredictor predictor(c2f, &visual);
  Rng rng(derive_seed(cfg.seed, {0x633266}));
  return decode_masked(predictor, std::move(grid), cfg.c2f_steps, cfg.cfg_scale, cfg.alpha0, rng);
}

GenerateResult generate(const VisualFeatures& visual, const Codebooks& cb, const MultiwayModel& backbone,
                        const MultiwayModel* c2f, std::size_t levels, double seconds, const DecodeConfig& cfg) {
  if (!cb.trained) throw std::invalid_argument("generate: codebooks are not trained");
  const auto coarse_levels = backbone.config().input_levels;
  if (levels < coarse_levels || levels > cb.config.levels) {
    throw std::invalid_argument("generate: levels " + std::to_string(levels) + " outside [" +
                                std::to_string(coarse_levels) + ", " + std::to_string(cb.config.levels) + "]");
  }
  if (levels > coarse_levels && !c2f) {
    throw std::invalid_argument("generate: " + std::to_string(levels) + "-level decode requires a coarse-to-fine checkpoint");
  }
  const auto samples = static_cast<std::size_t>(std::llround(seconds * cb.config.sample_rate));
  const std::size_t steps = (samples + cb.config.frame_size - 1) / cb.config.frame_size;
  GenerateResult r;
  std::tie(r.tokens, r.trace) = iterative_decode(backbone, visual, steps, cfg);
  if (levels > coarse_levels) {
    if (c2f->config().input_levels != levels) {
      throw std::invalid_argument("generate: coarse-to-fine model covers " + std::to_string(c2f->config().input_levels) +
                                  " levels, requested " + std::to_string(levels));
    }
    auto [full, trace] = coarse_to_fine(*c2f, r.tokens, visual, cfg);
    r.tokens = std::move(full);
    r.c2f_trace = std::move(trace);
  }
  r.waveform = decode(r.tokens, cb, levels);
  r.waveform.samples.resize(samples);
  return r;
}

}  // namespace vab
