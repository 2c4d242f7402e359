#include "vab/bench.hpp"

#include <chrono>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace vab {

namespace {

std::string fmt(double v, int prec = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

std::vector<std::string> row_fields(const BenchRow& r, bool with_time) {
  std::vector<std::string> f = {r.cell.config_id, fmt(r.cell.cfg_scale), fmt(r.cell.alpha0),
                                std::to_string(r.cell.steps), std::to_string(r.cell.seed),
                                fmt(r.fad, 10), fmt(r.kld, 10), fmt(r.agreement, 10),
                                std::to_string(r.invocations)};
  if (with_time) f.push_back(fmt(r.seconds, 4));
  return f;
}

std::vector<std::string> header(bool with_time) {
  std::vector<std::string> h = {"config", "cfg_scale", "alpha0", "steps", "seed", "fad", "kld", "agreement",
                                "invocations"};
  if (with_time) h.push_back("seconds_per_clip");
  return h;
}

std::string tsv(const BenchReport& r, bool with_time) {
  std::ostringstream o;
  auto line = [&](const std::vector<std::string>& f) {
    for (std::size_t i = 0; i < f.size(); ++i) o << (i ? "\t" : "") << f[i];
    o << '\n';
  };
  line(header(with_time));
  for (const auto& row : r.rows) line(row_fields(row, with_time));
  return o.str();
}

}  // namespace

std::string BenchReport::to_tsv() const { return tsv(*this, true); }
std::string BenchReport::metrics_tsv() const { return tsv(*this, false); }

std::string BenchReport::to_table() const {
  std::vector<std::vector<std::string>> cells = {header(true)};
  for (const auto& row : rows) cells.push_back(row_fields(row, true));
  std::vector<std::size_t> width(cells[0].size(), 0);
  for (const auto& r : cells)
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  std::ostringstream o;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    for (std::size_t i = 0; i < cells[k].size(); ++i) {
      o << (i ? "  " : "") << cells[k][i] << std::string(width[i] - cells[k][i].size(), ' ');
    }
    o << '\n';
    if (k == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w + 2;
      o << std::string(total - 2, '-') << '\n';
    }
  }
  return o.str();
}

std::vector<BenchCell> bench_grid(const BenchAxes& a) {
  if (a.seeds.empty()) throw std::invalid_argument("bench: no seeds");
  if (a.axes.empty()) throw std::invalid_argument("bench: no axes requested");
  std::vector<BenchCell> out;
  for (const auto& axis : a.axes) {
    std::vector<BenchCell> base;
    auto cell = [&](const std::string& id) {
      BenchCell c;
      c.config_id = id;
      c.cfg_scale = a.defaults.cfg_scale;
      c.alpha0 = a.defaults.alpha0;
      c.steps = a.defaults.steps;
      return c;
    };
    if (axis == "cfg_scale") {
      for (double s : a.cfg_scales) {
        auto c = cell("cfg_scale=" + fmt(s));
        c.cfg_scale = s;
        base.push_back(c);
      }
    } else if (axis == "alpha0") {
      for (double v : a.alpha0s) {
        auto c = cell("alpha0=" + fmt(v));
        c.alpha0 = v;
        base.push_back(c);
      }
    } else if (axis == "steps") {
      for (auto v : a.steps) {
        auto c = cell("steps=" + std::to_string(v));
        c.steps = v;
        base.push_back(c);
      }
    } else {
      throw std::invalid_argument("bench: unknown axis '" + axis + "' (cfg_scale, alpha0, steps)");
    }
    for (const auto& c : base) {
      for (auto seed : a.seeds) {
        auto s = c;
        s.seed = seed;
        out.push_back(s);
      }
    }
  }
  return out;
}

std::vector<Waveform> generate_cell(const BenchInputs& in, const BenchCell& cell, std::size_t* invocations) {
  if (!in.backbone) throw std::invalid_argument("bench: missing backbone checkpoint (pretrain)");
  if (!in.codebooks) throw std::invalid_argument("bench: missing codebooks (codec-train)");
  std::vector<Waveform> out;
  out.reserve(in.eval_set.size());
  std::size_t calls = 0;
  for (std::size_t i = 0; i < in.eval_set.size(); ++i) {
    const auto& ref = in.eval_set[i];
    DecodeConfig d;
    d.cfg_scale = cell.cfg_scale;
    d.alpha0 = cell.alpha0;
    d.steps = cell.steps;
    d.seed = derive_seed(cell.seed, {0xbe4c, i});
    auto g = generate(ref.visual, *in.codebooks, *in.backbone, nullptr, in.levels, ref.waveform.seconds(), d);
    calls = g.trace.invocations;
    out.push_back(std::move(g.waveform));
  }
  if (invocations) *invocations = calls;
  return out;
}

BenchReport run_bench(const BenchInputs& in, std::span<const BenchCell> cells, std::size_t threads) {
  if (!in.probe) throw std::invalid_argument("bench: missing evaluation probe (probe-train)");
  if (!in.codebooks) throw std::invalid_argument("bench: missing codebooks (codec-train)");
  if (in.eval_set.size() < 2) throw std::invalid_argument("bench: need at least 2 eval clips");
  const auto& frames = in.codebooks->config;

  std::vector<Waveform> refs;
  for (const auto& s : in.eval_set) refs.push_back(s.waveform);
  const Matrix ref_feat = EvalProbe::waveform_features(refs, frames);
  const Matrix ref_emb = in.probe->embed(ref_feat);
  const Matrix ref_prob = in.probe->probabilities(ref_feat);

  BenchReport report;
  report.rows.resize(cells.size());
  auto run_one = [&](std::size_t k) {
    const auto t0 = std::chrono::steady_clock::now();
    BenchRow row;
    row.cell = cells[k];
    const auto clips = generate_cell(in, cells[k], &row.invocations);
    const auto t1 = std::chrono::steady_clock::now();
    const Matrix feat = EvalProbe::waveform_features(clips, frames);
    row.fad = frechet_distance(ref_emb, in.probe->embed(feat));
    row.kld = kld_metric(ref_prob, in.probe->probabilities(feat));
    const auto pred = in.probe->predict(feat);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      hit += pred[i] == in.eval_set[i].label.visual_factor % in.audio_factors ? 1 : 0;
    }
    row.agreement = static_cast<double>(hit) / static_cast<double>(pred.size());
    row.seconds = std::chrono::duration<double>(t1 - t0).count() / static_cast<double>(clips.size());
    report.rows[k] = std::move(row);
  };

  threads = std::max<std::size_t>(1, std::min(threads, cells.size()));
  if (threads == 1) {
    for (std::size_t k = 0; k < cells.size(); ++k) run_one(k);
    return report;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t k = w; k < cells.size(); k += threads) run_one(k);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return report;
}

}  // namespace vab
