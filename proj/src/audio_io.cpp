#include "vab/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

#include "vab/binary_io.hpp"

namespace vab {

namespace {
constexpr std::uint32_t kTokenVersion = 1;
constexpr std::uint32_t kVisualVersion = 1;
}  // namespace

void write_wav(const Waveform& w, const std::string& path) {
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  bin::Writer out;
  out.magic("RIFF");
  out.put<std::uint32_t>(36 + 2 * n);
  out.magic("WAVE");
  out.magic("fmt ");
  out.put<std::uint32_t>(16);
  out.put<std::uint16_t>(1);  // PCM
  out.put<std::uint16_t>(1);  // mono
  out.put<std::uint32_t>(static_cast<std::uint32_t>(w.sample_rate));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(w.sample_rate) * 2);
  out.put<std::uint16_t>(2);
  out.put<std::uint16_t>(16);
  out.magic("data");
  out.put<std::uint32_t>(2 * n);
  for (double s : w.samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    out.put<std::int16_t>(static_cast<std::int16_t>(std::lround(c * 32767.0)));
  }
  out.save(path);
}

Waveform read_wav(const std::string& path) {
  auto r = bin::Reader::open(path);
  r.expect_magic("RIFF");
  r.get<std::uint32_t>();
  r.expect_magic("WAVE");
  Waveform w;
  bool have_fmt = false;
  while (r.pos() + 8 <= r.size()) {
    std::string id(r.buffer().data() + r.pos(), 4);
    r.expect_magic(id);
    const auto len = r.get<std::uint32_t>();
    if (id == "fmt ") {
      const auto format = r.get<std::uint16_t>();
      const auto channels = r.get<std::uint16_t>();
      w.sample_rate = static_cast<int>(r.get<std::uint32_t>());
      r.get<std::uint32_t>();
      r.get<std::uint16_t>();
      const auto bits = r.get<std::uint16_t>();
      if (format != 1 || channels != 1 || bits != 16) {
        throw std::runtime_error(path + ": only PCM 16-bit mono WAV is supported");
      }
      for (std::uint32_t i = 16; i < len; ++i) r.get<char>();
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw std::runtime_error(path + ": data chunk before fmt chunk");
      w.samples.resize(len / 2);
      for (auto& s : w.samples) s = r.get<std::int16_t>() / 32767.0;
      return w;
    } else {
      for (std::uint32_t i = 0; i < len; ++i) r.get<char>();
    }
  }
  throw std::runtime_error(path + ": no data chunk");
}

void write_tokens(const TokenGrid& g, std::size_t vocab, const std::string& path) {
  if (vocab > std::numeric_limits<std::uint16_t>::max()) throw std::invalid_argument("write_tokens: vocab exceeds u16");
  bin::Writer w;
  w.magic("VABT");
  w.put<std::uint32_t>(kTokenVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(g.levels));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(g.steps));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(vocab));
  for (int t : g.tokens) {
    if (t < 0 || t > static_cast<int>(std::numeric_limits<std::uint16_t>::max())) {
      throw std::out_of_range("write_tokens: token " + std::to_string(t) + " does not fit u16");
    }
    w.put<std::uint16_t>(static_cast<std::uint16_t>(t));
  }
  w.save(path);
}

TokenGrid read_tokens(const std::string& path, std::size_t* vocab) {
  auto r = bin::Reader::open(path);
  r.expect_magic("VABT");
  const auto version = r.get<std::uint32_t>();
  if (version != kTokenVersion) throw std::runtime_error(path + ": unsupported token file version");
  const auto levels = r.get<std::uint32_t>();
  const auto steps = r.get<std::uint32_t>();
  const auto v = r.get<std::uint32_t>();
  TokenGrid g(levels, steps);
  for (auto& t : g.tokens) t = r.get<std::uint16_t>();
  if (vocab) *vocab = v;
  return g;
}

void write_visual(const VisualFeatures& v, const std::string& path) {
  bin::Writer w;
  w.magic("VABV");
  w.put<std::uint32_t>(kVisualVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(v.rows()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(v.cols()));
  for (Eigen::Index i = 0; i < v.size(); ++i) w.put<double>(v.data()[i]);
  w.save(path);
}

VisualFeatures read_visual(const std::string& path) {
  auto r = bin::Reader::open(path);
  r.expect_magic("VABV");
  const auto version = r.get<std::uint32_t>();
  if (version != kVisualVersion) throw std::runtime_error(path + ": unsupported visual file version");
  const auto frames = r.get<std::uint32_t>();
  const auto dim = r.get<std::uint32_t>();
  VisualFeatures v(frames, dim);
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = r.get<double>();
  return v;
}

}  // namespace vab
