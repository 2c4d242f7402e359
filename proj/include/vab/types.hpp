#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "vab/linalg.hpp"

namespace vab {

struct Waveform {
  int sample_rate = 16000;
  std::vector<double> samples;

  double seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// Integer token matrix of shape levels × steps, stored level-major.
struct TokenGrid {
  std::size_t levels = 0;
  std::size_t steps = 0;
  std::vector<int> tokens;

  TokenGrid() = default;
  TokenGrid(std::size_t levels_, std::size_t steps_, int fill = 0)
      : levels(levels_), steps(steps_), tokens(levels_ * steps_, fill) {}

  int& at(std::size_t level, std::size_t step) { return tokens[level * steps + step]; }
  int at(std::size_t level, std::size_t step) const { return tokens[level * steps + step]; }

  // Rows [first, first + count) as a new grid.
  TokenGrid level_range(std::size_t first, std::size_t count) const {
    if (first + count > levels) throw std::out_of_range("token grid: level range beyond grid");
    TokenGrid out(count, steps);
    std::copy(tokens.begin() + static_cast<std::ptrdiff_t>(first * steps),
              tokens.begin() + static_cast<std::ptrdiff_t>((first + count) * steps), out.tokens.begin());
    return out;
  }

  bool operator==(const TokenGrid&) const = default;
};

// frames × feature-dim, one row per second of video.
using VisualFeatures = Matrix;

}  // namespace vab
