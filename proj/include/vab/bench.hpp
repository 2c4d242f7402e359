#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vab/codec.hpp"
#include "vab/metrics.hpp"
#include "vab/model.hpp"
#include "vab/sampler.hpp"
#include "vab/synthdata.hpp"

namespace vab {

struct BenchCell {
  std::string config_id;
  double cfg_scale = 5.0;
  double alpha0 = 10.5;
  std::size_t steps = 16;
  std::uint64_t seed = 0;
};

struct BenchRow {
  BenchCell cell;
  double fad = 0.0;
  double kld = 0.0;
  double agreement = 0.0;        // probe audio class == visual factor mod C_a
  std::size_t invocations = 0;   // per clip
  double seconds = 0.0;          // wall clock per clip
};

struct BenchReport {
  std::vector<BenchRow> rows;

  std::string to_tsv() const;
  std::string to_table() const;
  // TSV without the wall-clock column.
  std::string metrics_tsv() const;
};

struct BenchAxes {
  std::vector<std::string> axes;  // subset of cfg_scale, alpha0, steps
  std::vector<double> cfg_scales{1, 3, 5, 7, 11};
  std::vector<double> alpha0s{4.5, 10.5, 12.5, 15.5, 20.5, 25.5};
  std::vector<std::size_t> steps{8, 16, 36, 48};
  std::vector<std::uint64_t> seeds{0};
  DecodeConfig defaults{};
};

/// Cells of the sweep: for each requested axis its grid with the other two
/// axes at their defaults, times every seed. Duplicate cells across axes
/// are kept so the row count is Σ|axis| × |seeds|.
std::vector<BenchCell> bench_grid(const BenchAxes& axes);

struct BenchInputs {
  const MultiwayModel* backbone = nullptr;
  const Codebooks* codebooks = nullptr;
  const EvalProbe* probe = nullptr;
  std::span<const PairedSample> eval_set;  // references and conditioning
  std::size_t audio_factors = 4;
  std::size_t levels = 4;                  // codec levels decoded for the waveform
};

/// Generates every eval clip for each cell and scores it. Cells are split
/// over `threads` workers; every row depends only on its cell.
BenchReport run_bench(const BenchInputs& in, std::span<const BenchCell> cells, std::size_t threads = 1);

/// One cell's waveforms (exposed for tests and the CLI).
std::vector<Waveform> generate_cell(const BenchInputs& in, const BenchCell& cell, std::size_t* invocations = nullptr);

}  // namespace vab
