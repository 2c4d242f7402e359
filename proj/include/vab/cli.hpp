#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "vab/synthdata.hpp"

namespace vab {

/// Runs one subcommand. Returns 0 on success, 1 on a validation error (bad
/// config, missing or corrupt input) and 2 on any other failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

// Split names in datagen index order.
const std::vector<std::string>& split_names();

/// Reads a split written by `datagen` from `<dir>/<split>/manifest.txt`.
std::vector<PairedSample> load_split(const std::string& dir, const std::string& split);

// FNV-1a of a file's bytes, as recorded in run manifests.
std::string file_hash(const std::string& path);

}  // namespace vab
