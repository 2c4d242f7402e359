#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vab/codec.hpp"
#include "vab/model.hpp"
#include "vab/sampler.hpp"
#include "vab/synthdata.hpp"
#include "vab/training.hpp"

namespace vab {

struct ConfigKey {
  std::string key;
  std::string default_value;
  std::string help;
};

// Every recognized key with its default, in documentation order.
const std::vector<ConfigKey>& config_keys();

/// Flat key=value settings with dotted namespaces. Lines starting with '#'
/// and blank lines are ignored. Unknown keys are rejected.
class Config {
 public:
  Config();  // all defaults

  void load_file(const std::string& path);
  void load_text(const std::string& text, const std::string& origin = "<text>");
  void set(const std::string& assignment);  // "key=value"
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;  // comma separated

  std::string to_text() const;     // sorted key=value lines
  std::string hash_hex() const;    // FNV-1a of to_text()
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

std::string config_help_text();

DatasetConfig dataset_config(const Config& c);
CodecConfig codec_config(const Config& c);
ModelConfig backbone_config(const Config& c, std::size_t visual_dim, std::size_t visual_frames);
TrainSchedule schedule_config(const Config& c, const std::string& ns);
PretrainConfig pretrain_config(const Config& c, const std::string& ns = "pretrain");
ContrastiveConfig contrastive_config(const Config& c);
ClassifyConfig classify_config(const Config& c, const std::string& ns, std::size_t classes);
DecodeConfig decode_config(const Config& c);

}  // namespace vab
