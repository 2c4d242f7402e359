#include "vab/checkpoint.hpp"

#include <sstream>

#include <zlib.h>

#include "vab/binary_io.hpp"
#include "vab/errors.hpp"

namespace vab {

namespace {

constexpr std::uint32_t kVersion = 1;

std::uint32_t crc_of(const char* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n));
  return static_cast<std::uint32_t>(crc);
}

std::string metadata_text(const std::map<std::string, std::string>& m) {
  std::string out;
  for (const auto& [k, v] : m) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw std::invalid_argument("checkpoint metadata entry '" + k + "' contains '=' or a newline");
    }
    out += k + "=" + v + "\n";
  }
  return out;
}

std::map<std::string, std::string> parse_metadata(const std::string& text) {
  std::map<std::string, std::string> m;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError("checkpoint: malformed metadata line '" + line + "'");
    m[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return m;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  bin::Writer w;
  w.magic("VABM");
  w.put<std::uint32_t>(kVersion);
  w.str(ckpt.kind);
  w.str(ckpt.config_text);
  w.str(metadata_text(ckpt.metadata));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.params.items().size()));
  for (const auto& [name, t] : ckpt.params.items()) {
    w.str(name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.put<std::uint64_t>(d);
    for (double v : t.data()) w.put<double>(v);
  }
  const auto crc = crc_of(w.buffer().data(), w.buffer().size());
  w.put<std::uint32_t>(crc);
  w.save(path);
}

Checkpoint load_checkpoint(const std::string& path) {
  bin::Reader r = [&] {
    try {
      return bin::Reader::open(path);
    } catch (const std::runtime_error& e) {
      throw ValidationError(e.what());
    }
  }();
  if (r.size() < 12) throw ValidationError(path + ": truncated checkpoint");
  const std::size_t payload = r.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, r.buffer().data() + payload, 4);
  if (crc_of(r.buffer().data(), payload) != stored) throw ValidationError(path + ": checkpoint CRC mismatch (corrupt file)");
  try {
    r.expect_magic("VABM");
    const auto version = r.get<std::uint32_t>();
    if (version != kVersion) throw ValidationError(path + ": unsupported checkpoint version " + std::to_string(version));
    Checkpoint c;
    c.kind = r.str();
    c.config_text = r.str();
    c.metadata = parse_metadata(r.str());
    const auto n = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n; ++i) {
      auto name = r.str();
      const auto rank = r.get<std::uint32_t>();
      Shape shape(rank);
      for (auto& d : shape) d = r.get<std::uint64_t>();
      std::vector<double> values(shape_numel(shape));
      for (auto& v : values) v = r.get<double>();
      c.params.insert(name, Tensor::from(std::move(shape), std::move(values), true));
    }
    if (r.pos() != payload) throw ValidationError(path + ": trailing bytes in checkpoint");
    return c;
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

void save_model(const MultiwayModel& model, const std::string& kind,
                const std::map<std::string, std::string>& metadata, const std::string& path) {
  Checkpoint c;
  c.kind = kind;
  c.config_text = model.config().to_text();
  c.metadata = metadata;
  c.params = model.params().deep_copy();
  save_checkpoint(c, path);
}

MultiwayModel load_model(const std::string& path, const std::string& expected_kind,
                         std::map<std::string, std::string>* metadata) {
  Checkpoint c = load_checkpoint(path);
  if (!expected_kind.empty() && c.kind != expected_kind) {
    throw ValidationError(path + ": checkpoint kind '" + c.kind + "', expected '" + expected_kind + "'");
  }
  if (metadata) *metadata = c.metadata;
  try {
    return MultiwayModel(ModelConfig::from_text(c.config_text), std::move(c.params));
  } catch (const std::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

}  // namespace vab
