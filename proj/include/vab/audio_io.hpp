#pragma once

#include <string>

#include "vab/types.hpp"

namespace vab {

// PCM 16-bit little-endian mono WAV. Samples are clamped to [-1, 1].
void write_wav(const Waveform& w, const std::string& path);
Waveform read_wav(const std::string& path);

// Token file: "VABT", u32 version, u32 levels, u32 timesteps, u32 vocab,
// then row-major u16 tokens.
void write_tokens(const TokenGrid& g, std::size_t vocab, const std::string& path);
TokenGrid read_tokens(const std::string& path, std::size_t* vocab = nullptr);

// Visual feature file: "VABV", u32 version, u32 frames, u32 dim, row-major f64.
void write_visual(const VisualFeatures& v, const std::string& path);
VisualFeatures read_visual(const std::string& path);

}  // namespace vab
