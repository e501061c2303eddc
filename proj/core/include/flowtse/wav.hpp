#pragma once

#include <string>

#include "flowtse/dsp.hpp"

namespace flowtse {

enum class WavEncoding { kPcm16, kFloat32 };

// Mono WAV read. Multi-channel files are averaged to mono.
Waveform read_wav(const std::string& path);

// Read + resample to target_rate (linear) in one step.
Waveform load_audio(const std::string& path, int target_rate);

void write_wav(const std::string& path, const Waveform& w,
               WavEncoding enc = WavEncoding::kFloat32);

}  // namespace flowtse
