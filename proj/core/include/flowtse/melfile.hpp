#pragma once

#include <string>

#include "flowtse/config.hpp"
#include "flowtse/dsp.hpp"

namespace flowtse {

// Versioned mel container: JSON header carrying the feature config,
// then raw doubles. Loading refuses a mismatched feature config hash.
void write_mel_file(const std::string& path, const MelSpectrogram& mel,
                    const FeatureConfig& feat);
MelSpectrogram read_mel_file(const std::string& path, const FeatureConfig& expected);

}  // namespace flowtse
