// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VQSE_WAV_HPP_
#define VQSE_WAV_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "vqse/common.hpp"

namespace vqse {

// Mono time-domain audio, full scale +-1.0, fixed 16 kHz.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  std::int64_t size() const { return static_cast<std::int64_t>(samples.size()); }
};

// PCM 16-bit signed little-endian, mono, 16 kHz. Samples are mapped to
// [-1, 1) by division by 32768 on read; writing rounds and clamps.
Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& w);

}  // namespace vqse

#endif  // VQSE_WAV_HPP_
