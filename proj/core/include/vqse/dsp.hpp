// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VQSE_DSP_HPP_
#define VQSE_DSP_HPP_

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "vqse/common.hpp"
#include "vqse/wav.hpp"

namespace vqse::dsp {

enum class WindowType { kHann, kRect };

WindowType parse_window(const std::string& name);
std::string window_name(WindowType w);

// Frames are taken without centering; a final partial window is dropped,
// so T = 1 + floor((len - window_length) / hop_length).
struct StftConfig {
  int window_length = 512;
  int hop_length = 256;
  int fft_size = 512;
  WindowType window = WindowType::kHann;

  bool operator==(const StftConfig&) const = default;
};

// Throws ConfigError unless hop <= window <= fft size and the window/hop
// pair overlap-adds to a well-conditioned constant (reconstruction-safe).
void validate_stft_config(const StftConfig& cfg);

// Periodic window of the configured length.
std::vector<double> make_window(const StftConfig& cfg);

struct ComplexSpectrogram {
  std::int64_t frames = 0;  // T
  std::int64_t bins = 0;    // F = fft_size/2 + 1
  std::vector<std::complex<double>> data;  // row-major T x F
  StftConfig config;

  std::complex<double>& at(std::int64_t t, std::int64_t k) { return data[static_cast<std::size_t>(t * bins + k)]; }
  std::complex<double> at(std::int64_t t, std::int64_t k) const { return data[static_cast<std::size_t>(t * bins + k)]; }
};

struct MagnitudeSpectrogram {
  std::int64_t frames = 0;
  std::int64_t bins = 0;
  std::vector<double> data;  // row-major T x F, nonnegative

  double& at(std::int64_t t, std::int64_t k) { return data[static_cast<std::size_t>(t * bins + k)]; }
  double at(std::int64_t t, std::int64_t k) const { return data[static_cast<std::size_t>(t * bins + k)]; }
};

struct LogPowerSpectrogram {
  std::int64_t frames = 0;
  std::int64_t bins = 0;
  std::vector<double> data;  // row-major T x F, every entry >= log(floor_epsilon)
  double floor_epsilon = 1e-10;

  double& at(std::int64_t t, std::int64_t k) { return data[static_cast<std::size_t>(t * bins + k)]; }
  double at(std::int64_t t, std::int64_t k) const { return data[static_cast<std::size_t>(t * bins + k)]; }
};

ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg);

// Weighted overlap-add synthesis with per-sample window-power
// normalization. Output length is (T-1)*hop + window; samples where the
// window power sums to ~0 are left at zero.
Waveform istft(const ComplexSpectrogram& spec, const StftConfig& cfg);

// out[t,k] = log(max(|spec[t,k]|^2, floor_epsilon))
LogPowerSpectrogram log_power(const ComplexSpectrogram& spec, double floor_epsilon = 1e-10);

MagnitudeSpectrogram magnitude(const ComplexSpectrogram& spec);

// |S_hat| = G .* |X|; G entries must lie in [0,1].
MagnitudeSpectrogram apply_gain(const std::vector<double>& gains, std::int64_t frames,
                                std::int64_t bins, const ComplexSpectrogram& x);

// out = mag * X/|X|; bins with |X| == 0 use zero phase (out = mag).
ComplexSpectrogram recombine_phase(const MagnitudeSpectrogram& mag, const ComplexSpectrogram& x);

// Per-sample overlap-added window power for a T-frame synthesis; istft
// normalizes by this and leaves samples with ~zero weight at zero.
std::vector<double> overlap_add_weight(const StftConfig& cfg, std::int64_t frames);

// Real FFT helpers (also used for toy-signal synthesis and analysis).
// rfft returns n/2+1 bins of the n-point DFT of the input (input is
// zero-padded or truncated to n); irfft inverts back to n real samples.
std::vector<std::complex<double>> rfft(const std::vector<double>& x, int n);
std::vector<double> irfft(const std::vector<std::complex<double>>& spec, int n);

}  // namespace vqse::dsp

#endif  // VQSE_DSP_HPP_
