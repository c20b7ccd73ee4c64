// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vqse/dsp.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>

namespace vqse::dsp {

namespace {

constexpr double kPi = 3.14159265358979323846;

// FFTW plan creation is not thread-safe; executions on private buffers are.
// One cached plan pair per transform size per thread.
class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    std::lock_guard<std::mutex> lock(planner_mutex());
    in_ = fftw_alloc_real(static_cast<std::size_t>(n));
    out_ = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    fwd_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_1d(n, out_, in_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  void forward(const double* x, std::complex<double>* spec) {
    for (int i = 0; i < n_; ++i) in_[i] = x[i];
    fftw_execute(fwd_);
    for (int k = 0; k <= n_ / 2; ++k) spec[k] = {out_[k][0], out_[k][1]};
  }

  // FFTW's c2r is unnormalized; divide by n here.
  void inverse(const std::complex<double>* spec, double* x) {
    for (int k = 0; k <= n_ / 2; ++k) {
      out_[k][0] = spec[k].real();
      out_[k][1] = spec[k].imag();
    }
    fftw_execute(inv_);
    const double scale = 1.0 / static_cast<double>(n_);
    for (int i = 0; i < n_; ++i) x[i] = in_[i] * scale;
  }

  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }

 private:
  int n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan fwd_;
  fftw_plan inv_;
};

RealFft& cached_fft(int n) {
  thread_local std::map<int, std::unique_ptr<RealFft>> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, std::make_unique<RealFft>(n)).first;
  return *it->second;
}

}  // namespace

WindowType parse_window(const std::string& name) {
  if (name == "hann") return WindowType::kHann;
  if (name == "rect") return WindowType::kRect;
  throw ConfigError("unknown window type: " + name);
}

std::string window_name(WindowType w) {
  return w == WindowType::kHann ? "hann" : "rect";
}

std::vector<double> make_window(const StftConfig& cfg) {
  std::vector<double> w(static_cast<std::size_t>(cfg.window_length));
  switch (cfg.window) {
    case WindowType::kHann:
      // Periodic Hann.
      for (int i = 0; i < cfg.window_length; ++i)
        w[static_cast<std::size_t>(i)] =
            0.5 * (1.0 - std::cos(2.0 * kPi * i / cfg.window_length));
      break;
    case WindowType::kRect:
      std::fill(w.begin(), w.end(), 1.0);
      break;
  }
  return w;
}

void validate_stft_config(const StftConfig& cfg) {
  require_config(cfg.window_length > 0 && cfg.hop_length > 0 && cfg.fft_size > 0,
                 "stft sizes must be positive");
  require_config(cfg.hop_length <= cfg.window_length && cfg.window_length <= cfg.fft_size,
                 "require hop_length <= window_length <= fft_size");
  // The synthesis normalizes by the overlap-added window power; that sum
  // must stay bounded away from zero over one hop period of the interior.
  std::vector<double> w = make_window(cfg);
  const int W = cfg.window_length, H = cfg.hop_length;
  double min_sum = 1e300, max_sum = 0.0;
  for (int n = 0; n < H; ++n) {
    double s = 0.0;
    for (int m = n; m < W; m += H) s += w[static_cast<std::size_t>(m)] * w[static_cast<std::size_t>(m)];
    min_sum = std::min(min_sum, s);
    max_sum = std::max(max_sum, s);
  }
  require_config(max_sum > 0.0 && min_sum >= 0.1 * max_sum && min_sum > 1e-8,
                 "window/hop pair does not overlap-add to a well-conditioned constant");
}

ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg) {
  validate_stft_config(cfg);
  require_input(w.size() >= cfg.window_length,
                "waveform shorter than one analysis window");

  const int W = cfg.window_length, H = cfg.hop_length, N = cfg.fft_size;
  const std::int64_t T = 1 + (w.size() - W) / H;
  const std::int64_t F = N / 2 + 1;
  std::vector<double> win = make_window(cfg);

  ComplexSpectrogram spec;
  spec.frames = T;
  spec.bins = F;
  spec.config = cfg;
  spec.data.resize(static_cast<std::size_t>(T * F));

  std::vector<double> frame(static_cast<std::size_t>(N), 0.0);
  RealFft& fft = cached_fft(N);
  for (std::int64_t t = 0; t < T; ++t) {
    const double* src = w.samples.data() + t * H;
    for (int i = 0; i < W; ++i) frame[static_cast<std::size_t>(i)] = src[i] * win[static_cast<std::size_t>(i)];
    // Zero padding beyond the window is already in place.
    fft.forward(frame.data(), spec.data.data() + t * F);
  }
  return spec;
}

std::vector<double> overlap_add_weight(const StftConfig& cfg, std::int64_t frames) {
  const int W = cfg.window_length, H = cfg.hop_length;
  const std::int64_t n = (frames - 1) * H + W;
  std::vector<double> win = make_window(cfg);
  std::vector<double> denom(static_cast<std::size_t>(n), 0.0);
  for (std::int64_t t = 0; t < frames; ++t)
    for (int i = 0; i < W; ++i)
      denom[static_cast<std::size_t>(t * H + i)] +=
          win[static_cast<std::size_t>(i)] * win[static_cast<std::size_t>(i)];
  return denom;
}

Waveform istft(const ComplexSpectrogram& spec, const StftConfig& cfg) {
  validate_stft_config(cfg);
  require_input(spec.bins == cfg.fft_size / 2 + 1, "spectrogram bins do not match fft size");
  require_input(spec.frames >= 1, "empty spectrogram");

  const int W = cfg.window_length, H = cfg.hop_length, N = cfg.fft_size;
  const std::int64_t T = spec.frames;
  const std::int64_t n = (T - 1) * H + W;

  Waveform out;
  out.samples.assign(static_cast<std::size_t>(n), 0.0);
  std::vector<double> denom = overlap_add_weight(cfg, T);
  std::vector<double> win = make_window(cfg);
  std::vector<double> frame(static_cast<std::size_t>(N), 0.0);

  RealFft& fft = cached_fft(N);
  for (std::int64_t t = 0; t < T; ++t) {
    fft.inverse(spec.data.data() + t * spec.bins, frame.data());
    const std::int64_t off = t * H;
    for (int i = 0; i < W; ++i)
      out.samples[static_cast<std::size_t>(off + i)] += frame[static_cast<std::size_t>(i)] * win[static_cast<std::size_t>(i)];
  }
  for (std::int64_t i = 0; i < n; ++i) {
    if (denom[static_cast<std::size_t>(i)] > 1e-8)
      out.samples[static_cast<std::size_t>(i)] /= denom[static_cast<std::size_t>(i)];
    else
      out.samples[static_cast<std::size_t>(i)] = 0.0;
  }
  return out;
}

LogPowerSpectrogram log_power(const ComplexSpectrogram& spec, double floor_epsilon) {
  require_input(floor_epsilon > 0.0, "floor_epsilon must be positive");
  LogPowerSpectrogram out;
  out.frames = spec.frames;
  out.bins = spec.bins;
  out.floor_epsilon = floor_epsilon;
  out.data.resize(spec.data.size());
  for (std::size_t i = 0; i < spec.data.size(); ++i)
    out.data[i] = std::log(std::max(std::norm(spec.data[i]), floor_epsilon));
  return out;
}

MagnitudeSpectrogram magnitude(const ComplexSpectrogram& spec) {
  MagnitudeSpectrogram out;
  out.frames = spec.frames;
  out.bins = spec.bins;
  out.data.resize(spec.data.size());
  for (std::size_t i = 0; i < spec.data.size(); ++i) out.data[i] = std::abs(spec.data[i]);
  return out;
}

MagnitudeSpectrogram apply_gain(const std::vector<double>& gains, std::int64_t frames,
                                std::int64_t bins, const ComplexSpectrogram& x) {
  require_input(frames == x.frames && bins == x.bins &&
                    static_cast<std::int64_t>(gains.size()) == frames * bins,
                "gain mask shape does not match spectrogram");
  MagnitudeSpectrogram out;
  out.frames = x.frames;
  out.bins = x.bins;
  out.data.resize(x.data.size());
  for (std::size_t i = 0; i < x.data.size(); ++i) out.data[i] = gains[i] * std::abs(x.data[i]);
  return out;
}

ComplexSpectrogram recombine_phase(const MagnitudeSpectrogram& mag, const ComplexSpectrogram& x) {
  require_input(mag.frames == x.frames && mag.bins == x.bins,
                "magnitude shape does not match spectrogram");
  ComplexSpectrogram out;
  out.frames = x.frames;
  out.bins = x.bins;
  out.config = x.config;
  out.data.resize(x.data.size());
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    double a = std::abs(x.data[i]);
    if (a == 0.0)
      out.data[i] = {mag.data[i], 0.0};
    else
      out.data[i] = x.data[i] * (mag.data[i] / a);
  }
  return out;
}

std::vector<std::complex<double>> rfft(const std::vector<double>& x, int n) {
  require_input(n > 0, "fft size must be positive");
  std::vector<double> buf(static_cast<std::size_t>(n), 0.0);
  std::copy_n(x.begin(), std::min<std::size_t>(x.size(), static_cast<std::size_t>(n)), buf.begin());
  std::vector<std::complex<double>> spec(static_cast<std::size_t>(n / 2 + 1));
  cached_fft(n).forward(buf.data(), spec.data());
  return spec;
}

std::vector<double> irfft(const std::vector<std::complex<double>>& spec, int n) {
  require_input(n > 0 && static_cast<int>(spec.size()) == n / 2 + 1,
                "spectrum size does not match fft size");
  std::vector<double> out(static_cast<std::size_t>(n));
  cached_fft(n).inverse(spec.data(), out.data());
  return out;
}

}  // namespace vqse::dsp
