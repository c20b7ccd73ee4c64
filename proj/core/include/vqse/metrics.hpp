// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VQSE_METRICS_HPP_
#define VQSE_METRICS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "vqse/vqvae.hpp"
#include "vqse/wav.hpp"

namespace vqse::enh {
class EnhancerModel;
}

namespace vqse::metrics {

struct SiSdrResult {
  double value_db = 0.0;  // clamped to [-60, +60]
};

// s_target = (<est, ref>/|ref|^2) ref; value = 10 log10(|s_target|^2 /
// |est - s_target|^2), clamped to +-60 dB. Scale-invariant in the
// estimate; not symmetric in its arguments.
SiSdrResult si_sdr(const Waveform& estimate, const Waveform& reference);

// Rank correlation (average ranks on ties).
double spearman(const std::vector<double>& a, const std::vector<double>& b);

// Removes the component of noise parallel to speech, so a mixture built
// from the result scores an SI-SDR equal to its mixing SNR.
Waveform orthogonalize_noise(const Waveform& noise, const Waveform& speech);

struct MarginCurve {
  std::vector<double> snr_bins_db;
  std::vector<double> mean_margin;  // mean over bins of d(e,q_s) - d(e,q_n)
  std::vector<double> std_margin;
  std::vector<std::int64_t> count;  // bins aggregated per SNR
};

struct MarginDiagConfig {
  std::vector<double> snr_grid_db = {-10, -5, 0, 5, 10};
  int mixtures_per_snr = 8;
  double segment_seconds = 1.0;
  std::uint64_t seed = 0;
};

// Mixes validation speech/noise at each grid SNR (deterministic level),
// runs the frozen VQ-VAE forward on the degraded features, and
// aggregates the per-bin embedding margin.
MarginCurve margin_diagnostic(vq::VqVaeModel& frozen_vqvae, const vq::PairedPool& validation,
                              const MarginDiagConfig& cfg);

void write_margin_csv(const std::string& path, const MarginCurve& curve);

struct EvalRow {
  double snr_db = 0.0;
  std::string split;  // "seen" | "unseen"
  double si_sdr_degraded = 0.0;
  double si_sdr_enhanced = 0.0;
  double improvement = 0.0;  // enhanced - degraded
  std::int64_t count = 0;    // 0 marks a missing condition cell
};

struct EvalReport {
  std::vector<EvalRow> rows;
};

struct EvalConfig {
  std::vector<double> snr_grid_db = {-10, -5, 0, 5, 10};
  int mixtures_per_condition = 50;
  bool orthogonalize = true;
  double segment_seconds = 1.0;
  std::uint64_t seed = 0;
};

struct TestPools {
  std::vector<const Waveform*> clean;
  std::vector<const Waveform*> noise_seen;
  std::vector<const Waveform*> noise_unseen;
};

EvalReport eval_report(const enh::EnhancerModel& model, const TestPools& pools,
                       const EvalConfig& cfg);

void write_eval_csv(const std::string& path, const EvalReport& report);
std::string render_eval_table(const EvalReport& report);

}  // namespace vqse::metrics

#endif  // VQSE_METRICS_HPP_
