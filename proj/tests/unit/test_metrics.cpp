// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vqse/metrics.hpp"

#include <doctest.h>

#include <cmath>

#include "vqse/enhancer.hpp"

using namespace vqse;
using namespace vqse::metrics;

namespace {

Waveform tone(double freq, std::int64_t n, double amp) {
  Waveform w;
  w.samples.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i)
    w.samples[static_cast<std::size_t>(i)] =
        amp * std::sin(2.0 * 3.14159265358979323846 * freq * i / kSampleRate);
  return w;
}

Waveform gaussian(std::int64_t n, std::uint64_t seed, double sigma = 0.2) {
  Waveform w;
  w.samples.resize(static_cast<std::size_t>(n));
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, sigma);
  for (auto& x : w.samples) x = gauss(rng);
  return w;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("si_sdr clamps perfect and scaled estimates") {
  Waveform ref = gaussian(8000, 1);
  CHECK(si_sdr(ref, ref).value_db == doctest::Approx(60.0));

  Waveform scaled = ref;
  for (auto& x : scaled.samples) x *= 2.0;
  CHECK(si_sdr(scaled, ref).value_db == doctest::Approx(60.0));
}

TEST_CASE("si_sdr is scale invariant in the estimate") {
  Waveform ref = gaussian(8000, 2);
  Waveform est = gaussian(8000, 3);
  const double base = si_sdr(est, ref).value_db;
  for (double alpha : {0.1, -1.0, 7.5}) {
    Waveform scaled = est;
    for (auto& x : scaled.samples) x *= alpha;
    CHECK(si_sdr(scaled, ref).value_db == doctest::Approx(base).epsilon(1e-9));
  }
}

TEST_CASE("si_sdr argument order carries distinct contracts") {
  // The roles are not interchangeable: a silent estimate clamps to the
  // floor, a silent reference is invalid input.
  Waveform ref = gaussian(4000, 4);
  Waveform zero;
  zero.samples.assign(4000, 0.0);
  CHECK(si_sdr(zero, ref).value_db == doctest::Approx(-60.0));
  CHECK_THROWS_AS(si_sdr(ref, zero), InvalidInputError);
}

TEST_CASE("orthogonalized 0 dB mixture scores exactly 0 dB") {
  Waveform speech = tone(300.0, 16000, 0.4);
  Waveform noise = orthogonalize_noise(gaussian(16000, 5), speech);

  // scale noise to exactly equal energy
  double es = 0.0, en = 0.0;
  for (std::size_t i = 0; i < speech.samples.size(); ++i) {
    es += speech.samples[i] * speech.samples[i];
    en += noise.samples[i] * noise.samples[i];
  }
  const double g = std::sqrt(es / en);
  Waveform mix = speech;
  for (std::size_t i = 0; i < mix.samples.size(); ++i) mix.samples[i] += g * noise.samples[i];

  CHECK(si_sdr(mix, speech).value_db == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("si_sdr rejects bad inputs") {
  Waveform ref = gaussian(100, 6);
  Waveform shorter = gaussian(99, 7);
  CHECK_THROWS_AS(si_sdr(shorter, ref), InvalidInputError);
  Waveform zero;
  zero.samples.assign(100, 0.0);
  CHECK_THROWS_AS(si_sdr(ref, zero), InvalidInputError);
}

TEST_CASE("spearman rank correlation") {
  CHECK(spearman({1, 2, 3, 4, 5}, {10, 20, 30, 40, 50}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4, 5}, {5, 4, 3, 2, 1}) == doctest::Approx(-1.0));
  // monotone nonlinear relation still ranks perfectly
  CHECK(spearman({1, 2, 3, 4, 5}, {1, 8, 27, 64, 125}) == doctest::Approx(1.0));
  // one adjacent swap on five points
  CHECK(spearman({1, 2, 3, 4, 5}, {5, 4, 3, 1, 2}) == doctest::Approx(-0.9));
}

TEST_CASE("margin diagnostic runs on an untrained model and is deterministic") {
  Rng rng(8);
  vq::VqVaeConfig cfg;
  cfg.codebook_size = 8;
  cfg.embedding_dim = 4;
  cfg.enc_channels1 = 6;
  cfg.enc_channels2 = 8;
  cfg.stft.window_length = 64;
  cfg.stft.hop_length = 32;
  cfg.stft.fft_size = 64;
  vq::VqVaeModel model(cfg, rng);
  model.freeze();

  Waveform clean = tone(250.0, 8000, 0.4);
  Waveform noise = gaussian(8000, 9);
  vq::PairedPool pool;
  pool.clean = {&clean};
  pool.noise = {&noise};

  MarginDiagConfig md;
  md.snr_grid_db = {-10, 0, 10};
  md.mixtures_per_snr = 2;
  md.segment_seconds = 0.25;
  md.seed = 11;

  MarginCurve a = margin_diagnostic(model, pool, md);
  MarginCurve b = margin_diagnostic(model, pool, md);
  REQUIRE(a.snr_bins_db.size() == 3);
  CHECK(a.mean_margin == b.mean_margin);
  CHECK(a.std_margin == b.std_margin);
  for (auto c : a.count) CHECK(c > 0);

  CHECK_THROWS_AS(margin_diagnostic(model, vq::PairedPool{}, md), ConfigError);
}

TEST_CASE("eval report with an identity enhancer shows no improvement") {
  Rng rng(12);
  enh::EnhancerConfig ecfg;
  ecfg.input_proj = 8;
  ecfg.hidden = 8;
  ecfg.gru_layers = 1;
  ecfg.stft.window_length = 64;
  ecfg.stft.hop_length = 32;
  ecfg.stft.fft_size = 64;
  enh::EnhancerModel model(ecfg, rng);
  model.set_constant_gain_logit(100.0);  // identity

  Waveform clean = tone(220.0, 16000, 0.4);
  Waveform seen_noise = gaussian(16000, 13);
  TestPools pools;
  pools.clean = {&clean};
  pools.noise_seen = {&seen_noise};
  // leave unseen empty: its rows must be reported missing, not fabricated

  EvalConfig ev;
  ev.snr_grid_db = {-5, 0, 5};
  ev.mixtures_per_condition = 3;
  ev.segment_seconds = 0.5;
  ev.seed = 14;

  EvalReport report = eval_report(model, pools, ev);
  REQUIRE(report.rows.size() == 6);  // |grid| x {seen, unseen}
  for (const auto& row : report.rows) {
    if (row.split == "unseen") {
      CHECK(row.count == 0);
      continue;
    }
    CHECK(row.count == 3);
    CHECK(std::abs(row.improvement) < 0.1);
    // orthogonalized mixtures track the mixing SNR
    CHECK(std::abs(row.si_sdr_degraded - row.snr_db) < 0.5);
    CHECK(row.improvement ==
          doctest::Approx(row.si_sdr_enhanced - row.si_sdr_degraded).epsilon(1e-12));
  }
}

}  // TEST_SUITE
