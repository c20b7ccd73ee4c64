// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vqse/datagen.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "vqse/dsp.hpp"

using namespace vqse;
using namespace vqse::datagen;

namespace {

Waveform tone(double freq, std::int64_t n, double amp) {
  Waveform w;
  w.samples.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i)
    w.samples[static_cast<std::size_t>(i)] =
        amp * std::sin(2.0 * 3.14159265358979323846 * freq * i / kSampleRate);
  return w;
}

double measured_snr_db(const PairedExample& p) {
  return 10.0 * std::log10(std::pow(rms(p.clean), 2) / std::pow(rms(p.noise), 2));
}

}  // namespace

TEST_SUITE("datagen") {

TEST_CASE("sample_segment basics") {
  Rng rng(1);
  Waveform src = tone(100.0, 16000, 0.5);
  Waveform seg = sample_segment(src, 1.0, rng);
  CHECK(seg.size() == 16000);
  for (std::size_t i = 0; i < seg.samples.size(); ++i)
    CHECK(seg.samples[i] == src.samples[i]);  // single valid offset

  Waveform small = tone(100.0, 8000, 0.5);
  CHECK_THROWS_AS(sample_segment(small, 1.0, rng), InvalidInputError);

  Rng a(42), b(42);
  Waveform big = tone(100.0, 32000, 0.5);
  Waveform sa = sample_segment(big, 1.0, a);
  Waveform sb = sample_segment(big, 1.0, b);
  CHECK(sa.samples == sb.samples);
}

TEST_CASE("sample_segment offsets are uniform (chi-square)") {
  // 2 s source, 1 s segments: offsets lie in [0, 16000]. Bucket the
  // offsets and compare against chi2(15) at p = 0.01 (critical 30.578).
  Waveform src;
  src.samples.resize(32000);
  for (std::size_t i = 0; i < src.samples.size(); ++i)
    src.samples[i] = static_cast<double>(i);  // sample value identifies the offset
  Rng rng(7);
  const int draws = 10000;
  const int buckets = 16;
  const std::int64_t span = 16001;
  std::vector<int> hist(buckets, 0);
  for (int i = 0; i < draws; ++i) {
    Waveform seg = sample_segment(src, 1.0, rng);
    const std::int64_t offset = static_cast<std::int64_t>(seg.samples[0]);
    REQUIRE(offset >= 0);
    REQUIRE(offset < span);
    hist[static_cast<std::size_t>(offset * buckets / span)] += 1;
  }
  double chi2 = 0.0;
  for (int b = 0; b < buckets; ++b) {
    std::int64_t lo = (b * span + buckets - 1) / buckets;
    std::int64_t hi = ((b + 1) * span + buckets - 1) / buckets;
    const double expected = draws * static_cast<double>(hi - lo) / static_cast<double>(span);
    chi2 += (hist[static_cast<std::size_t>(b)] - expected) *
            (hist[static_cast<std::size_t>(b)] - expected) / expected;
  }
  CHECK(chi2 < 30.578);
}

TEST_CASE("mix_at_snr gain and exactness") {
  MixConfig cfg;
  Rng rng(3);
  Waveform speech = tone(200.0, 16000, 0.5);
  Waveform noise = tone(1700.0, 16000, 0.5);  // equal RMS

  SUBCASE("equal-RMS at 0 dB gives unit gain") {
    PairedExample p = mix_at_snr(speech, noise, 0.0, rng, cfg);
    CHECK(rms(p.noise) == doctest::Approx(rms(p.clean)).epsilon(1e-12));
  }

  SUBCASE("20 dB gives gain 0.1") {
    PairedExample p = mix_at_snr(speech, noise, 20.0, rng, cfg);
    CHECK(rms(p.noise) / rms(p.clean) == doctest::Approx(0.1).epsilon(1e-12));
  }

  SUBCASE("measured SNR matches request over the range") {
    std::uniform_real_distribution<double> snr(cfg.snr_low_db, cfg.snr_high_db);
    for (int i = 0; i < 200; ++i) {
      const double req = snr(rng);
      PairedExample p = mix_at_snr(speech, noise, req, rng, cfg);
      CHECK(std::abs(measured_snr_db(p) - req) < 1e-6);
      for (std::size_t j = 0; j < p.degraded.samples.size(); ++j)
        CHECK(std::abs(p.degraded.samples[j] - (p.clean.samples[j] + p.noise.samples[j])) <
              1e-9);
    }
  }

  SUBCASE("zero-RMS inputs are rejected") {
    Waveform silent;
    silent.samples.assign(16000, 0.0);
    CHECK_THROWS_AS(mix_at_snr(silent, noise, 0.0, rng, cfg), InvalidInputError);
    CHECK_THROWS_AS(mix_at_snr(speech, silent, 0.0, rng, cfg), InvalidInputError);
  }
}

TEST_CASE("scale_dynamic_range scales jointly and preserves SNR") {
  Rng rng(11);
  Waveform speech = tone(150.0, 16000, 0.3);
  Waveform noise = tone(2500.0, 16000, 0.2);
  PairedExample base;
  base.clean = speech;
  base.noise = noise;
  base.degraded.samples.resize(speech.samples.size());
  for (std::size_t i = 0; i < speech.samples.size(); ++i)
    base.degraded.samples[i] = speech.samples[i] + noise.samples[i];
  base.snr_db = measured_snr_db(base);

  for (int i = 0; i < 100; ++i) {
    PairedExample scaled = scale_dynamic_range(base, 40.0, rng);
    const double pk = peak(scaled.degraded);
    CHECK(pk <= 1.0 + 1e-12);
    CHECK(pk >= 0.01 - 1e-12);  // level drawn from [-40, 0] dBFS
    CHECK(std::abs(measured_snr_db(scaled) - base.snr_db) < 1e-9);
  }

  PairedExample silent;
  silent.degraded.samples.assign(100, 0.0);
  silent.clean.samples.assign(100, 0.0);
  silent.noise.samples.assign(100, 0.0);
  CHECK_THROWS_AS(scale_dynamic_range(silent, 40.0, rng), InvalidInputError);
}

TEST_CASE("toy corpus is deterministic and structured") {
  ToyCorpusSpec spec;
  spec.clean_train = 4;
  spec.clean_val = 2;
  spec.clean_test = 2;
  spec.noise_train_per_class = 2;
  spec.noise_val_per_class = 1;
  spec.noise_test_per_class = 1;
  spec.unpaired_count = 6;
  spec.clean_seconds = 1.0;
  spec.noise_seconds = 1.0;
  spec.unpaired_seconds = 1.0;

  Rng a(5), b(5);
  ToyCorpus ca = toy_corpus(a, spec);
  ToyCorpus cb = toy_corpus(b, spec);
  REQUIRE(ca.clean_train.size() == 4);
  REQUIRE(ca.unpaired.size() == 6);
  for (std::size_t i = 0; i < ca.clean_train.size(); ++i)
    CHECK(ca.clean_train[i].samples == cb.clean_train[i].samples);
  for (std::size_t i = 0; i < ca.unpaired.size(); ++i)
    CHECK(ca.unpaired[i].samples == cb.unpaired[i].samples);

  SUBCASE("harmonic items concentrate energy at multiples of f0") {
    for (std::size_t item = 0; item < ca.clean_train.size(); ++item) {
      const double f0 = ca.clean_train_f0[item];
      const auto& w = ca.clean_train[item];
      const int n = static_cast<int>(w.size());
      auto spec_bins = dsp::rfft(w.samples, n);
      const double bin_hz = static_cast<double>(kSampleRate) / n;
      auto power_near = [&](double freq) {
        const std::int64_t center = std::llround(freq / bin_hz);
        double p = 0.0;
        for (std::int64_t k = center - 12; k <= center + 12; ++k)
          if (k >= 0 && k < static_cast<std::int64_t>(spec_bins.size()))
            p += std::norm(spec_bins[static_cast<std::size_t>(k)]);
        return p;
      };
      double harm = 0.0, gap = 0.0;
      for (int h = 1; h <= 4; ++h) {
        harm += power_near(f0 * h);
        gap += power_near(f0 * (h + 0.5));
      }
      CHECK(harm > 20.0 * gap);
    }
  }

  SUBCASE("unpaired true SNR averages near 10 dB") {
    double mean = 0.0;
    for (double s : ca.unpaired_true_snr_db) mean += s;
    mean /= static_cast<double>(ca.unpaired_true_snr_db.size());
    CHECK(std::abs(mean - 10.0) < 3.0);
  }

  SUBCASE("band noise lives inside its band") {
    auto [lo, hi] = noise_band(1, 4);
    Rng rng(9);
    Waveform nz = synth_band_noise(lo, hi, 1.0, rng);
    auto spec_bins = dsp::rfft(nz.samples, static_cast<int>(nz.size()));
    const double bin_hz = static_cast<double>(kSampleRate) / static_cast<double>(nz.size());
    double inside = 0.0, outside = 0.0;
    for (std::size_t k = 0; k < spec_bins.size(); ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      if (f >= lo - bin_hz && f <= hi + bin_hz)
        inside += std::norm(spec_bins[k]);
      else
        outside += std::norm(spec_bins[k]);
    }
    CHECK(inside > 1e6 * std::max(outside, 1e-30));
  }
}

TEST_CASE("manifests round-trip and encode roles") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "vqse_manifest_test";
  fs::create_directories(dir);
  std::vector<ManifestEntry> rows = {
      {(dir / "a.wav").string(), "clean"},
      {(dir / "b.wav").string(), "noise"},
      {(dir / "c.wav").string(), "unpaired"},
  };
  write_manifest((dir / "m.tsv").string(), rows);
  auto got = read_manifest((dir / "m.tsv").string());
  REQUIRE(got.size() == 3);
  CHECK(got[0].role == "clean");
  CHECK(got[1].role == "noise");
  CHECK(got[2].role == "unpaired");
  CHECK(fs::path(got[0].path).is_absolute());
  CHECK(fs::path(got[0].path).filename() == "a.wav");
  fs::remove_all(dir);
}

TEST_CASE("noise class parsing from filenames") {
  CHECK(noise_class_of("noise/noise_train_c2_004.wav") == 2);
  CHECK(noise_class_of("noise_test_c13_000.wav") == 13);
  CHECK(!noise_class_of("clean/clean_train_000.wav").has_value());
}

TEST_CASE("write_toy_corpus emits tree and manifests") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "vqse_corpus_test";
  fs::remove_all(dir);
  ToyCorpusSpec spec;
  spec.clean_train = 2;
  spec.clean_val = 1;
  spec.clean_test = 1;
  spec.noise_train_per_class = 1;
  spec.noise_val_per_class = 1;
  spec.noise_test_per_class = 1;
  spec.unpaired_count = 2;
  spec.clean_seconds = 0.6;
  spec.noise_seconds = 0.6;
  spec.unpaired_seconds = 0.6;
  Rng rng(13);
  ToyCorpus corpus = toy_corpus(rng, spec);
  write_toy_corpus(corpus, spec, dir.string());

  auto train = read_manifest((dir / "train.tsv").string());
  // 2 clean + 3 seen-class noise (class 3 unseen) + 2 unpaired
  int clean = 0, noise = 0, unpaired = 0;
  for (const auto& e : train) {
    if (e.role == "clean") ++clean;
    if (e.role == "noise") ++noise;
    if (e.role == "unpaired") ++unpaired;
  }
  CHECK(clean == 2);
  CHECK(noise == 3);
  CHECK(unpaired == 2);
  for (const auto& e : train)
    if (e.role == "noise") CHECK(noise_class_of(e.path).value() != 3);

  auto test = read_manifest((dir / "test.tsv").string());
  bool has_unseen = false;
  for (const auto& e : test)
    if (e.role == "noise" && noise_class_of(e.path).value() == 3) has_unseen = true;
  CHECK(has_unseen);
  fs::remove_all(dir);
}

}  // TEST_SUITE
