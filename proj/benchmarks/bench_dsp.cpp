// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <benchmark/benchmark.h>

#include <random>

#include "vqse/dsp.hpp"

namespace {

vqse::Waveform one_second_noise() {
  vqse::Waveform w;
  w.samples.resize(16000);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& x : w.samples) x = u(rng);
  return w;
}

void BM_stft(benchmark::State& state) {
  vqse::dsp::StftConfig cfg;
  vqse::Waveform w = one_second_noise();
  for (auto _ : state) {
    auto spec = vqse::dsp::stft(w, cfg);
    benchmark::DoNotOptimize(spec.data.data());
  }
}
BENCHMARK(BM_stft);

void BM_stft_istft_roundtrip(benchmark::State& state) {
  vqse::dsp::StftConfig cfg;
  vqse::Waveform w = one_second_noise();
  for (auto _ : state) {
    auto back = vqse::dsp::istft(vqse::dsp::stft(w, cfg), cfg);
    benchmark::DoNotOptimize(back.samples.data());
  }
}
BENCHMARK(BM_stft_istft_roundtrip);

void BM_log_power(benchmark::State& state) {
  vqse::dsp::StftConfig cfg;
  auto spec = vqse::dsp::stft(one_second_noise(), cfg);
  for (auto _ : state) {
    auto lp = vqse::dsp::log_power(spec, 1e-10);
    benchmark::DoNotOptimize(lp.data.data());
  }
}
BENCHMARK(BM_log_power);

}  // namespace

BENCHMARK_MAIN();
