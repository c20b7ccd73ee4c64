// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <benchmark/benchmark.h>

#include "vqse/vqvae.hpp"

namespace {

using namespace vqse;

Tensor random_tensor(std::vector<std::int64_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = gauss(rng);
  return t;
}

void BM_quantize_full(benchmark::State& state) {
  Rng rng(1);
  const std::int64_t K = 256, L = 32;
  Tensor cb = random_tensor({K, L}, rng);
  Tensor e = random_tensor({1, L, 32, 65}, rng);
  for (auto _ : state) {
    auto idx = vq::quantize_indices(e, cb, vq::Partition::kFull);
    benchmark::DoNotOptimize(idx.data());
  }
}
BENCHMARK(BM_quantize_full);

void BM_vqvae_forward(benchmark::State& state) {
  Rng rng(2);
  vq::VqVaeConfig cfg;
  cfg.codebook_size = 32;
  cfg.embedding_dim = 8;
  cfg.enc_channels1 = 12;
  cfg.enc_channels2 = 16;
  cfg.stft.window_length = 128;
  cfg.stft.hop_length = 64;
  cfg.stft.fft_size = 128;
  vq::VqVaeModel model(cfg, rng);
  model.freeze();
  ad::Var f = ad::constant(random_tensor({1, 1, 60, 65}, rng));
  for (auto _ : state) {
    vq::VqVaeOutput out = vq::vqvae_forward(model, f, false);
    benchmark::DoNotOptimize(out.decoded_degraded->value.data());
  }
}
BENCHMARK(BM_vqvae_forward);

}  // namespace
