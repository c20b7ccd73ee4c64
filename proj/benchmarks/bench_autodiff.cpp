// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <benchmark/benchmark.h>

#include "vqse/autodiff.hpp"
#include "vqse/nn.hpp"

namespace {

using namespace vqse;

Tensor random_tensor(std::vector<std::int64_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = gauss(rng);
  return t;
}

void BM_conv2d_forward(benchmark::State& state) {
  Rng rng(1);
  ad::Var x = ad::constant(random_tensor({1, 16, 64, 64}, rng));
  ad::Var w = ad::constant(random_tensor({16, 16, 3, 3}, rng));
  ad::Var b = ad::constant(random_tensor({16}, rng));
  for (auto _ : state) {
    ad::Var y = ad::conv2d(x, w, b, 1, 1);
    benchmark::DoNotOptimize(y->value.data());
  }
}
BENCHMARK(BM_conv2d_forward);

void BM_conv2d_train_step(benchmark::State& state) {
  Rng rng(2);
  ad::ParamStore store;
  ad::Var w = store.create("w", random_tensor({16, 16, 3, 3}, rng));
  ad::Var b = store.create("b", random_tensor({16}, rng));
  ad::Var x = ad::leaf(random_tensor({1, 16, 64, 64}, rng), true);
  for (auto _ : state) {
    store.zero_grad();
    ad::Var loss = ad::mean_all(ad::square(ad::conv2d(x, w, b, 1, 1)));
    ad::backward(loss);
    benchmark::DoNotOptimize(w->grad.data());
  }
}
BENCHMARK(BM_conv2d_train_step);

void BM_gru_forward(benchmark::State& state) {
  Rng rng(3);
  ad::ParamStore store;
  nn::GruStack gru = nn::GruStack::create(store, "g", 64, 64, 2, rng);
  std::vector<ad::Var> seq;
  for (int t = 0; t < 60; ++t) seq.push_back(ad::constant(random_tensor({4, 64}, rng)));
  for (auto _ : state) {
    auto out = gru.forward(seq);
    benchmark::DoNotOptimize(out.back()->value.data());
  }
}
BENCHMARK(BM_gru_forward);

}  // namespace
