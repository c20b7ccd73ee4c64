// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vqse/nn.hpp"

#include <cmath>

namespace vqse::nn {

Tensor uniform_init(std::vector<std::int64_t> shape, std::int64_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::int64_t>(1, fan_in)));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = u(rng);
  return t;
}

Conv2d Conv2d::create(ParamStore& store, const std::string& name, int in_ch, int out_ch,
                      int kernel, int stride, int padding, Rng& rng) {
  Conv2d c;
  const std::int64_t fan_in = static_cast<std::int64_t>(in_ch) * kernel * kernel;
  c.w = store.create(name + ".weight", uniform_init({out_ch, in_ch, kernel, kernel}, fan_in, rng));
  c.b = store.create(name + ".bias", uniform_init({out_ch}, fan_in, rng));
  c.stride = stride;
  c.padding = padding;
  return c;
}

ConvTranspose2d ConvTranspose2d::create(ParamStore& store, const std::string& name, int in_ch,
                                        int out_ch, int kernel, int stride, int padding,
                                        Rng& rng) {
  ConvTranspose2d c;
  const std::int64_t fan_in = static_cast<std::int64_t>(in_ch) * kernel * kernel;
  c.w = store.create(name + ".weight", uniform_init({in_ch, out_ch, kernel, kernel}, fan_in, rng));
  c.b = store.create(name + ".bias", uniform_init({out_ch}, fan_in, rng));
  c.stride = stride;
  c.padding = padding;
  return c;
}

BatchNorm2d BatchNorm2d::create(ParamStore& store, const std::string& name, int channels) {
  BatchNorm2d bn;
  bn.gamma = store.create(name + ".gamma", Tensor::full({channels}, 1.0));
  bn.beta = store.create(name + ".beta", Tensor::zeros({channels}));
  bn.running_mean = store.create(name + ".running_mean", Tensor::zeros({channels}),
                                 /*trainable=*/false);
  bn.running_var = store.create(name + ".running_var", Tensor::full({channels}, 1.0),
                                /*trainable=*/false);
  return bn;
}

Var BatchNorm2d::forward(const Var& x, bool train) const {
  ad::BatchNormState state;
  state.running_mean = running_mean->value;
  state.running_var = running_var->value;
  state.momentum = momentum;
  state.eps = eps;
  Var y = ad::batch_norm2d(x, gamma, beta, state, train);
  if (train) {
    running_mean->value = state.running_mean;
    running_var->value = state.running_var;
  }
  return y;
}

Linear Linear::create(ParamStore& store, const std::string& name, int in, int out, Rng& rng) {
  Linear l;
  l.w = store.create(name + ".weight", uniform_init({out, in}, in, rng));
  l.b = store.create(name + ".bias", uniform_init({out}, in, rng));
  return l;
}

GruStack GruStack::create(ParamStore& store, const std::string& name, int input_size, int hidden,
                          int num_layers, Rng& rng) {
  require_input(num_layers >= 1 && hidden >= 1 && input_size >= 1, "bad GRU dimensions");
  GruStack g;
  g.hidden_ = hidden;
  for (int l = 0; l < num_layers; ++l) {
    const int in = l == 0 ? input_size : hidden;
    Layer layer;
    const std::string p = name + ".l" + std::to_string(l);
    layer.w_ih = store.create(p + ".w_ih", uniform_init({3 * hidden, in}, hidden, rng));
    layer.b_ih = store.create(p + ".b_ih", uniform_init({3 * hidden}, hidden, rng));
    layer.w_hh = store.create(p + ".w_hh", uniform_init({3 * hidden, hidden}, hidden, rng));
    layer.b_hh = store.create(p + ".b_hh", uniform_init({3 * hidden}, hidden, rng));
    g.layers_.push_back(layer);
  }
  return g;
}

std::vector<Var> GruStack::forward(const std::vector<Var>& seq) const {
  require_input(!seq.empty(), "GRU input sequence is empty");
  const std::int64_t B = seq[0]->value.dim(0);
  const std::int64_t H = hidden_;

  std::vector<Var> current = seq;
  for (const auto& layer : layers_) {
    Var h = ad::constant(Tensor::zeros({B, H}));
    std::vector<Var> next;
    next.reserve(current.size());
    for (const auto& x : current) {
      Var gx = ad::linear(x, layer.w_ih, layer.b_ih);  // (B, 3H)
      Var gh = ad::linear(h, layer.w_hh, layer.b_hh);
      Var r = ad::sigmoid(ad::add(ad::slice_cols(gx, 0, H), ad::slice_cols(gh, 0, H)));
      Var z = ad::sigmoid(ad::add(ad::slice_cols(gx, H, 2 * H), ad::slice_cols(gh, H, 2 * H)));
      Var n = ad::tanh_op(
          ad::add(ad::slice_cols(gx, 2 * H, 3 * H), ad::mul(r, ad::slice_cols(gh, 2 * H, 3 * H))));
      // h' = (1 - z) * n + z * h
      h = ad::add(ad::sub(n, ad::mul(z, n)), ad::mul(z, h));
      next.push_back(h);
    }
    current = std::move(next);
  }
  return current;
}

}  // namespace vqse::nn
