// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VQSE_NN_HPP_
#define VQSE_NN_HPP_

#include <string>
#include <vector>

#include "vqse/autodiff.hpp"
#include "vqse/rng.hpp"

namespace vqse::nn {

using ad::ParamStore;
using ad::Var;

// Uniform(-bound, bound) with bound = 1/sqrt(fan_in).
Tensor uniform_init(std::vector<std::int64_t> shape, std::int64_t fan_in, Rng& rng);

struct Conv2d {
  Var w, b;
  int stride = 1, padding = 1;

  static Conv2d create(ParamStore& store, const std::string& name, int in_ch, int out_ch,
                       int kernel, int stride, int padding, Rng& rng);
  Var forward(const Var& x) const { return ad::conv2d(x, w, b, stride, padding); }
};

struct ConvTranspose2d {
  Var w, b;
  int stride = 1, padding = 1;

  static ConvTranspose2d create(ParamStore& store, const std::string& name, int in_ch,
                                int out_ch, int kernel, int stride, int padding, Rng& rng);
  Var forward(const Var& x) const { return ad::conv_transpose2d(x, w, b, stride, padding); }
};

struct BatchNorm2d {
  Var gamma, beta;
  Var running_mean, running_var;  // non-trainable state entries
  double momentum = 0.1, eps = 1e-5;

  static BatchNorm2d create(ParamStore& store, const std::string& name, int channels);
  Var forward(const Var& x, bool train) const;
};

struct Linear {
  Var w, b;

  static Linear create(ParamStore& store, const std::string& name, int in, int out, Rng& rng);
  Var forward(const Var& x) const { return ad::linear(x, w, b); }
};

// Stacked causal GRU; hidden state starts at zero, frame t never sees
// frames beyond t.
class GruStack {
 public:
  static GruStack create(ParamStore& store, const std::string& name, int input_size,
                         int hidden, int num_layers, Rng& rng);

  // seq: T frames of shape (B, input_size) -> T frames of (B, hidden).
  std::vector<Var> forward(const std::vector<Var>& seq) const;

  int hidden_size() const { return hidden_; }
  int num_layers() const { return static_cast<int>(layers_.size()); }

 private:
  struct Layer {
    Var w_ih, b_ih;  // (3H, I), (3H)
    Var w_hh, b_hh;  // (3H, H), (3H)
  };
  std::vector<Layer> layers_;
  int hidden_ = 0;
};

}  // namespace vqse::nn

#endif  // VQSE_NN_HPP_
