// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VQSE_AUTODIFF_HPP_
#define VQSE_AUTODIFF_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vqse/rng.hpp"
#include "vqse/tensor.hpp"

namespace vqse::ad {

// One node of the recorded operation graph (the tape of a forward pass).
// The graph is a DAG of shared_ptr edges from outputs to inputs; backward
// visits each node exactly once in reverse topological order and
// accumulates gradients additively on fan-out.
struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.numel() != value.numel()) grad = Tensor::zeros(value.shape());
  }
  void accumulate(const Tensor& g);
};

using Var = std::shared_ptr<Node>;

Var constant(Tensor value);
Var leaf(Tensor value, bool requires_grad);

// Propagates d(loss)/d(node) into every reachable node with
// requires_grad. The loss must be scalar.
void backward(const Var& loss);

// --------------------------------------------------------------- ops ---

Var add(const Var& a, const Var& b);        // same shape
Var sub(const Var& a, const Var& b);        // same shape
Var mul(const Var& a, const Var& b);        // same shape, elementwise
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var tanh_op(const Var& a);
Var square(const Var& a);
// log(max(x, floor)); zero gradient on the floored region.
Var log_clamped(const Var& a, double floor);

Var matmul(const Var& a, const Var& b);             // (M,K)x(K,N)
Var linear(const Var& x, const Var& w, const Var& b);  // x:(B,I), w:(O,I), b:(O)

// x:(N,C,H,W), w:(O,C,kh,kw), b:(O) or nullptr. Cross-correlation.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int padding);
// x:(N,A,H,W), w:(A,B,kh,kw), b:(B) or nullptr; the exact adjoint of
// conv2d with the same weight: <conv2d(x,w), y> == <x, conv_transpose2d(y,w)>.
Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride, int padding);

// Per-channel batch normalization over (N,H,W). Train mode uses batch
// statistics (variance floor eps) and updates the running stats in place;
// eval mode uses the running stats.
struct BatchNormState {
  Tensor running_mean;  // (C)
  Tensor running_var;   // (C)
  double momentum = 0.1;
  double eps = 1e-5;
};
Var batch_norm2d(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state,
                 bool train);

Var mean_all(const Var& a);  // scalar
Var sum_all(const Var& a);   // scalar
Var mse(const Var& a, const Var& b);  // scalar mean squared error

// Value copy with the graph cut (stop-gradient).
Var detach(const Var& a);
// e + detach(q - e): forwards q's value, routes gradients to e.
Var straight_through(const Var& e, const Var& q);

// Stacks T frames of shape (B,F) into (B,1,T,F).
Var stack_frames(const std::vector<Var>& frames);
// Columns [lo, hi) of a (B,N) tensor.
Var slice_cols(const Var& a, std::int64_t lo, std::int64_t hi);

// Codebook rows selected per bin: codebook (K,L), indices (N*T*F) ->
// (N,L,T,F). Backward scatter-adds into the codebook.
Var gather_codebook(const Var& codebook, const std::vector<std::int64_t>& indices,
                    std::int64_t batch, std::int64_t frames, std::int64_t bins);

// Cosine distance 1 - a.b/(|a||b|) along the channel dim of (N,C,T,F)
// inputs -> (N,T,F). Norms are floored at 1e-12.
Var cosine_distance_channel(const Var& a, const Var& b);

// Cosine distance between 3x3 neighborhood patches (clipped at edges) of
// two (N,1,T,F) feature maps, one scalar per bin -> (N,T,F).
Var patch_cosine_distance(const Var& a, const Var& b);

// ------------------------------------------------------- value helpers ---

double cosine_distance(const double* a, const double* b, std::int64_t n);
// Same as the graph op but on plain tensors.
Tensor tensor_cosine_distance_channel(const Tensor& a, const Tensor& b);

// --------------------------------------------------------- parameters ---

struct Param {
  std::string name;
  Var var;
  bool trainable = true;
};

class ParamStore {
 public:
  Var create(const std::string& name, Tensor init, bool trainable = true);
  Var find(const std::string& name) const;
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  void zero_grad();
  void freeze();  // clears requires_grad and trainable on every entry
  std::uint64_t value_digest() const;  // FNV-1a over raw parameter bytes

 private:
  std::vector<Param> params_;
};

// Adam with bias correction; skips non-trainable parameters.
class Adam {
 public:
  explicit Adam(double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore& store);

  std::int64_t steps_taken() const { return t_; }
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

  // Optimizer state round-trip for checkpoint resume.
  std::vector<std::pair<std::string, Tensor>> state_tensors(const ParamStore& store) const;
  void load_state(const ParamStore& store,
                  const std::function<const Tensor*(const std::string&)>& lookup,
                  std::int64_t steps);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Tensor> m_, v_;  // parallel to store order
};

// ---------------------------------------------------------- grad check ---

// Central finite differences with step h against the analytic gradients
// of fn's scalar output. Returns the max per-element error
// |g_an - g_fd| / max(|g_an|, |g_fd|, 1e-3).
using LossFn = std::function<Var(std::vector<Var>&)>;
double grad_check(const LossFn& fn, const std::vector<Tensor>& inputs, double h = 1e-5);

}  // namespace vqse::ad

#endif  // VQSE_AUTODIFF_HPP_
