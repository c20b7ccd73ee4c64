// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vqse/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "gemm.hpp"

namespace vqse::ad {

namespace {

constexpr double kNormFloor = 1e-12;

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  bool needs = false;
  for (const auto& p : parents)
    if (p && p->requires_grad) needs = true;
  n->requires_grad = needs;
  if (needs) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  require_input(a->value.same_shape(b->value),
                std::string(op) + ": shape mismatch " + a->value.shape_str() + " vs " +
                    b->value.shape_str());
}

// cols is (C*kh*kw, OH*OW) row-major.
void im2col(const double* img, std::int64_t C, std::int64_t H, std::int64_t W, int kh, int kw,
            int stride, int pad, std::int64_t OH, std::int64_t OW, double* cols) {
  for (std::int64_t c = 0; c < C; ++c) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        double* row = cols + ((c * kh + ki) * kw + kj) * (OH * OW);
        for (std::int64_t oh = 0; oh < OH; ++oh) {
          const std::int64_t h = oh * stride - pad + ki;
          if (h < 0 || h >= H) {
            std::fill(row + oh * OW, row + (oh + 1) * OW, 0.0);
            continue;
          }
          const double* src = img + (c * H + h) * W;
          for (std::int64_t ow = 0; ow < OW; ++ow) {
            const std::int64_t w = ow * stride - pad + kj;
            row[oh * OW + ow] = (w >= 0 && w < W) ? src[w] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* cols, std::int64_t C, std::int64_t H, std::int64_t W, int kh, int kw,
            int stride, int pad, std::int64_t OH, std::int64_t OW, double* img) {
  for (std::int64_t c = 0; c < C; ++c) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const double* row = cols + ((c * kh + ki) * kw + kj) * (OH * OW);
        for (std::int64_t oh = 0; oh < OH; ++oh) {
          const std::int64_t h = oh * stride - pad + ki;
          if (h < 0 || h >= H) continue;
          double* dst = img + (c * H + h) * W;
          for (std::int64_t ow = 0; ow < OW; ++ow) {
            const std::int64_t w = ow * stride - pad + kj;
            if (w >= 0 && w < W) dst[w] += row[oh * OW + ow];
          }
        }
      }
    }
  }
}

struct CosineParts {
  double dot, norm_a, norm_b;
  bool floored_a, floored_b;
};

CosineParts cosine_parts(const double* a, const double* b, std::int64_t n, std::int64_t stride) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double av = a[i * stride], bv = b[i * stride];
    dot += av * bv;
    na += av * av;
    nb += bv * bv;
  }
  CosineParts p;
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  p.floored_a = na < kNormFloor;
  p.floored_b = nb < kNormFloor;
  p.norm_a = p.floored_a ? kNormFloor : na;
  p.norm_b = p.floored_b ? kNormFloor : nb;
  p.dot = dot;
  return p;
}

}  // namespace

void Node::accumulate(const Tensor& g) {
  ensure_grad();
  require_input(g.numel() == grad.numel(), "gradient shape mismatch");
  double* dst = grad.data();
  const double* src = g.data();
  for (std::int64_t i = 0; i < g.numel(); ++i) dst[i] += src[i];
}

Var constant(Tensor value) { return leaf(std::move(value), false); }

Var leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

void backward(const Var& loss) {
  require_input(loss != nullptr && loss->value.numel() == 1,
                "backward requires a scalar loss");
  // Iterative post-order DFS; reversed it yields consumers before inputs.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* n;
    std::size_t next = 0;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.get()});
  visited.insert(loss.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      Node* child = f.n->parents[f.next++].get();
      if (child && child->requires_grad && visited.insert(child).second)
        stack.push_back({child});
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }
  loss->ensure_grad();
  loss->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.numel() == n->value.numel()) n->backward_fn(*n);
  }
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out = a->value;
  const double* bv = b->value.data();
  double* ov = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) ov[i] += bv[i];
  return make_node(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) a->accumulate(n.grad);
    if (b->requires_grad) b->accumulate(n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a->value;
  const double* bv = b->value.data();
  double* ov = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) ov[i] -= bv[i];
  return make_node(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) a->accumulate(n.grad);
    if (b->requires_grad) {
      b->ensure_grad();
      double* g = b->grad.data();
      const double* s = n.grad.data();
      for (std::int64_t i = 0; i < n.grad.numel(); ++i) g[i] -= s[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a->value;
  const double* bv = b->value.data();
  double* ov = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) ov[i] *= bv[i];
  return make_node(std::move(out), {a, b}, [a, b](Node& n) {
    const double* g = n.grad.data();
    if (a->requires_grad) {
      a->ensure_grad();
      double* ga = a->grad.data();
      const double* bv = b->value.data();
      for (std::int64_t i = 0; i < n.grad.numel(); ++i) ga[i] += g[i] * bv[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      double* gb = b->grad.data();
      const double* av = a->value.data();
      for (std::int64_t i = 0; i < n.grad.numel(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a->value;
  double* ov = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) ov[i] *= s;
  return make_node(std::move(out), {a}, [a, s](Node& n) {
    a->ensure_grad();
    double* ga = a->grad.data();
    const double* g = n.grad.data();
    for (std::int64_t i = 0; i < n.grad.numel(); ++i) ga[i] += s * g[i];
  });
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a->value;
  double* ov = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) ov[i] += s;
  return make_node(std::move(out), {a}, [a](Node& n) { a->accumulate(n.grad); });
}

Var relu(const Var& a) {
  Tensor out = a->value;
  double* ov = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) ov[i] = std::max(0.0, ov[i]);
  return make_node(std::move(out), {a}, [a](Node& n) {
    a->ensure_grad();
    double* ga = a->grad.data();
    const double* g = n.grad.data();
    const double* x = a->value.data();
    for (std::int64_t i = 0; i < n.grad.numel(); ++i)
      if (x[i] > 0.0) ga[i] += g[i];
  });
}

Var sigmoid(const Var& a) {
  Tensor out = a->value;
  double* ov = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) ov[i] = 1.0 / (1.0 + std::exp(-ov[i]));
  return make_node(std::move(out), {a}, [a](Node& n) {
    a->ensure_grad();
    double* ga = a->grad.data();
    const double* g = n.grad.data();
    const double* y = n.value.data();
    for (std::int64_t i = 0; i < n.grad.numel(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var tanh_op(const Var& a) {
  Tensor out = a->value;
  double* ov = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) ov[i] = std::tanh(ov[i]);
  return make_node(std::move(out), {a}, [a](Node& n) {
    a->ensure_grad();
    double* ga = a->grad.data();
    const double* g = n.grad.data();
    const double* y = n.value.data();
    for (std::int64_t i = 0; i < n.grad.numel(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var square(const Var& a) {
  Tensor out = a->value;
  double* ov = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) ov[i] *= ov[i];
  return make_node(std::move(out), {a}, [a](Node& n) {
    a->ensure_grad();
    double* ga = a->grad.data();
    const double* g = n.grad.data();
    const double* x = a->value.data();
    for (std::int64_t i = 0; i < n.grad.numel(); ++i) ga[i] += 2.0 * x[i] * g[i];
  });
}

Var log_clamped(const Var& a, double floor) {
  require_input(floor > 0.0, "log_clamped floor must be positive");
  Tensor out = a->value;
  double* ov = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) ov[i] = std::log(std::max(ov[i], floor));
  return make_node(std::move(out), {a}, [a, floor](Node& n) {
    a->ensure_grad();
    double* ga = a->grad.data();
    const double* g = n.grad.data();
    const double* x = a->value.data();
    for (std::int64_t i = 0; i < n.grad.numel(); ++i)
      if (x[i] > floor) ga[i] += g[i] / x[i];
  });
}

Var matmul(const Var& a, const Var& b) {
  require_input(a->value.rank() == 2 && b->value.rank() == 2 &&
                    a->value.dim(1) == b->value.dim(0),
                "matmul: incompatible shapes");
  const std::int64_t M = a->value.dim(0), K = a->value.dim(1), N = b->value.dim(1);
  Tensor out({M, N});
  detail::gemm(false, false, M, N, K, 1.0, a->value.data(), b->value.data(), 0.0, out.data());
  return make_node(std::move(out), {a, b}, [a, b, M, K, N](Node& n) {
    if (a->requires_grad) {
      a->ensure_grad();
      detail::gemm(false, true, M, K, N, 1.0, n.grad.data(), b->value.data(), 1.0,
                   a->grad.data());
    }
    if (b->requires_grad) {
      b->ensure_grad();
      detail::gemm(true, false, K, N, M, 1.0, a->value.data(), n.grad.data(), 1.0,
                   b->grad.data());
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  require_input(x->value.rank() == 2 && w->value.rank() == 2 &&
                    x->value.dim(1) == w->value.dim(1),
                "linear: incompatible shapes");
  const std::int64_t B = x->value.dim(0), I = x->value.dim(1), O = w->value.dim(0);
  if (b) require_input(b->value.numel() == O, "linear: bias size mismatch");
  Tensor out({B, O});
  detail::gemm(false, true, B, O, I, 1.0, x->value.data(), w->value.data(), 0.0, out.data());
  if (b) {
    double* ov = out.data();
    const double* bv = b->value.data();
    for (std::int64_t i = 0; i < B; ++i)
      for (std::int64_t j = 0; j < O; ++j) ov[i * O + j] += bv[j];
  }
  std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
  return make_node(std::move(out), std::move(parents), [x, w, b, B, I, O](Node& n) {
    const double* g = n.grad.data();
    if (x->requires_grad) {
      x->ensure_grad();
      detail::gemm(false, false, B, I, O, 1.0, g, w->value.data(), 1.0, x->grad.data());
    }
    if (w->requires_grad) {
      w->ensure_grad();
      detail::gemm(true, false, O, I, B, 1.0, g, x->value.data(), 1.0, w->grad.data());
    }
    if (b && b->requires_grad) {
      b->ensure_grad();
      double* gb = b->grad.data();
      for (std::int64_t i = 0; i < B; ++i)
        for (std::int64_t j = 0; j < O; ++j) gb[j] += g[i * O + j];
    }
  });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int padding) {
  require_input(x->value.rank() == 4 && w->value.rank() == 4, "conv2d: need 4-D tensors");
  require_input(stride >= 1 && padding >= 0, "conv2d: bad stride/padding");
  const std::int64_t N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2),
                     W = x->value.dim(3);
  const std::int64_t O = w->value.dim(0), WC = w->value.dim(1);
  const int kh = static_cast<int>(w->value.dim(2)), kw = static_cast<int>(w->value.dim(3));
  require_input(WC == C, "conv2d: channel mismatch");
  const std::int64_t OH = (H + 2 * padding - kh) / stride + 1;
  const std::int64_t OW = (W + 2 * padding - kw) / stride + 1;
  require_input(OH > 0 && OW > 0, "conv2d: output would be empty");
  if (b) require_input(b->value.numel() == O, "conv2d: bias size mismatch");

  const std::int64_t CKK = C * kh * kw;
  Tensor out({N, O, OH, OW});
  std::vector<double> cols(static_cast<std::size_t>(CKK * OH * OW));
  for (std::int64_t n = 0; n < N; ++n) {
    im2col(x->value.data() + n * C * H * W, C, H, W, kh, kw, stride, padding, OH, OW,
           cols.data());
    detail::gemm(false, false, O, OH * OW, CKK, 1.0, w->value.data(), cols.data(), 0.0,
                 out.data() + n * O * OH * OW);
  }
  if (b) {
    const double* bv = b->value.data();
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t o = 0; o < O; ++o) {
        double* row = out.data() + (n * O + o) * OH * OW;
        for (std::int64_t i = 0; i < OH * OW; ++i) row[i] += bv[o];
      }
  }

  std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
  auto backward_fn = [x, w, b, N, C, H, W, O, kh, kw, stride, padding, OH, OW,
                      CKK](Node& n) {
    std::vector<double> cols(static_cast<std::size_t>(CKK * OH * OW));
    for (std::int64_t s = 0; s < N; ++s) {
      const double* g = n.grad.data() + s * O * OH * OW;
      if (w->requires_grad) {
        w->ensure_grad();
        im2col(x->value.data() + s * C * H * W, C, H, W, kh, kw, stride, padding, OH, OW,
               cols.data());
        detail::gemm(false, true, O, CKK, OH * OW, 1.0, g, cols.data(), 1.0, w->grad.data());
      }
      if (x->requires_grad) {
        x->ensure_grad();
        detail::gemm(true, false, CKK, OH * OW, O, 1.0, w->value.data(), g, 0.0, cols.data());
        col2im(cols.data(), C, H, W, kh, kw, stride, padding, OH, OW,
               x->grad.data() + s * C * H * W);
      }
      if (b && b->requires_grad) {
        b->ensure_grad();
        double* gb = b->grad.data();
        for (std::int64_t o = 0; o < O; ++o) {
          double acc = 0.0;
          const double* row = g + o * OH * OW;
          for (std::int64_t i = 0; i < OH * OW; ++i) acc += row[i];
          gb[o] += acc;
        }
      }
    }
  };
  return make_node(std::move(out), std::move(parents), std::move(backward_fn));
}

Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride, int padding) {
  require_input(x->value.rank() == 4 && w->value.rank() == 4,
                "conv_transpose2d: need 4-D tensors");
  require_input(stride >= 1 && padding >= 0, "conv_transpose2d: bad stride/padding");
  const std::int64_t N = x->value.dim(0), A = x->value.dim(1), H = x->value.dim(2),
                     W = x->value.dim(3);
  require_input(w->value.dim(0) == A, "conv_transpose2d: channel mismatch");
  const std::int64_t B = w->value.dim(1);
  const int kh = static_cast<int>(w->value.dim(2)), kw = static_cast<int>(w->value.dim(3));
  const std::int64_t HO = (H - 1) * stride + kh - 2 * padding;
  const std::int64_t WO = (W - 1) * stride + kw - 2 * padding;
  require_input(HO > 0 && WO > 0, "conv_transpose2d: output would be empty");
  if (b) require_input(b->value.numel() == B, "conv_transpose2d: bias size mismatch");

  const std::int64_t BKK = B * kh * kw;
  Tensor out({N, B, HO, WO});
  std::vector<double> cols(static_cast<std::size_t>(BKK * H * W));
  for (std::int64_t n = 0; n < N; ++n) {
    detail::gemm(true, false, BKK, H * W, A, 1.0, w->value.data(),
                 x->value.data() + n * A * H * W, 0.0, cols.data());
    col2im(cols.data(), B, HO, WO, kh, kw, stride, padding, H, W,
           out.data() + n * B * HO * WO);
  }
  if (b) {
    const double* bv = b->value.data();
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t c = 0; c < B; ++c) {
        double* row = out.data() + (n * B + c) * HO * WO;
        for (std::int64_t i = 0; i < HO * WO; ++i) row[i] += bv[c];
      }
  }

  std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
  auto backward_fn = [x, w, b, N, A, B, H, W, HO, WO, kh, kw, stride, padding,
                      BKK](Node& n) {
    std::vector<double> cols(static_cast<std::size_t>(BKK * H * W));
    for (std::int64_t s = 0; s < N; ++s) {
      const double* g = n.grad.data() + s * B * HO * WO;
      im2col(g, B, HO, WO, kh, kw, stride, padding, H, W, cols.data());
      if (x->requires_grad) {
        x->ensure_grad();
        detail::gemm(false, false, A, H * W, BKK, 1.0, w->value.data(), cols.data(), 1.0,
                     x->grad.data() + s * A * H * W);
      }
      if (w->requires_grad) {
        w->ensure_grad();
        detail::gemm(false, true, A, BKK, H * W, 1.0, x->value.data() + s * A * H * W,
                     cols.data(), 1.0, w->grad.data());
      }
      if (b && b->requires_grad) {
        b->ensure_grad();
        double* gb = b->grad.data();
        for (std::int64_t c = 0; c < B; ++c) {
          double acc = 0.0;
          const double* row = g + c * HO * WO;
          for (std::int64_t i = 0; i < HO * WO; ++i) acc += row[i];
          gb[c] += acc;
        }
      }
    }
  };
  return make_node(std::move(out), std::move(parents), std::move(backward_fn));
}

Var batch_norm2d(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state,
                 bool train) {
  require_input(x->value.rank() == 4, "batch_norm2d: need 4-D input");
  const std::int64_t N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2),
                     W = x->value.dim(3);
  require_input(gamma->value.numel() == C && beta->value.numel() == C &&
                    state.running_mean.numel() == C && state.running_var.numel() == C,
                "batch_norm2d: channel count mismatch");
  const std::int64_t count = N * H * W;
  const double eps = state.eps;

  std::vector<double> mean(static_cast<std::size_t>(C)), var(static_cast<std::size_t>(C));
  if (train) {
    for (std::int64_t c = 0; c < C; ++c) {
      double m = 0.0;
      for (std::int64_t n = 0; n < N; ++n) {
        const double* p = x->value.data() + (n * C + c) * H * W;
        for (std::int64_t i = 0; i < H * W; ++i) m += p[i];
      }
      m /= static_cast<double>(count);
      double v = 0.0;
      for (std::int64_t n = 0; n < N; ++n) {
        const double* p = x->value.data() + (n * C + c) * H * W;
        for (std::int64_t i = 0; i < H * W; ++i) v += (p[i] - m) * (p[i] - m);
      }
      v /= static_cast<double>(count);  // biased, used for normalization
      mean[static_cast<std::size_t>(c)] = m;
      var[static_cast<std::size_t>(c)] = v;
      const double unbiased = count > 1 ? v * static_cast<double>(count) / (count - 1) : v;
      state.running_mean[c] = (1.0 - state.momentum) * state.running_mean[c] + state.momentum * m;
      state.running_var[c] = (1.0 - state.momentum) * state.running_var[c] + state.momentum * unbiased;
    }
  } else {
    for (std::int64_t c = 0; c < C; ++c) {
      mean[static_cast<std::size_t>(c)] = state.running_mean[c];
      var[static_cast<std::size_t>(c)] = state.running_var[c];
    }
  }

  Tensor out(x->value.shape());
  for (std::int64_t c = 0; c < C; ++c) {
    const double inv = 1.0 / std::sqrt(var[static_cast<std::size_t>(c)] + eps);
    const double g = gamma->value[c], bt = beta->value[c], m = mean[static_cast<std::size_t>(c)];
    for (std::int64_t n = 0; n < N; ++n) {
      const double* p = x->value.data() + (n * C + c) * H * W;
      double* o = out.data() + (n * C + c) * H * W;
      for (std::int64_t i = 0; i < H * W; ++i) o[i] = g * (p[i] - m) * inv + bt;
    }
  }

  auto backward_fn = [x, gamma, beta, N, C, H, W, count, eps, train, mean, var](Node& nd) {
    for (std::int64_t c = 0; c < C; ++c) {
      const double m = mean[static_cast<std::size_t>(c)];
      const double inv = 1.0 / std::sqrt(var[static_cast<std::size_t>(c)] + eps);
      const double gm = gamma->value[c];
      double sum_g = 0.0, sum_gx = 0.0;  // sums of grad and grad * x_hat
      for (std::int64_t n = 0; n < N; ++n) {
        const double* g = nd.grad.data() + (n * C + c) * H * W;
        const double* p = x->value.data() + (n * C + c) * H * W;
        for (std::int64_t i = 0; i < H * W; ++i) {
          sum_g += g[i];
          sum_gx += g[i] * (p[i] - m) * inv;
        }
      }
      if (gamma->requires_grad) {
        gamma->ensure_grad();
        gamma->grad[c] += sum_gx;
      }
      if (beta->requires_grad) {
        beta->ensure_grad();
        beta->grad[c] += sum_g;
      }
      if (x->requires_grad) {
        x->ensure_grad();
        const double inv_count = 1.0 / static_cast<double>(count);
        for (std::int64_t n = 0; n < N; ++n) {
          const double* g = nd.grad.data() + (n * C + c) * H * W;
          const double* p = x->value.data() + (n * C + c) * H * W;
          double* gx = x->grad.data() + (n * C + c) * H * W;
          for (std::int64_t i = 0; i < H * W; ++i) {
            const double xhat = (p[i] - m) * inv;
            if (train)
              gx[i] += gm * inv * (g[i] - inv_count * sum_g - xhat * inv_count * sum_gx);
            else
              gx[i] += gm * inv * g[i];
          }
        }
      }
    }
  };
  return make_node(std::move(out), {x, gamma, beta}, std::move(backward_fn));
}

Var mean_all(const Var& a) {
  const std::int64_t n = a->value.numel();
  require_input(n > 0, "mean_all: empty tensor");
  double acc = 0.0;
  const double* v = a->value.data();
  for (std::int64_t i = 0; i < n; ++i) acc += v[i];
  Tensor out = Tensor::scalar(acc / static_cast<double>(n));
  return make_node(std::move(out), {a}, [a, n](Node& nd) {
    a->ensure_grad();
    const double g = nd.grad[0] / static_cast<double>(n);
    double* ga = a->grad.data();
    for (std::int64_t i = 0; i < n; ++i) ga[i] += g;
  });
}

Var sum_all(const Var& a) {
  const std::int64_t n = a->value.numel();
  double acc = 0.0;
  const double* v = a->value.data();
  for (std::int64_t i = 0; i < n; ++i) acc += v[i];
  Tensor out = Tensor::scalar(acc);
  return make_node(std::move(out), {a}, [a, n](Node& nd) {
    a->ensure_grad();
    const double g = nd.grad[0];
    double* ga = a->grad.data();
    for (std::int64_t i = 0; i < n; ++i) ga[i] += g;
  });
}

Var mse(const Var& a, const Var& b) {
  check_same_shape(a, b, "mse");
  const std::int64_t n = a->value.numel();
  require_input(n > 0, "mse: empty tensors");
  double acc = 0.0;
  const double* av = a->value.data();
  const double* bv = b->value.data();
  for (std::int64_t i = 0; i < n; ++i) acc += (av[i] - bv[i]) * (av[i] - bv[i]);
  Tensor out = Tensor::scalar(acc / static_cast<double>(n));
  return make_node(std::move(out), {a, b}, [a, b, n](Node& nd) {
    const double g = nd.grad[0] * 2.0 / static_cast<double>(n);
    const double* av = a->value.data();
    const double* bv = b->value.data();
    if (a->requires_grad) {
      a->ensure_grad();
      double* ga = a->grad.data();
      for (std::int64_t i = 0; i < n; ++i) ga[i] += g * (av[i] - bv[i]);
    }
    if (b->requires_grad) {
      b->ensure_grad();
      double* gb = b->grad.data();
      for (std::int64_t i = 0; i < n; ++i) gb[i] -= g * (av[i] - bv[i]);
    }
  });
}

Var detach(const Var& a) { return constant(a->value); }

Var straight_through(const Var& e, const Var& q) {
  return add(e, detach(sub(q, e)));
}

Var stack_frames(const std::vector<Var>& frames) {
  require_input(!frames.empty(), "stack_frames: empty sequence");
  const std::int64_t T = static_cast<std::int64_t>(frames.size());
  const std::int64_t B = frames[0]->value.dim(0), F = frames[0]->value.dim(1);
  Tensor out({B, 1, T, F});
  for (std::int64_t t = 0; t < T; ++t) {
    require_input(frames[static_cast<std::size_t>(t)]->value.rank() == 2 &&
                      frames[static_cast<std::size_t>(t)]->value.dim(0) == B &&
                      frames[static_cast<std::size_t>(t)]->value.dim(1) == F,
                  "stack_frames: inconsistent frame shapes");
    const double* src = frames[static_cast<std::size_t>(t)]->value.data();
    for (std::int64_t b = 0; b < B; ++b)
      std::copy_n(src + b * F, F, out.data() + (b * T + t) * F);
  }
  std::vector<Var> parents(frames.begin(), frames.end());
  return make_node(std::move(out), std::move(parents), [frames, B, T, F](Node& nd) {
    for (std::int64_t t = 0; t < T; ++t) {
      const auto& fr = frames[static_cast<std::size_t>(t)];
      if (!fr->requires_grad) continue;
      fr->ensure_grad();
      for (std::int64_t b = 0; b < B; ++b) {
        const double* g = nd.grad.data() + (b * T + t) * F;
        double* dst = fr->grad.data() + b * F;
        for (std::int64_t f = 0; f < F; ++f) dst[f] += g[f];
      }
    }
  });
}

Var slice_cols(const Var& a, std::int64_t lo, std::int64_t hi) {
  require_input(a->value.rank() == 2 && 0 <= lo && lo < hi && hi <= a->value.dim(1),
                "slice_cols: bad range");
  const std::int64_t B = a->value.dim(0), N = a->value.dim(1), M = hi - lo;
  Tensor out({B, M});
  for (std::int64_t b = 0; b < B; ++b)
    std::copy_n(a->value.data() + b * N + lo, M, out.data() + b * M);
  return make_node(std::move(out), {a}, [a, lo, B, N, M](Node& nd) {
    a->ensure_grad();
    for (std::int64_t b = 0; b < B; ++b) {
      const double* g = nd.grad.data() + b * M;
      double* dst = a->grad.data() + b * N + lo;
      for (std::int64_t i = 0; i < M; ++i) dst[i] += g[i];
    }
  });
}

Var gather_codebook(const Var& codebook, const std::vector<std::int64_t>& indices,
                    std::int64_t batch, std::int64_t frames, std::int64_t bins) {
  require_input(codebook->value.rank() == 2, "gather_codebook: codebook must be (K,L)");
  const std::int64_t K = codebook->value.dim(0), L = codebook->value.dim(1);
  require_input(static_cast<std::int64_t>(indices.size()) == batch * frames * bins,
                "gather_codebook: index count mismatch");
  Tensor out({batch, L, frames, bins});
  const double* cb = codebook->value.data();
  for (std::int64_t n = 0; n < batch; ++n)
    for (std::int64_t t = 0; t < frames; ++t)
      for (std::int64_t f = 0; f < bins; ++f) {
        const std::int64_t idx = indices[static_cast<std::size_t>((n * frames + t) * bins + f)];
        require_input(idx >= 0 && idx < K, "gather_codebook: index out of range");
        for (std::int64_t l = 0; l < L; ++l)
          out[((n * L + l) * frames + t) * bins + f] = cb[idx * L + l];
      }
  return make_node(std::move(out), {codebook},
                   [codebook, indices, batch, frames, bins, L](Node& nd) {
                     codebook->ensure_grad();
                     double* gcb = codebook->grad.data();
                     for (std::int64_t n = 0; n < batch; ++n)
                       for (std::int64_t t = 0; t < frames; ++t)
                         for (std::int64_t f = 0; f < bins; ++f) {
                           const std::int64_t idx =
                               indices[static_cast<std::size_t>((n * frames + t) * bins + f)];
                           for (std::int64_t l = 0; l < L; ++l)
                             gcb[idx * L + l] += nd.grad[((n * L + l) * frames + t) * bins + f];
                         }
                   });
}

namespace {

// Shared kernel for the channel-wise cosine op and its value-only variant.
void cosine_channel_forward(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::int64_t N = a.dim(0), C = a.dim(1), T = a.dim(2), F = a.dim(3);
  const std::int64_t stride = T * F;
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t t = 0; t < T; ++t)
      for (std::int64_t f = 0; f < F; ++f) {
        const std::int64_t base = (n * C * T + t) * F + f;
        CosineParts p = cosine_parts(a.data() + base, b.data() + base, C, stride);
        out[(n * T + t) * F + f] = 1.0 - p.dot / (p.norm_a * p.norm_b);
      }
}

}  // namespace

Var cosine_distance_channel(const Var& a, const Var& b) {
  check_same_shape(a, b, "cosine_distance_channel");
  require_input(a->value.rank() == 4, "cosine_distance_channel: need (N,C,T,F)");
  const std::int64_t N = a->value.dim(0), C = a->value.dim(1), T = a->value.dim(2),
                     F = a->value.dim(3);
  Tensor out({N, T, F});
  cosine_channel_forward(a->value, b->value, out);
  auto backward_fn = [a, b, N, C, T, F](Node& nd) {
    const std::int64_t stride = T * F;
    if (a->requires_grad) a->ensure_grad();
    if (b->requires_grad) b->ensure_grad();
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t t = 0; t < T; ++t)
        for (std::int64_t f = 0; f < F; ++f) {
          const double g = nd.grad[(n * T + t) * F + f];
          if (g == 0.0) continue;
          const std::int64_t base = (n * C * T + t) * F + f;
          const double* av = a->value.data() + base;
          const double* bv = b->value.data() + base;
          CosineParts p = cosine_parts(av, bv, C, stride);
          const double inv = 1.0 / (p.norm_a * p.norm_b);
          if (a->requires_grad) {
            double* ga = a->grad.data() + base;
            for (std::int64_t c = 0; c < C; ++c) {
              double d = -bv[c * stride] * inv;
              if (!p.floored_a)
                d += p.dot * av[c * stride] / (p.norm_a * p.norm_a) * inv;
              ga[c * stride] += g * d;
            }
          }
          if (b->requires_grad) {
            double* gb = b->grad.data() + base;
            for (std::int64_t c = 0; c < C; ++c) {
              double d = -av[c * stride] * inv;
              if (!p.floored_b)
                d += p.dot * bv[c * stride] / (p.norm_b * p.norm_b) * inv;
              gb[c * stride] += g * d;
            }
          }
        }
  };
  return make_node(std::move(out), {a, b}, std::move(backward_fn));
}

Var patch_cosine_distance(const Var& a, const Var& b) {
  check_same_shape(a, b, "patch_cosine_distance");
  require_input(a->value.rank() == 4 && a->value.dim(1) == 1,
                "patch_cosine_distance: need (N,1,T,F)");
  const std::int64_t N = a->value.dim(0), T = a->value.dim(2), F = a->value.dim(3);
  Tensor out({N, T, F});

  auto patch = [T, F](const double* img, std::int64_t t, std::int64_t f, double* buf) {
    std::int64_t m = 0;
    for (std::int64_t dt = -1; dt <= 1; ++dt)
      for (std::int64_t df = -1; df <= 1; ++df) {
        const std::int64_t tt = t + dt, ff = f + df;
        if (tt < 0 || tt >= T || ff < 0 || ff >= F) continue;
        buf[m++] = img[tt * F + ff];
      }
    return m;
  };

  double ua[9], ub[9];
  for (std::int64_t n = 0; n < N; ++n) {
    const double* av = a->value.data() + n * T * F;
    const double* bv = b->value.data() + n * T * F;
    for (std::int64_t t = 0; t < T; ++t)
      for (std::int64_t f = 0; f < F; ++f) {
        const std::int64_t m = patch(av, t, f, ua);
        patch(bv, t, f, ub);
        CosineParts p = cosine_parts(ua, ub, m, 1);
        out[(n * T + t) * F + f] = 1.0 - p.dot / (p.norm_a * p.norm_b);
      }
  }

  auto backward_fn = [a, b, N, T, F, patch](Node& nd) {
    double ua[9], ub[9];
    if (a->requires_grad) a->ensure_grad();
    if (b->requires_grad) b->ensure_grad();
    for (std::int64_t n = 0; n < N; ++n) {
      const double* av = a->value.data() + n * T * F;
      const double* bv = b->value.data() + n * T * F;
      for (std::int64_t t = 0; t < T; ++t)
        for (std::int64_t f = 0; f < F; ++f) {
          const double g = nd.grad[(n * T + t) * F + f];
          if (g == 0.0) continue;
          const std::int64_t m = patch(av, t, f, ua);
          patch(bv, t, f, ub);
          CosineParts p = cosine_parts(ua, ub, m, 1);
          const double inv = 1.0 / (p.norm_a * p.norm_b);
          std::int64_t i = 0;
          for (std::int64_t dt = -1; dt <= 1; ++dt)
            for (std::int64_t df = -1; df <= 1; ++df) {
              const std::int64_t tt = t + dt, ff = f + df;
              if (tt < 0 || tt >= T || ff < 0 || ff >= F) continue;
              if (a->requires_grad) {
                double d = -ub[i] * inv;
                if (!p.floored_a) d += p.dot * ua[i] / (p.norm_a * p.norm_a) * inv;
                a->grad[n * T * F + tt * F + ff] += g * d;
              }
              if (b->requires_grad) {
                double d = -ua[i] * inv;
                if (!p.floored_b) d += p.dot * ub[i] / (p.norm_b * p.norm_b) * inv;
                b->grad[n * T * F + tt * F + ff] += g * d;
              }
              ++i;
            }
        }
    }
  };
  return make_node(std::move(out), {a, b}, std::move(backward_fn));
}

double cosine_distance(const double* a, const double* b, std::int64_t n) {
  CosineParts p = cosine_parts(a, b, n, 1);
  return 1.0 - p.dot / (p.norm_a * p.norm_b);
}

Tensor tensor_cosine_distance_channel(const Tensor& a, const Tensor& b) {
  require_input(a.same_shape(b) && a.rank() == 4, "tensor cosine distance: need (N,C,T,F)");
  Tensor out({a.dim(0), a.dim(2), a.dim(3)});
  cosine_channel_forward(a, b, out);
  return out;
}

// --------------------------------------------------------- parameters ---

Var ParamStore::create(const std::string& name, Tensor init, bool trainable) {
  for (const auto& p : params_)
    require_input(p.name != name, "duplicate parameter name: " + name);
  Param p;
  p.name = name;
  p.var = leaf(std::move(init), trainable);
  p.trainable = trainable;
  params_.push_back(p);
  return params_.back().var;
}

Var ParamStore::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p.var;
  throw InvalidInputError("unknown parameter: " + name);
}

void ParamStore::zero_grad() {
  for (auto& p : params_)
    if (p.var->grad.numel() > 0) p.var->grad.fill(0.0);
}

void ParamStore::freeze() {
  for (auto& p : params_) {
    p.trainable = false;
    p.var->requires_grad = false;
  }
}

std::uint64_t ParamStore::value_digest() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& p : params_) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p.var->value.data());
    const std::size_t n = static_cast<std::size_t>(p.var->value.numel()) * sizeof(double);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

void Adam::step(ParamStore& store) {
  auto& params = store.params();
  if (m_.size() != params.size()) {
    m_.assign(params.size(), Tensor());
    v_.assign(params.size(), Tensor());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = Tensor::zeros(params[i].var->value.shape());
      v_[i] = Tensor::zeros(params[i].var->value.shape());
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) continue;
    auto& p = *params[i].var;
    const bool has_grad = p.grad.numel() == p.value.numel();
    double* m = m_[i].data();
    double* v = v_[i].data();
    double* val = p.value.data();
    for (std::int64_t j = 0; j < p.value.numel(); ++j) {
      const double g = has_grad ? p.grad[j] : 0.0;
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
      val[j] -= lr_ * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_);
    }
  }
}

std::vector<std::pair<std::string, Tensor>> Adam::state_tensors(const ParamStore& store) const {
  std::vector<std::pair<std::string, Tensor>> out;
  if (m_.size() != store.params().size()) return out;
  for (std::size_t i = 0; i < store.params().size(); ++i) {
    out.emplace_back("adam.m." + store.params()[i].name, m_[i]);
    out.emplace_back("adam.v." + store.params()[i].name, v_[i]);
  }
  return out;
}

void Adam::load_state(const ParamStore& store,
                      const std::function<const Tensor*(const std::string&)>& lookup,
                      std::int64_t steps) {
  m_.clear();
  v_.clear();
  for (const auto& p : store.params()) {
    const Tensor* m = lookup("adam.m." + p.name);
    const Tensor* v = lookup("adam.v." + p.name);
    m_.push_back(m ? *m : Tensor::zeros(p.var->value.shape()));
    v_.push_back(v ? *v : Tensor::zeros(p.var->value.shape()));
  }
  t_ = steps;
}

// ---------------------------------------------------------- grad check ---

double grad_check(const LossFn& fn, const std::vector<Tensor>& inputs, double h) {
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) leaves.push_back(leaf(t, true));
  Var loss = fn(leaves);
  require_input(loss->value.numel() == 1, "grad_check: loss must be scalar");
  backward(loss);
  std::vector<Tensor> analytic;
  for (auto& l : leaves) {
    l->ensure_grad();
    analytic.push_back(l->grad);
  }

  auto eval = [&](const std::vector<Tensor>& pts) {
    std::vector<Var> ls;
    ls.reserve(pts.size());
    for (const auto& t : pts) ls.push_back(leaf(t, false));
    return fn(ls)->value[0];
  };

  double max_err = 0.0;
  std::vector<Tensor> work = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::int64_t j = 0; j < inputs[i].numel(); ++j) {
      const double orig = work[i][j];
      work[i][j] = orig + h;
      const double up = eval(work);
      work[i][j] = orig - h;
      const double dn = eval(work);
      work[i][j] = orig;
      const double fd = (up - dn) / (2.0 * h);
      const double an = analytic[i][j];
      const double err = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-3});
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace vqse::ad
