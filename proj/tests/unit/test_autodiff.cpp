// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vqse/autodiff.hpp"

#include <doctest.h>

#include <cmath>

#include "vqse/nn.hpp"

using namespace vqse;
using namespace vqse::ad;

namespace {

Tensor random_tensor(std::vector<std::int64_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> gauss(0.0, scale);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = gauss(rng);
  return t;
}

// Keeps |x| away from the relu kink so finite differences stay valid.
Tensor random_kink_free(std::vector<std::int64_t> shape, Rng& rng) {
  Tensor t = random_tensor(std::move(shape), rng);
  for (std::int64_t i = 0; i < t.numel(); ++i)
    if (std::abs(t[i]) < 1e-2) t[i] += t[i] >= 0 ? 1e-2 : -1e-2;
  return t;
}

double dot_all(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("backward of sum gives ones; of squared norm gives x") {
  Rng rng(1);
  Tensor x = random_tensor({3, 4}, rng);
  Var vx = leaf(x, true);
  backward(sum_all(vx));
  for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(vx->grad[i] == doctest::Approx(1.0));

  Var vy = leaf(x, true);
  backward(scale(sum_all(square(vy)), 0.5));
  for (std::int64_t i = 0; i < x.numel(); ++i)
    CHECK(vy->grad[i] == doctest::Approx(x[i]).epsilon(1e-12));
}

TEST_CASE("backward requires a scalar loss") {
  Var v = leaf(Tensor::zeros({2, 2}), true);
  CHECK_THROWS_AS(backward(v), InvalidInputError);
}

TEST_CASE("gradients accumulate on fan-out") {
  Rng rng(2);
  Tensor x = random_tensor({5}, rng);
  Var vx = leaf(x, true);
  // loss = sum(x) + sum(x .* x): d/dx = 1 + 2x
  backward(add(sum_all(vx), sum_all(mul(vx, vx))));
  for (std::int64_t i = 0; i < x.numel(); ++i)
    CHECK(vx->grad[i] == doctest::Approx(1.0 + 2.0 * x[i]).epsilon(1e-12));
}

TEST_CASE("conv2d identity and summing kernels") {
  Rng rng(3);
  Tensor x = random_tensor({1, 1, 4, 4}, rng);
  Tensor w({1, 1, 1, 1});
  w[0] = 1.0;
  Var y = conv2d(leaf(x, false), leaf(w, false), nullptr, 1, 0);
  for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(y->value[i] == doctest::Approx(x[i]));

  Tensor ones_in = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor ones_k = Tensor::full({1, 1, 3, 3}, 1.0);
  Var s = conv2d(leaf(ones_in, false), leaf(ones_k, false), nullptr, 1, 0);
  REQUIRE(s->value.numel() == 1);
  CHECK(s->value[0] == doctest::Approx(9.0));
}

TEST_CASE("conv_transpose2d is the exact adjoint of conv2d") {
  Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const int stride = trial % 2 ? 2 : 1;
    const int pad = trial % 3 == 0 ? 1 : 0;
    // sizes chosen so the stride divides (H + 2p - k) exactly
    const std::int64_t H = stride == 2 ? 7 : 6;
    Tensor x = random_tensor({2, 3, H, H}, rng);
    Tensor w = random_tensor({4, 3, 3, 3}, rng);
    Var cx = conv2d(leaf(x, false), leaf(w, false), nullptr, stride, pad);
    Tensor y = random_tensor(cx->value.shape(), rng);
    Var ty = conv_transpose2d(leaf(y, false), leaf(w, false), nullptr, stride, pad);
    REQUIRE(ty->value.shape() == x.shape());
    CHECK(std::abs(dot_all(cx->value, y) - dot_all(x, ty->value)) < 1e-10);
  }
}

TEST_CASE("elementwise op examples") {
  Tensor t({3});
  t[0] = -1.0;
  t[1] = 0.0;
  t[2] = 2.0;
  Var r = relu(leaf(t, false));
  CHECK(r->value[0] == 0.0);
  CHECK(r->value[1] == 0.0);
  CHECK(r->value[2] == 2.0);

  Var s = sigmoid(leaf(Tensor::zeros({1}), false));
  CHECK(s->value[0] == doctest::Approx(0.5));

  // linear with identity weights
  Tensor eye({2, 2});
  eye.at(0, 0) = 1.0;
  eye.at(1, 1) = 1.0;
  Tensor x({1, 2});
  x[0] = 3.0;
  x[1] = -4.0;
  Var y = linear(leaf(x, false), leaf(eye, false), leaf(Tensor::zeros({2}), false));
  CHECK(y->value[0] == doctest::Approx(3.0));
  CHECK(y->value[1] == doctest::Approx(-4.0));
}

TEST_CASE("batch norm train/eval semantics") {
  Rng rng(5);
  const std::int64_t N = 4, C = 2, H = 3, W = 3;
  Tensor x = random_tensor({N, C, H, W}, rng);
  // standardize per channel so the zero-mean unit-variance case is exact
  for (std::int64_t c = 0; c < C; ++c) {
    double m = 0, v = 0;
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t i = 0; i < H * W; ++i) m += x.data()[(n * C + c) * H * W + i];
    m /= static_cast<double>(N * H * W);
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t i = 0; i < H * W; ++i) {
        double& e = x.data()[(n * C + c) * H * W + i];
        e -= m;
        v += e * e;
      }
    v = std::sqrt(v / static_cast<double>(N * H * W));
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t i = 0; i < H * W; ++i) x.data()[(n * C + c) * H * W + i] /= v;
  }

  BatchNormState state;
  state.running_mean = Tensor::zeros({C});
  state.running_var = Tensor::full({C}, 1.0);

  SUBCASE("gamma=1, beta=0 on standardized input is near identity") {
    Var y = batch_norm2d(leaf(x, false), leaf(Tensor::full({C}, 1.0), false),
                         leaf(Tensor::zeros({C}), false), state, true);
    // the variance floor skews values by ~eps/2 relative
    for (std::int64_t i = 0; i < x.numel(); ++i)
      CHECK(std::abs(y->value[i] - x[i]) < 1e-5 * (1.0 + std::abs(x[i])));
  }

  SUBCASE("gamma=0 collapses to beta") {
    Var y = batch_norm2d(leaf(x, false), leaf(Tensor::zeros({C}), false),
                         leaf(Tensor::full({C}, 2.5), false), state, true);
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(y->value[i] == doctest::Approx(2.5));
  }

  SUBCASE("train-mode output statistics match gamma/beta") {
    Tensor gamma({C});
    gamma[0] = 1.5;
    gamma[1] = 0.5;
    Tensor beta({C});
    beta[0] = -1.0;
    beta[1] = 2.0;
    Rng rng2(6);
    Tensor raw = random_tensor({N, C, H, W}, rng2, 3.0);
    Var y = batch_norm2d(leaf(raw, false), leaf(gamma, false), leaf(beta, false), state, true);
    for (std::int64_t c = 0; c < C; ++c) {
      double m = 0, v = 0;
      for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t i = 0; i < H * W; ++i) m += y->value[(n * C + c) * H * W + i];
      m /= static_cast<double>(N * H * W);
      for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t i = 0; i < H * W; ++i) {
          const double d = y->value[(n * C + c) * H * W + i] - m;
          v += d * d;
        }
      v = std::sqrt(v / static_cast<double>(N * H * W));
      CHECK(m == doctest::Approx(beta[c]).epsilon(1e-4));
      CHECK(v == doctest::Approx(std::abs(gamma[c])).epsilon(1e-3));
    }
  }

  SUBCASE("eval mode uses running stats and is batch independent") {
    state.running_mean[0] = 0.3;
    state.running_mean[1] = -0.2;
    state.running_var[0] = 2.0;
    state.running_var[1] = 0.5;
    Tensor gamma = Tensor::full({C}, 1.0);
    Tensor beta = Tensor::zeros({C});
    Var y = batch_norm2d(leaf(x, false), leaf(gamma, false), leaf(beta, false), state, false);
    for (std::int64_t c = 0; c < C; ++c) {
      const double inv = 1.0 / std::sqrt(state.running_var[c] + state.eps);
      for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t i = 0; i < H * W; ++i) {
          const double expect =
              (x[(n * C + c) * H * W + i] - state.running_mean[c]) * inv;
          CHECK(y->value[(n * C + c) * H * W + i] == doctest::Approx(expect).epsilon(1e-12));
        }
    }
  }

  SUBCASE("batch of one is permitted in train mode") {
    Tensor single = random_tensor({1, C, 1, 1}, rng);
    Var y = batch_norm2d(leaf(single, false), leaf(Tensor::full({C}, 1.0), false),
                         leaf(Tensor::zeros({C}), false), state, true);
    for (std::int64_t i = 0; i < y->value.numel(); ++i) CHECK(std::isfinite(y->value[i]));
  }
}

TEST_CASE("cosine distance analytic values") {
  double v[3] = {0.3, -1.2, 0.7};
  double nv[3] = {-0.3, 1.2, -0.7};
  CHECK(cosine_distance(v, v, 3) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(cosine_distance(v, nv, 3) == doctest::Approx(2.0).epsilon(1e-12));
  double e1[2] = {1.0, 0.0};
  double e2[2] = {0.0, 1.0};
  CHECK(cosine_distance(e1, e2, 2) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("gru zero weights yield zero outputs; one step equals one cell") {
  Rng rng(7);
  ParamStore store;
  nn::GruStack gru = nn::GruStack::create(store, "g", 3, 4, 2, rng);
  // zero the parameters: gates saturate to sigmoid(0)=0.5, candidate tanh(0)=0
  for (auto& p : store.params()) p.var->value.fill(0.0);
  std::vector<Var> seq;
  for (int t = 0; t < 5; ++t) seq.push_back(constant(random_tensor({2, 3}, rng)));
  auto out = gru.forward(seq);
  for (const auto& h : out)
    for (std::int64_t i = 0; i < h->value.numel(); ++i) CHECK(h->value[i] == 0.0);

  // hand-computed single step of a single-layer cell
  ParamStore store1;
  nn::GruStack cell = nn::GruStack::create(store1, "c", 2, 2, 1, rng);
  Tensor x = random_tensor({1, 2}, rng);
  auto got = cell.forward({constant(x)});
  REQUIRE(got.size() == 1);

  auto& w_ih = store1.find("c.l0.w_ih")->value;
  auto& b_ih = store1.find("c.l0.b_ih")->value;
  auto& b_hh = store1.find("c.l0.b_hh")->value;
  // h_prev = 0, so the hh contribution is only its bias
  const int Hn = 2;
  for (int j = 0; j < Hn; ++j) {
    auto gate = [&](int block, int jj) {
      double acc = b_ih[block * Hn + jj] + b_hh[block * Hn + jj];
      for (int i = 0; i < 2; ++i) acc += w_ih.at(block * Hn + jj, i) * x[i];
      return acc;
    };
    const double r = 1.0 / (1.0 + std::exp(-gate(0, j)));
    (void)r;  // with h_prev = 0 the reset gate multiplies only b_hh, handled below
    const double z = 1.0 / (1.0 + std::exp(-gate(1, j)));
    double n_pre = b_ih[2 * Hn + j];
    for (int i = 0; i < 2; ++i) n_pre += w_ih.at(2 * Hn + j, i) * x[i];
    const double r2 = 1.0 / (1.0 + std::exp(-gate(0, j)));
    n_pre += r2 * b_hh[2 * Hn + j];
    const double n = std::tanh(n_pre);
    const double h = (1.0 - z) * n;
    CHECK(got[0]->value[j] == doctest::Approx(h).epsilon(1e-12));
  }

  CHECK_THROWS_AS(gru.forward({}), InvalidInputError);
}

TEST_CASE("straight-through passes gradients as identity") {
  Rng rng(8);
  Tensor e = random_tensor({2, 3}, rng);
  Tensor q = random_tensor({2, 3}, rng);
  Var ve = leaf(e, true);
  Var st = straight_through(ve, leaf(q, false));
  for (std::int64_t i = 0; i < q.numel(); ++i)
    CHECK(st->value[i] == doctest::Approx(q[i]).epsilon(1e-12));
  backward(mean_all(st));
  Var ve2 = leaf(e, true);
  backward(mean_all(ve2));
  for (std::int64_t i = 0; i < e.numel(); ++i)
    CHECK(ve->grad[i] == doctest::Approx(ve2->grad[i]).epsilon(1e-12));
}

TEST_CASE("finite-difference checks for every layer") {
  // 20 seeds per layer; the acceptance suite re-runs this battery with
  // timing constraints.
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);

    SUBCASE("") {}  // keep doctest quiet about empty sections

    {  // conv2d w.r.t. input, weight, bias
      std::vector<Tensor> inputs = {random_tensor({2, 2, 5, 4}, rng),
                                    random_tensor({3, 2, 3, 3}, rng),
                                    random_tensor({3}, rng)};
      double err = grad_check(
          [](std::vector<Var>& v) {
            return mean_all(square(conv2d(v[0], v[1], v[2], 1, 1)));
          },
          inputs);
      CHECK(err < 1e-4);
    }
    {  // conv2d stride 2
      std::vector<Tensor> inputs = {random_tensor({1, 2, 7, 7}, rng),
                                    random_tensor({2, 2, 3, 3}, rng),
                                    random_tensor({2}, rng)};
      double err = grad_check(
          [](std::vector<Var>& v) {
            return mean_all(square(conv2d(v[0], v[1], v[2], 2, 1)));
          },
          inputs);
      CHECK(err < 1e-4);
    }
    {  // conv_transpose2d
      std::vector<Tensor> inputs = {random_tensor({2, 3, 4, 4}, rng),
                                    random_tensor({3, 2, 3, 3}, rng),
                                    random_tensor({2}, rng)};
      double err = grad_check(
          [](std::vector<Var>& v) {
            return mean_all(square(conv_transpose2d(v[0], v[1], v[2], 1, 1)));
          },
          inputs);
      CHECK(err < 1e-4);
    }
    {  // batch norm (train mode)
      std::vector<Tensor> inputs = {random_tensor({3, 2, 4, 3}, rng),
                                    random_tensor({2}, rng), random_tensor({2}, rng)};
      double err = grad_check(
          [](std::vector<Var>& v) {
            BatchNormState st;
            st.running_mean = Tensor::zeros({2});
            st.running_var = Tensor::full({2}, 1.0);
            return mean_all(square(batch_norm2d(v[0], v[1], v[2], st, true)));
          },
          inputs);
      CHECK(err < 1e-4);
    }
    {  // relu (inputs nudged off the kink)
      std::vector<Tensor> inputs = {random_kink_free({4, 5}, rng)};
      double err = grad_check(
          [](std::vector<Var>& v) { return mean_all(square(relu(v[0]))); }, inputs);
      CHECK(err < 1e-4);
    }
    {  // sigmoid
      std::vector<Tensor> inputs = {random_tensor({4, 5}, rng)};
      double err = grad_check(
          [](std::vector<Var>& v) { return mean_all(square(sigmoid(v[0]))); }, inputs);
      CHECK(err < 1e-4);
    }
    {  // linear
      std::vector<Tensor> inputs = {random_tensor({3, 4}, rng), random_tensor({2, 4}, rng),
                                    random_tensor({2}, rng)};
      double err = grad_check(
          [](std::vector<Var>& v) { return mean_all(square(linear(v[0], v[1], v[2]))); },
          inputs);
      CHECK(err < 1e-4);
    }
    {  // gru stack: 3 steps, 4 units
      const int I = 3, H = 4;
      std::vector<Tensor> inputs = {
          random_tensor({2, I}, rng),      random_tensor({2, I}, rng),
          random_tensor({2, I}, rng),      random_tensor({3 * H, I}, rng),
          random_tensor({3 * H}, rng),     random_tensor({3 * H, H}, rng),
          random_tensor({3 * H}, rng)};
      double err = grad_check(
          [H](std::vector<Var>& v) {
            Var h = constant(Tensor::zeros({2, H}));
            for (int t = 0; t < 3; ++t) {
              Var gx = linear(v[static_cast<std::size_t>(t)], v[3], v[4]);
              Var gh = linear(h, v[5], v[6]);
              Var r = sigmoid(add(slice_cols(gx, 0, H), slice_cols(gh, 0, H)));
              Var z = sigmoid(add(slice_cols(gx, H, 2 * H), slice_cols(gh, H, 2 * H)));
              Var n = tanh_op(add(slice_cols(gx, 2 * H, 3 * H),
                                  mul(r, slice_cols(gh, 2 * H, 3 * H))));
              h = add(sub(n, mul(z, n)), mul(z, h));
            }
            return mean_all(square(h));
          },
          inputs, 1e-5);
      CHECK(err < 1e-4);
    }
    {  // cosine distance over channels
      std::vector<Tensor> inputs = {random_tensor({1, 6, 2, 3}, rng),
                                    random_tensor({1, 6, 2, 3}, rng)};
      double err = grad_check(
          [](std::vector<Var>& v) {
            return mean_all(cosine_distance_channel(v[0], v[1]));
          },
          inputs);
      CHECK(err < 1e-4);
    }
    {  // patch cosine distance
      std::vector<Tensor> inputs = {random_tensor({1, 1, 4, 5}, rng),
                                    random_tensor({1, 1, 4, 5}, rng)};
      double err = grad_check(
          [](std::vector<Var>& v) {
            return mean_all(patch_cosine_distance(v[0], v[1]));
          },
          inputs);
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("adam updates only trainable parameters") {
  ParamStore store;
  Var a = store.create("a", Tensor::full({2}, 1.0));
  Var b = store.create("b", Tensor::full({2}, 1.0), /*trainable=*/false);
  Adam adam(0.1);
  backward(sum_all(mul(a, a)));
  adam.step(store);
  CHECK(a->value[0] < 1.0);
  CHECK(b->value[0] == 1.0);
}

TEST_CASE("frozen stores keep their byte digest") {
  Rng rng(9);
  ParamStore store;
  store.create("w", random_tensor({4, 4}, rng));
  const std::uint64_t digest = store.value_digest();
  store.freeze();
  Adam adam(0.1);
  adam.step(store);
  CHECK(store.value_digest() == digest);
}

}  // TEST_SUITE
