#include <doctest.h>

#include <cmath>
#include <numbers>

#include "dualfreq/adam.hpp"
#include "dualfreq/autodiff.hpp"
#include "dualfreq/gradcheck.hpp"
#include "dualfreq/kernels.hpp"
#include "helpers.hpp"

using namespace dualfreq;
using testutil::random;
namespace k = dualfreq::kernels;

TEST_SUITE_BEGIN("tensor-core");

TEST_CASE("matmul examples") {
  Tensor<double> a({2, 2}, {1, 2, 3, 4});
  Tensor<double> eye({2, 2}, {1, 0, 0, 1});
  CHECK(k::matmul(a, eye) == a);
  Tensor<double> row({1, 2}, {1, 2}), col({2, 1}, {3, 4});
  CHECK(k::matmul(row, col)[0] == 11.0);
  std::mt19937_64 rng(1);
  const auto x = random<double>({3, 4}, rng);
  CHECK(k::matmul(x, Tensor<double>({4, 5})).array().abs().maxCoeff() == 0.0);
}

TEST_CASE("matmul against a triple loop, batched and transposed") {
  std::mt19937_64 rng(2);
  const Index s = 3, m = 4, kk = 5, n = 2;
  const auto a = random<double>({s, m, kk}, rng);
  const auto b = random<double>({s, n, kk}, rng);
  const auto c = k::matmul(a, b, true);
  for (Index z = 0; z < s; ++z)
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < n; ++j) {
        double acc = 0;
        for (Index q = 0; q < kk; ++q) acc += a(z, i, q) * b(z, j, q);
        CHECK(c(z, i, j) == doctest::Approx(acc).epsilon(1e-12));
      }
}

TEST_CASE("softmax examples and invariants") {
  const auto half = k::softmax(Tensor<double>({2}, {0, 0}), 0);
  CHECK(half[0] == doctest::Approx(0.5));
  CHECK(half[1] == doctest::Approx(0.5));
  const auto q = k::softmax(Tensor<double>({2}, {0, std::log(3.0)}), 0);
  CHECK(q[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(q[1] == doctest::Approx(0.75).epsilon(1e-12));

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random<double>({3, 4, 5}, rng, -5, 5);
    for (Index axis = 0; axis < 3; ++axis) {
      const auto y = k::softmax(x, axis);
      Tensor<double> shifted = x;
      shifted.array() += 7.25;
      CHECK(max_abs_diff(y, k::softmax(shifted, axis)) < 1e-12);
      // each slice along axis sums to one
      for (Index i = 0; i < 3; ++i)
        for (Index j = 0; j < 4; ++j)
          for (Index l = 0; l < 5; ++l) {
            if ((axis == 0 && i) || (axis == 1 && j) || (axis == 2 && l)) continue;
            double total = 0;
            for (Index t = 0; t < x.dim(axis); ++t) {
              total += axis == 0 ? y(t, j, l) : axis == 1 ? y(i, t, l) : y(i, j, t);
            }
            CHECK(std::abs(total - 1.0) < 1e-6);
          }
    }
  }
  // large logits stay finite
  const auto big = k::softmax(Tensor<float>({3}, {1000.f, 0.f, -1000.f}), 0);
  CHECK(big.all_finite());
  CHECK(big[0] == doctest::Approx(1.0));
}

TEST_CASE("gelu uses the erf form") {
  const auto y = k::gelu(Tensor<double>({4}, {0.0, 1.0, 10.0, -10.0}));
  CHECK(y[0] == 0.0);
  // x * Phi(x) with Phi from the complementary error function
  CHECK(y[1] == doctest::Approx(0.5 * std::erfc(-1.0 / std::numbers::sqrt2)).epsilon(1e-12));
  CHECK(y[1] == doctest::Approx(0.841345).epsilon(1e-6));
  CHECK(std::abs(y[2] - 10.0) < 1e-6);
  CHECK(std::abs(y[3]) < 1e-6);
}

TEST_CASE("linear examples") {
  Tensor<double> x({1, 2}, {1, 2});
  CHECK(k::linear(x, Tensor<double>({2, 1}, {1, 1}), Tensor<double>({1}, {0.5}))[0] == 3.5);
  std::mt19937_64 rng(4);
  const auto in = random<double>({3, 4}, rng);
  Tensor<double> eye({4, 4});
  for (Index i = 0; i < 4; ++i) eye(i, i) = 1;
  CHECK(k::linear(in, eye, Tensor<double>({4})) == in);
  const auto bias = random<double>({4}, rng);
  const auto out = k::linear(Tensor<double>({3, 4}), eye, bias);
  for (Index r = 0; r < 3; ++r)
    for (Index c = 0; c < 4; ++c) CHECK(out(r, c) == bias[c]);
}

TEST_CASE("layernorm examples") {
  const Tensor<double> ones({2}, {1, 1}), zeros({2});
  const auto flat = k::layernorm(Tensor<double>({1, 2, 2, 2}, {3, 3, 3, 3, 3, 3, 3, 3}), ones, zeros,
                                 k::NormAxes{1, 1}, 1e-5);
  CHECK(flat.array().abs().maxCoeff() == 0.0);
  const auto pair = k::layernorm(Tensor<double>({2}, {1, 3}), ones, zeros, k::NormAxes{0, 0}, 1e-12);
  CHECK(pair[0] == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(pair[1] == doctest::Approx(1.0).epsilon(1e-9));
  std::mt19937_64 rng(5);
  const auto x = random<double>({2, 2, 3, 3}, rng);
  const Tensor<double> beta({2}, {0.25, -1.5});
  const auto y = k::layernorm(x, zeros, beta, k::NormAxes{1, 1}, 1e-5);
  for (Index b = 0; b < 2; ++b)
    for (Index c = 0; c < 2; ++c)
      for (Index i = 0; i < 9; ++i) CHECK(y[(b * 2 + c) * 9 + i] == beta[c]);
}

TEST_CASE("conv1x1 examples") {
  std::mt19937_64 rng(6);
  const auto x = random<double>({2, 3, 4, 5}, rng);
  Tensor<double> eye({3, 3});
  for (Index i = 0; i < 3; ++i) eye(i, i) = 1;
  CHECK(k::conv1x1(x, eye, Tensor<double>({3})) == x);

  const Tensor<double> x2({1, 2, 2, 2}, {1, 2, 3, 4, 10, 20, 30, 40});
  const auto s = k::conv1x1(x2, Tensor<double>({1, 2}, {1, 1}), Tensor<double>({1}));
  CHECK(s == Tensor<double>({1, 1, 2, 2}, {11, 22, 33, 44}));

  const Tensor<double> bias({2}, {0.5, -2});
  const auto z = k::conv1x1(Tensor<double>({1, 3, 2, 2}), random<double>({2, 3}, rng), bias);
  for (Index c = 0; c < 2; ++c)
    for (Index i = 0; i < 4; ++i) CHECK(z[c * 4 + i] == bias[c]);
}

TEST_CASE("depthwise_conv3x3 examples") {
  std::mt19937_64 rng(7);
  const auto x = random<double>({2, 2, 5, 4}, rng);
  Tensor<double> delta({2, 3, 3});
  delta(0, 1, 1) = delta(1, 1, 1) = 1;
  CHECK(k::depthwise_conv3x3(x, delta, Tensor<double>({2})) == x);

  const double c = 1.75;
  const auto img = Tensor<double>::constant({1, 1, 5, 5}, c);
  const auto y = k::depthwise_conv3x3(img, Tensor<double>::constant({1, 3, 3}, 1.0), Tensor<double>({1}));
  CHECK(y(0, 0, 2, 2) == doctest::Approx(9 * c));
  CHECK(y(0, 0, 0, 0) == doctest::Approx(4 * c));
  CHECK(y(0, 0, 4, 4) == doctest::Approx(4 * c));
  CHECK(y(0, 0, 0, 2) == doctest::Approx(6 * c));
}

// Direct zero-padded convolution.
Tensor<double> naive_conv3x3(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b, Index stride) {
  const Index B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3), Co = w.dim(0);
  const Index Ho = (H - 1) / stride + 1, Wo = (W - 1) / stride + 1;
  Tensor<double> y({B, Co, Ho, Wo});
  for (Index n = 0; n < B; ++n)
    for (Index o = 0; o < Co; ++o)
      for (Index i = 0; i < Ho; ++i)
        for (Index j = 0; j < Wo; ++j) {
          double acc = b[o];
          for (Index c = 0; c < Ci; ++c)
            for (Index ky = 0; ky < 3; ++ky)
              for (Index kx = 0; kx < 3; ++kx) {
                const Index yy = i * stride + ky - 1, xx = j * stride + kx - 1;
                if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                acc += w(o, c, ky, kx) * x(n, c, yy, xx);
              }
          y(n, o, i, j) = acc;
        }
  return y;
}

TEST_CASE("conv3x3 matches direct convolution for strides 1 and 2") {
  std::mt19937_64 rng(8);
  for (Index stride : {Index{1}, Index{2}}) {
    for (const Shape& s : {Shape{1, 1, 1, 1}, Shape{2, 3, 5, 4}, Shape{1, 2, 8, 8}, Shape{2, 1, 2, 7}}) {
      const auto x = random<double>(s, rng);
      const auto w = random<double>({3, s[1], 3, 3}, rng);
      const auto b = random<double>({3}, rng);
      CHECK(max_abs_diff(k::conv3x3(x, w, b, stride), naive_conv3x3(x, w, b, stride)) < 1e-12);
    }
  }
}

TEST_CASE("backward: x*x at 3 has gradient 6") {
  Tape<double> tape;
  const auto x = tape.leaf(Tensor<double>({1}, {3.0}));
  tape.backward(mul(x, x));
  CHECK(tape.grad(x)[0] == 6.0);
}

TEST_CASE("backward: sum(A B) gives dA = 1 B^T, checked by finite differences") {
  std::mt19937_64 rng(9);
  const auto a = random<double>({3, 4}, rng), b = random<double>({4, 2}, rng);
  Tape<double> tape;
  const auto va = tape.leaf(a);
  tape.backward(sum(matmul(va, tape.constant(b))));
  const auto da = tape.grad(va);
  const double h = 1e-5;
  for (Index i = 0; i < a.size(); ++i) {
    auto up = a, down = a;
    up[i] += h;
    down[i] -= h;
    const double fd = (k::matmul(up, b).array().sum() - k::matmul(down, b).array().sum()) / (2 * h);
    CHECK(da[i] == doctest::Approx(fd).epsilon(1e-8));
    // and the closed form: row sums of B
    CHECK(da[i] == doctest::Approx(b.matrix(4, 2).row(i % 4).sum()).epsilon(1e-12));
  }
}

TEST_CASE("backward: softmax then BCE matches finite differences on random 8-vectors") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 25; ++trial) {
    const auto x = random<double>({8}, rng, -2, 2);
    Tensor<double> y({8});
    for (Index i = 0; i < 8; ++i) y[i] = static_cast<double>(rng() & 1);
    auto loss_at = [&y](const Tensor<double>& v) {
      const auto p = k::softmax(v, 0);
      double l = 0;
      for (Index i = 0; i < 8; ++i) l -= y[i] * std::log(p[i]) + (1 - y[i]) * std::log(1 - p[i]);
      return l / 8;
    };
    Tape<double> tape;
    const auto vx = tape.leaf(x);
    const auto loss = bce_loss(softmax(vx, 0), y);
    CHECK(loss.value()[0] == doctest::Approx(loss_at(x)).epsilon(1e-12));
    tape.backward(loss);
    const auto g = tape.grad(vx);
    std::vector<double> a, n;
    for (Index i = 0; i < 8; ++i) {
      auto up = x, down = x;
      up[i] += 1e-5;
      down[i] -= 1e-5;
      a.push_back(g[i]);
      n.push_back((loss_at(up) - loss_at(down)) / 2e-5);
    }
    CHECK(relative_error(a, n) < 1e-4);
  }
}

TEST_CASE("backward rejects a non-scalar loss") {
  Tape<double> tape;
  const auto x = tape.leaf(Tensor<double>({2}, {1, 2}));
  CHECK_THROWS_AS(tape.backward(x), ContractError);
}

TEST_CASE("bce_loss examples") {
  Tape<double> tape;
  auto loss = [&tape](std::initializer_list<double> p, std::initializer_list<double> y) {
    return bce_loss(tape.constant(Tensor<double>({static_cast<Index>(p.size())}, p)),
                    Tensor<double>({static_cast<Index>(y.size())}, y))
        .value()[0];
  };
  CHECK(loss({0.5}, {1}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(loss({0.0}, {1}) == doctest::Approx(-std::log(1e-7)).epsilon(1e-9));
  CHECK(loss({0.0}, {1}) == doctest::Approx(16.118).epsilon(1e-4));
  double prev = 1e9;
  for (double p : {0.9, 0.99, 0.999, 0.99999, 1.0}) {
    const double l = loss({p, 1 - p}, {1, 0});
    CHECK(l < prev);
    prev = l;
  }
  CHECK(prev < 1e-6);
}

ParameterSet<double> one_param(Tensor<double> t) {
  ParameterSet<double> p;
  p.add("w", std::move(t));
  return p;
}

TEST_CASE("adam: zero gradients never move parameters") {
  std::mt19937_64 rng(11);
  auto params = one_param(random<double>({5}, rng));
  const auto before = params;
  auto state = adam_init(params);
  for (int t = 0; t < 50; ++t) adam_step(params, params.zeros_like(), state, 1e-2);
  CHECK(bitwise_equal(params, before));
  CHECK(state.t == 50);
}

TEST_CASE("adam: first step moves by lr times sign of the gradient") {
  auto params = one_param(Tensor<double>({3}, {1.0, -2.0, 0.5}));
  auto grads = one_param(Tensor<double>({3}, {0.3, -4.0, 1e-3}));
  auto state = adam_init(params);
  const double lr = 2e-4;
  adam_step(params, grads, state, lr);
  CHECK(params["w"][0] == doctest::Approx(1.0 - lr).epsilon(1e-6));
  CHECK(params["w"][1] == doctest::Approx(-2.0 + lr).epsilon(1e-6));
  CHECK(params["w"][2] == doctest::Approx(0.5 - lr).epsilon(1e-4));
}

TEST_CASE("adam: matches an independent scalar implementation over several steps") {
  std::mt19937_64 rng(12);
  auto params = one_param(random<double>({6}, rng));
  auto state = adam_init(params);
  std::vector<double> w(params["w"].data(), params["w"].data() + 6), m(6, 0.0), v(6, 0.0);
  const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double prev_step = 0;
  for (int t = 1; t <= 5; ++t) {
    // identical gradients on every step for the first entry
    auto g = random<double>({6}, rng);
    g[0] = 0.7;
    for (std::size_t i = 0; i < 6; ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[static_cast<Index>(i)];
      v[i] = b2 * v[i] + (1 - b2) * g[static_cast<Index>(i)] * g[static_cast<Index>(i)];
      const double mh = m[i] / (1 - std::pow(b1, t)), vh = v[i] / (1 - std::pow(b2, t));
      w[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
    const double before = params["w"][0];
    adam_step(params, one_param(g), state, lr);
    for (Index i = 0; i < 6; ++i) CHECK(params["w"][i] == doctest::Approx(w[static_cast<std::size_t>(i)]).epsilon(1e-12));
    const double step = before - params["w"][0];
    // bias correction makes the second identical-gradient step equal to the first, up to eps
    if (t == 2) CHECK(step <= prev_step * (1 + 1e-12));
    prev_step = step;
  }
}

TEST_CASE("adam rejects mismatched shapes") {
  auto params = one_param(Tensor<double>({3}));
  auto state = adam_init(params);
  CHECK_THROWS(adam_step(params, one_param(Tensor<double>({4})), state, 1e-3));
}

TEST_CASE("finite-difference suite: every kernel over 100 seeds") {
  const auto rows = kernel_gradcheck(2024, 100);
  CHECK(rows.size() >= 40);
  for (const auto& r : rows) {
    INFO(r.kernel << " max relative error " << r.max_rel_error);
    CHECK(r.trials == 100);
    CHECK(r.pass());
  }
}

TEST_CASE("ops stay finite on extreme but representable inputs") {
  Tape<float> tape;
  const auto x = tape.constant(Tensor<float>({6}, {-80.f, -20.f, 0.f, 20.f, 80.f, 1e-30f}));
  CHECK(sigmoid(x).value().all_finite());
  CHECK(gelu(x).value().all_finite());
  CHECK(softmax(x, 0).value().all_finite());
  CHECK(log1p(abs(x)).value().all_finite());
}

TEST_SUITE_END();
