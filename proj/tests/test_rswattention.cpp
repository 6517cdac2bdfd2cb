#include <doctest.h>

#include "dualfreq/binding.hpp"
#include "dualfreq/kernels.hpp"
#include "dualfreq/rswattention.hpp"
#include "dualfreq/windows.hpp"
#include "helpers.hpp"

using namespace dualfreq;
using testutil::random;
namespace k = dualfreq::kernels;

TEST_SUITE_BEGIN("rswattention");

namespace {

ParameterSet<double> rsw_params(const RswConfig& cfg, std::uint64_t seed, bool random_biases = true) {
  std::mt19937_64 rng(seed);
  ParameterSet<double> p;
  init_rsw(p, "r.", cfg, rng);
  if (random_biases) {
    for (const char* b : {"r.pre_b", "r.dw_b", "r.gmlp_b", "r.out_b"}) p[b] = random<double>(p[b].shape(), rng);
  }
  return p;
}

Tensor<double> eye(Index n) {
  Tensor<double> t({n, n});
  for (Index i = 0; i < n; ++i) t(i, i) = 1;
  return t;
}

template <typename F>
Tensor<double> run(const ParameterSet<double>& p, const Tensor<double>& x, F f) {
  Tape<double> tape;
  BoundParameters<double> bound(tape, p, false);
  return f(tape.constant(x), bound).value();
}

// softmax over rows of q k^T, times v; all [C, N]
Tensor<double> naive_attention(const Tensor<double>& q, const Tensor<double>& kk, const Tensor<double>& v) {
  const Index C = q.dim(0), N = q.dim(1);
  Tensor<double> out({C, N});
  for (Index i = 0; i < C; ++i) {
    std::vector<double> a(static_cast<std::size_t>(C));
    double mx = -1e300, z = 0;
    for (Index j = 0; j < C; ++j) {
      double d = 0;
      for (Index n = 0; n < N; ++n) d += q(i, n) * kk(j, n);
      a[static_cast<std::size_t>(j)] = d;
      mx = std::max(mx, d);
    }
    for (auto& e : a) z += (e = std::exp(e - mx));
    for (Index n = 0; n < N; ++n) {
      double acc = 0;
      for (Index j = 0; j < C; ++j) acc += a[static_cast<std::size_t>(j)] / z * v(j, n);
      out(i, n) = acc;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("preprocess: identity weights pass the input through") {
  RswConfig cfg{3, 3, 4};
  auto p = rsw_params(cfg, 1, false);
  p["r.pre_w"] = eye(3);
  p["r.dw_w"] = Tensor<double>({3, 3, 3});
  for (Index c = 0; c < 3; ++c) p["r.dw_w"](c, 1, 1) = 1;
  std::mt19937_64 rng(2);
  const auto x = random<double>({2, 3, 8, 8}, rng);
  const auto y = run(p, x, [](auto v, auto& b) { return rsw_preprocess(v, b, "r."); });
  CHECK(y == x);
}

TEST_CASE("preprocess: zero input yields bias planes") {
  RswConfig cfg{3, 5, 4};
  auto p = rsw_params(cfg, 3);
  p["r.pre_b"] = Tensor<double>({5});
  const auto y = run(p, Tensor<double>({1, 3, 8, 8}), [](auto v, auto& b) { return rsw_preprocess(v, b, "r."); });
  for (Index c = 0; c < 5; ++c)
    for (Index i = 0; i < 64; ++i) CHECK(y[c * 64 + i] == p["r.dw_b"][c]);
  // with a pre bias the interior is still constant (padding only touches the rim)
  auto q = rsw_params(cfg, 4);
  const auto z = run(q, Tensor<double>({1, 3, 8, 8}), [](auto v, auto& b) { return rsw_preprocess(v, b, "r."); });
  for (Index c = 0; c < 5; ++c)
    for (Index y0 = 1; y0 < 7; ++y0)
      for (Index x0 = 1; x0 < 7; ++x0) CHECK(z(0, c, y0, x0) == doctest::Approx(z(0, c, 3, 3)).epsilon(1e-12));
}

TEST_CASE("preprocess matches the two kernels composed") {
  RswConfig cfg{3, 6, 4};
  const auto p = rsw_params(cfg, 5);
  std::mt19937_64 rng(6);
  const auto x = random<double>({2, 3, 8, 8}, rng);
  const auto y = run(p, x, [](auto v, auto& b) { return rsw_preprocess(v, b, "r."); });
  const auto ref = k::depthwise_conv3x3(k::conv1x1(x, p["r.pre_w"], p["r.pre_b"]), p["r.dw_w"], p["r.dw_b"]);
  CHECK(max_abs_diff(y, ref) < 1e-12);
}

TEST_CASE("lo_attention examples") {
  std::mt19937_64 rng(7);
  Tape<double> tape;
  const auto v = random<double>({3, 5}, rng);
  const auto zero = tape.constant(Tensor<double>({3, 5}));
  const auto uniform = lo_attention(zero, zero, tape.constant(v)).value();
  for (Index c = 0; c < 3; ++c)
    for (Index n = 0; n < 5; ++n) CHECK(uniform(c, n) == doctest::Approx((v(0, n) + v(1, n) + v(2, n)) / 3).epsilon(1e-12));

  const auto v1 = random<double>({1, 4}, rng);
  const auto single = lo_attention(tape.constant(random<double>({1, 4}, rng)), tape.constant(random<double>({1, 4}, rng)),
                                    tape.constant(v1));
  CHECK(max_abs_diff(single.value(), v1) < 1e-15);

  for (int t = 0; t < 20; ++t) {
    const auto q = random<double>({3, 4}, rng, -2, 2), kk = random<double>({3, 4}, rng, -2, 2), vv = random<double>({3, 4}, rng);
    const auto out = lo_attention(tape.constant(q), tape.constant(kk), tape.constant(vv)).value();
    CHECK(max_abs_diff(out, naive_attention(q, kk, vv)) < 1e-12);
  }
}

TEST_CASE("lo_attention agrees with the loop oracle on all small shapes, batched") {
  std::mt19937_64 rng(8);
  Tape<double> tape;
  for (Index C = 1; C <= 4; ++C)
    for (Index N = 1; N <= 9; ++N) {
      const Index S = 3;
      const auto q = random<double>({S, C, N}, rng, -2, 2), kk = random<double>({S, C, N}, rng, -2, 2),
                 v = random<double>({S, C, N}, rng);
      const auto out = lo_attention(tape.constant(q), tape.constant(kk), tape.constant(v)).value();
      for (Index s = 0; s < S; ++s) {
        auto slice = [&](const Tensor<double>& t) {
          Tensor<double> o({C, N});
          o.array() = t.array().segment(s * C * N, C * N);
          return o;
        };
        Tensor<double> got({C, N});
        got.array() = out.array().segment(s * C * N, C * N);
        CHECK(max_abs_diff(got, naive_attention(slice(q), slice(kk), slice(v))) < 1e-12);
      }
    }
}

TEST_CASE("gmlp examples") {
  std::mt19937_64 rng(9);
  Tape<double> tape;
  const auto w = tape.constant(eye(4)), b = tape.constant(Tensor<double>({4}));
  CHECK(gmlp(tape.constant(Tensor<double>({2, 4})), w, b).value().array().abs().maxCoeff() == 0.0);
  const auto v = random<double>({2, 3, 4}, rng);
  CHECK(max_abs_diff(gmlp(tape.constant(v), w, b).value(), k::gelu(v)) < 1e-15);
  const auto wr = random<double>({4, 4}, rng), br = random<double>({4}, rng);
  CHECK(max_abs_diff(gmlp(tape.constant(v), tape.constant(wr), tape.constant(br)).value(), k::gelu(k::linear(v, wr, br))) < 1e-12);
}

TEST_CASE("forward on a single window equals the manual composition") {
  RswConfig cfg{3, 5, 4};
  const auto p = rsw_params(cfg, 10);
  std::mt19937_64 rng(11);
  const auto x = random<double>({1, 3, 4, 4}, rng);
  const auto y = run(p, x, [&cfg](auto v, auto& b) { return rsw_forward(v, b, "r.", cfg); });

  const auto xin = k::depthwise_conv3x3(k::conv1x1(x, p["r.pre_w"], p["r.pre_b"]), p["r.dw_w"], p["r.dw_b"]);
  const Tensor<double> nb({5});
  // one window: [1, C, 4, 4] is already [C, 16] in row-major order
  const auto q = k::conv1x1(xin, p["r.wq"], nb).reshaped({5, 16});
  const auto kk = k::conv1x1(xin, p["r.wk"], nb).reshaped({5, 16});
  const auto v = k::conv1x1(xin, p["r.wv"], nb).reshaped({5, 16});
  const auto a = naive_attention(q, kk, v);
  const auto g = k::gelu(k::linear(v, p["r.gmlp_w"], p["r.gmlp_b"]));
  Tensor<double> merged({1, 5, 4, 4});
  merged.array() = a.array() * g.array();
  const auto ref = k::conv1x1(merged, p["r.out_w"], p["r.out_b"]);
  CHECK(max_abs_diff(y, ref) < 1e-12);
}

TEST_CASE("locality: a pixel perturbation stays inside its window before the output conv") {
  RswConfig cfg{3, 4, 4};
  const auto p = rsw_params(cfg, 12);
  std::mt19937_64 rng(13);
  for (int t = 0; t < 20; ++t) {
    const auto x = random<double>({1, 3, 16, 16}, rng);
    // interior of a window: 1 or 2 inside a 4-wide cell keeps the 3x3 footprint in the window
    const Index wy = static_cast<Index>(rng() % 4), wx = static_cast<Index>(rng() % 4);
    const Index py = wy * 4 + 1 + static_cast<Index>(rng() % 2), px = wx * 4 + 1 + static_cast<Index>(rng() % 2);
    auto x2 = x;
    x2(0, static_cast<Index>(rng() % 3), py, px) += 0.5;
    auto f = [&cfg](auto v, auto& b) { return rsw_features(v, b, "r.", cfg); };
    const auto a = run(p, x, f), b = run(p, x2, f);
    bool outside_same = true, inside_changed = false;
    for (Index c = 0; c < 4; ++c)
      for (Index y = 0; y < 16; ++y)
        for (Index z = 0; z < 16; ++z) {
          const bool inside = y / 4 == wy && z / 4 == wx;
          const bool same = a(0, c, y, z) == b(0, c, y, z);
          if (inside) inside_changed = inside_changed || !same;
          else outside_same = outside_same && same;
        }
    CHECK(outside_same);
    CHECK(inside_changed);
  }
}

TEST_CASE("zero weights leave only the output bias") {
  RswConfig cfg{3, 4, 4};
  auto p = rsw_params(cfg, 14);
  for (auto& e : p) {
    if (e.name != "r.out_b") e.value.array().setZero();
  }
  std::mt19937_64 rng(15);
  const auto y = run(p, random<double>({2, 3, 8, 8}, rng), [&cfg](auto v, auto& b) { return rsw_forward(v, b, "r.", cfg); });
  for (Index n = 0; n < 2; ++n)
    for (Index c = 0; c < 3; ++c)
      for (Index i = 0; i < 64; ++i) CHECK(y[(n * 3 + c) * 64 + i] == p["r.out_b"][c]);
}

TEST_CASE("output shape equals input shape across configurations") {
  std::mt19937_64 rng(16);
  for (Index c_in : {1, 3, 6})
    for (Index c_int : {1, 4, 16})
      for (Index b : {2, 4, 8}) {
        RswConfig cfg{c_in, c_int, b};
        const auto p = rsw_params(cfg, 17);
        const Shape s{2, c_in, 2 * b, b};
        CHECK(run(p, random<double>(s, rng), [&cfg](auto v, auto& bb) { return rsw_forward(v, bb, "r.", cfg); }).shape() == s);
      }
  RswConfig cfg{3, 4, 4};
  const auto p = rsw_params(cfg, 18);
  CHECK_THROWS_AS(run(p, Tensor<double>({1, 3, 6, 8}), [&cfg](auto v, auto& bb) { return rsw_forward(v, bb, "r.", cfg); }),
                  DimensionError);
}

TEST_SUITE_END();
