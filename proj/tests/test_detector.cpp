#include <doctest.h>

#include "dualfreq/binding.hpp"
#include "dualfreq/detector.hpp"
#include "dualfreq/frequency.hpp"
#include "dualfreq/gradcheck.hpp"
#include "dualfreq/kernels.hpp"
#include "dualfreq/rswattention.hpp"
#include "dualfreq/windows.hpp"
#include "helpers.hpp"

using namespace dualfreq;
using testutil::random;

TEST_SUITE_BEGIN("detector-model");

namespace {

DetectorConfig small_config(Index size = 32) {
  DetectorConfig cfg;
  cfg.input_size = size;
  cfg.classifier_widths = {8, 16};
  cfg.blocks_per_stage = 1;
  return cfg;
}

template <typename S, typename F>
Tensor<S> run(const ParameterSet<S>& p, const Tensor<S>& x, F f) {
  Tape<S> tape;
  BoundParameters<S> bound(tape, p, false);
  return f(tape.constant(x), bound).value();
}

// Randomize every tensor so zero-initialised biases and unit gammas do not hide bugs.
ParameterSet<double> perturbed(const DetectorConfig& cfg, std::uint64_t seed) {
  auto p = init_detector<double>(cfg);
  std::mt19937_64 rng(seed);
  for (auto& e : p) e.value.array() += random<double>(e.value.shape(), rng, -0.1, 0.1).array();
  return p;
}

}  // namespace

TEST_CASE("pass-through configuration reduces each branch to its transform round trip") {
  auto cfg = small_config();
  cfg.bypass_attention = true;
  const auto p = init_detector<double>(cfg);
  std::mt19937_64 rng(1);
  const auto x = random<double>({2, 3, 32, 32}, rng, 0, 1);
  CHECK(max_abs_diff(run(p, x, [&](auto v, auto& b) { return dwt_branch(v, b, cfg); }), x) < 1e-5);
  CHECK(max_abs_diff(run(p, x, [&](auto v, auto& b) { return fft_branch(v, b, cfg); }), x) < 1e-5);
}

TEST_CASE("branch outputs keep the input shape") {
  const auto cfg = small_config();
  const auto p = init_detector<float>(cfg);
  std::mt19937_64 rng(2);
  const auto x = random<float>({2, 3, 32, 32}, rng, 0, 1);
  CHECK(run(p, x, [&](auto v, auto& b) { return dwt_branch(v, b, cfg); }).shape() == x.shape());
  CHECK(run(p, x, [&](auto v, auto& b) { return fft_branch(v, b, cfg); }).shape() == x.shape());
}

TEST_CASE("dwt branch equals its stages composed by hand") {
  const auto cfg = small_config();
  const auto p = perturbed(cfg, 3);
  std::mt19937_64 rng(4);
  const auto x = random<double>({2, 3, 32, 32}, rng, 0, 1);
  const auto got = run(p, x, [&](auto v, auto& b) { return dwt_branch(v, b, cfg); });

  auto tiled = dwt_window_tile(dwt_haar2(x).stacked());
  const auto normed = kernels::layernorm(tiled.data, p["dwt.ln_gamma"], p["dwt.ln_beta"], kernels::NormAxes{3, 1}, 1e-5);
  const RswConfig rc{3, cfg.c_int, cfg.dwt_window};
  tiled.data = run(p, normed, [&](auto v, auto& b) { return rsw_forward(v, b, "dwt.rsw.", rc); });
  const auto ref = idwt_haar2(SubbandSet<double>::from_stacked(dwt_window_untile(tiled)));
  CHECK(max_abs_diff(got, ref) < 1e-12);
}

TEST_CASE("fft branch equals its stages composed by hand") {
  const auto cfg = small_config();
  const auto p = perturbed(cfg, 5);
  std::mt19937_64 rng(6);
  const auto x = random<double>({1, 3, 32, 32}, rng, 0, 1);
  const auto got = run(p, x, [&](auto v, auto& b) { return fft_branch(v, b, cfg); });

  const auto polar = polar_decompose(fft2(x));
  const RswConfig rc{3, cfg.c_int, cfg.fft_window};
  const auto phase = run(p, polar.phase, [&](auto v, auto& b) { return rsw_forward(v, b, "fft.rsw.", rc); });
  const auto ref = ifft2(polar_recombine(polar.amplitude, phase)).real;
  CHECK(max_abs_diff(got, ref) < 1e-12);
}

TEST_CASE("fft branch recombines with the input's own amplitude") {
  const auto cfg = small_config();
  const auto p = perturbed(cfg, 7);
  std::mt19937_64 rng(8);
  const auto x = random<double>({1, 3, 32, 32}, rng, 0, 1);
  Tape<double> tape;
  BoundParameters<double> bound(tape, p, false);
  // the spectrum handed to the inverse transform
  const auto polar = polar_decompose(fft2(tape.constant(x)));
  const Shape img = x.shape();
  const auto amp = tape.constant(slice(polar, 0, 0, 1).value().reshaped(img));
  const auto phase = rsw_forward(reshape(slice(polar, 0, 1, 1), img), bound, "fft.rsw.", RswConfig{3, cfg.c_int, cfg.fft_window});
  const auto spectrum = polar_recombine(amp, phase).value();
  const Index n = x.size();
  const auto ref = polar_decompose(fft2(x)).amplitude;
  double worst = 0;
  for (Index i = 0; i < n; ++i) {
    const double a = std::hypot(spectrum[i], spectrum[n + i]);
    worst = std::max(worst, std::abs(a - ref[i]) / std::max(1.0, ref[i]));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("fuse endpoints and the default weight") {
  std::mt19937_64 rng(9);
  const auto d = random<float>({1, 3, 4, 4}, rng), f = random<float>({1, 3, 4, 4}, rng);
  CHECK(fuse(d, f, 0.0) == d);
  CHECK(fuse(d, f, 1.0) == f);
  const auto mix = fuse(Tensor<float>::constant({1, 3, 4, 4}, 1.f), Tensor<float>({1, 3, 4, 4}), 0.4);
  CHECK((mix.array() - 0.6f).abs().maxCoeff() < 1e-7f);
  CHECK_THROWS_AS(fuse(d, f, 1.5), ContractError);
  CHECK_THROWS_AS(fuse(d, f, -0.1), ContractError);
  CHECK(DetectorConfig{}.lambda == 0.4);
}

TEST_CASE("classifier with zero weights outputs 0.5") {
  const auto cfg = small_config();
  auto p = init_detector<float>(cfg);
  for (auto& e : p) {
    if (has_prefix(e.name, kClassifierPrefix)) e.value.array().setZero();
  }
  std::mt19937_64 rng(10);
  const auto x = random<float>({4, 3, 32, 32}, rng, 0, 1);
  const auto prob = run(p, x, [&](auto v, auto& b) { return detector_probabilities(v, b, cfg); });
  CHECK(prob.shape() == Shape{4});
  for (Index i = 0; i < 4; ++i) CHECK(prob[i] == 0.5f);
}

TEST_CASE("probabilities lie in (0, 1) for 1000 random inputs") {
  const auto cfg = small_config(16);
  const auto p = init_detector<float>(cfg);
  std::mt19937_64 rng(11);
  for (int chunk = 0; chunk < 10; ++chunk) {
    const auto x = random<float>({100, 3, 16, 16}, rng, 0, 1);
    const auto prob = run(p, x, [&](auto v, auto& b) { return detector_probabilities(v, b, cfg); });
    CHECK(prob.shape() == Shape{100});
    CHECK(prob.array().minCoeff() > 0.f);
    CHECK(prob.array().maxCoeff() < 1.f);
  }
}

TEST_CASE("classifier parameter gradients match finite differences") {
  const auto cfg = small_config(16);
  auto p = perturbed(cfg, 12);
  std::mt19937_64 rng(13);
  const auto feats = random<double>({2, 3, 16, 16}, rng);
  const Tensor<double> y({2}, {1, 0});
  auto loss = [&](const ParameterSet<double>& params, ParameterSet<double>* grads) {
    Tape<double> tape;
    BoundParameters<double> bound(tape, params, grads != nullptr);
    const auto l = bce_loss(sigmoid(classifier_logits(tape.constant(feats), bound, cfg)), y);
    if (grads) {
      tape.backward(l);
      *grads = bound.gradients();
    }
    return l.value()[0];
  };
  ParameterSet<double> g;
  loss(p, &g);
  std::vector<double> a, n;
  for (auto& e : p) {
    if (!has_prefix(e.name, kClassifierPrefix)) continue;
    for (Index i = 0; i < e.value.size(); i += 1 + e.value.size() / 6) {
      const double keep = e.value[i];
      e.value[i] = keep + 1e-5;
      const double up = loss(p, nullptr);
      e.value[i] = keep - 1e-5;
      const double down = loss(p, nullptr);
      e.value[i] = keep;
      a.push_back(g[e.name][i]);
      n.push_back((up - down) / 2e-5);
    }
  }
  CHECK(a.size() > 30);
  CHECK(relative_error(a, n) < 1e-4);
}

TEST_CASE("lambda endpoints give the unused branch exactly zero gradient") {
  std::mt19937_64 rng(14);
  const auto x = random<float>({2, 3, 32, 32}, rng, 0, 1);
  const Tensor<float> y({2}, {1, 0});
  for (double lambda : {0.0, 1.0}) {
    auto cfg = small_config();
    cfg.lambda = lambda;
    const auto p = init_detector<float>(cfg);
    Tape<float> tape;
    BoundParameters<float> bound(tape, p);
    tape.backward(bce_loss(detector_probabilities(tape.constant(x), bound, cfg), y));
    const auto g = bound.gradients();
    const char* unused = lambda == 1.0 ? kDwtPrefix : kFftPrefix;
    const char* used = lambda == 1.0 ? kFftPrefix : kDwtPrefix;
    double unused_max = 0, used_max = 0;
    for (const auto& e : g) {
      const double m = e.value.array().abs().maxCoeff();
      if (has_prefix(e.name, unused)) unused_max = std::max(unused_max, m);
      if (has_prefix(e.name, used)) used_max = std::max(used_max, m);
    }
    CHECK(unused_max == 0.0);
    CHECK(used_max > 0.0);
  }
}

TEST_CASE("forward is deterministic bitwise") {
  const auto cfg = small_config();
  const auto p = init_detector<float>(cfg);
  CHECK(bitwise_equal(p, init_detector<float>(cfg)));
  std::mt19937_64 rng(15);
  const auto x = random<float>({3, 3, 32, 32}, rng, 0, 1);
  CHECK(bitwise_equal(predict_logits(p, cfg, x), predict_logits(p, cfg, x)));
}

TEST_CASE("end-to-end parameter gradients on a 1x3x16x16 input") {
  const auto row = detector_gradcheck(3, gradcheck_detector_config(), 300);
  INFO("relative error " << row.max_rel_error);
  CHECK(row.pass());
}

TEST_CASE("phase_amplitude variant runs and keeps shapes") {
  auto cfg = small_config();
  cfg.fft_part = FftPart::phase_amplitude;
  const auto p = init_detector<float>(cfg);
  CHECK(p["fft.rsw.pre_w"].shape() == Shape{cfg.c_int, 6});
  std::mt19937_64 rng(16);
  const auto x = random<float>({2, 3, 32, 32}, rng, 0, 1);
  const auto out = run(p, x, [&](auto v, auto& b) { return fft_branch(v, b, cfg); });
  CHECK(out.shape() == x.shape());
  CHECK(out.all_finite());
}

TEST_CASE("masked subbands are zero before attention; all-kept mask is the identity") {
  std::mt19937_64 rng(17);
  const auto x = random<double>({1, 3, 16, 16}, rng);
  Tape<double> tape;
  const auto ihat = dwt_haar2(tape.constant(x));
  const auto kept = mask_subbands(ihat, kAllSubbands);
  CHECK(bitwise_equal(kept.value(), ihat.value()));
  const auto only_hh = mask_subbands(ihat, parse_subbands("HH")).value();
  const Index per = 3 * 8 * 8;
  for (Index s = 0; s < 4; ++s)
    for (Index i = 0; i < per; ++i) CHECK(only_hh[s * per + i] == (s == 3 ? ihat.value()[s * per + i] : 0.0));
}

TEST_CASE("config validation, subband parsing and JSON round trip") {
  CHECK(parse_subbands("all") == kAllSubbands);
  CHECK(parse_subbands("HL,HH") == SubbandMask{false, false, true, true});
  CHECK(format_subbands(parse_subbands("LH,HL,HH")) == "LH,HL,HH");
  CHECK_THROWS_AS(parse_subbands("XX"), ConfigError);
  CHECK_THROWS_AS(parse_subbands(""), ConfigError);

  auto cfg = small_config();
  cfg.lambda = 0.8;
  cfg.subbands = parse_subbands("LL,HH");
  cfg.window_tiling = false;
  cfg.fft_part = FftPart::phase_amplitude;
  const auto back = DetectorConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  CHECK(back.subbands == cfg.subbands);
  CHECK_THROWS_AS(DetectorConfig::from_json("{not json"), ConfigError);

  auto bad = small_config();
  bad.input_size = 24;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.input_size = 8;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = small_config();
  bad.lambda = 1.2;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  const auto p = init_detector<float>(small_config());
  CHECK_THROWS(predict_logits(p, small_config(), Tensor<float>({1, 3, 24, 32})));
}

TEST_SUITE_END();
