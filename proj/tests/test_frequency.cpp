#include <doctest.h>

#include <complex>
#include <numbers>

#include "dualfreq/frequency.hpp"
#include "helpers.hpp"

using namespace dualfreq;
using testutil::random;
using cd = std::complex<double>;

TEST_SUITE_BEGIN("frequency-transforms");

TEST_CASE("haar: constant image puts 2c in LL and nothing elsewhere") {
  const double c = 0.37;
  const auto s = dwt_haar2(Tensor<double>::constant({2, 3, 4, 6}, c));
  CHECK(s.ll.shape() == Shape{2, 3, 2, 3});
  CHECK((s.ll.array() - 2 * c).abs().maxCoeff() < 1e-15);
  CHECK(s.lh.array().abs().maxCoeff() == 0.0);
  CHECK(s.hl.array().abs().maxCoeff() == 0.0);
  CHECK(s.hh.array().abs().maxCoeff() == 0.0);
  const auto back = idwt_haar2(s);
  CHECK(max_abs_diff(back, Tensor<double>::constant({2, 3, 4, 6}, c)) < 1e-15);
}

TEST_CASE("haar: the [[1,2],[3,4]] block and its inverse") {
  const auto s = dwt_haar2(Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 4}));
  CHECK(s.ll[0] == 5.0);
  CHECK(s.hl[0] == -1.0);
  CHECK(s.lh[0] == -2.0);
  CHECK(s.hh[0] == 0.0);
  SubbandSet<double> in{Tensor<double>({1, 1, 1, 1}, {5}), Tensor<double>({1, 1, 1, 1}, {-2}),
                        Tensor<double>({1, 1, 1, 1}, {-1}), Tensor<double>({1, 1, 1, 1}, {0})};
  CHECK(idwt_haar2(in) == Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 4}));
}

TEST_CASE("haar: energy preserved and round trip exact to 1e-6") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 50; ++t) {
    const auto x = random<double>({2, 3, 8, 12}, rng);
    const auto s = dwt_haar2(x);
    const double e_in = x.array().square().sum();
    const double e_out = s.ll.array().square().sum() + s.lh.array().square().sum() + s.hl.array().square().sum() +
                         s.hh.array().square().sum();
    CHECK(std::abs(e_in - e_out) / e_in < 1e-6);
    CHECK(max_abs_diff(idwt_haar2(s), x) < 1e-6);
    CHECK(SubbandSet<double>::from_stacked(s.stacked()).hh == s.hh);
  }
}

TEST_CASE("haar rejects odd extents") {
  CHECK_THROWS_AS(dwt_haar2(Tensor<double>({1, 1, 3, 4})), DimensionError);
}

// O(N^2) DFT of one plane.
std::vector<cd> naive_dft(const double* x, Index h, Index w) {
  std::vector<cd> out(static_cast<std::size_t>(h * w));
  for (Index u = 0; u < h; ++u)
    for (Index v = 0; v < w; ++v) {
      cd acc = 0;
      for (Index y = 0; y < h; ++y)
        for (Index z = 0; z < w; ++z) {
          const double ang = -2 * std::numbers::pi * (static_cast<double>(u * y) / h + static_cast<double>(v * z) / w);
          acc += x[y * w + z] * cd(std::cos(ang), std::sin(ang));
        }
      out[static_cast<std::size_t>(u * w + v)] = acc;
    }
  return out;
}

TEST_CASE("fft2 matches the direct DFT on every power-of-two size up to 16") {
  std::mt19937_64 rng(2);
  for (Index h = 1; h <= 16; h *= 2)
    for (Index w = 1; w <= 16; w *= 2) {
      const auto x = random<double>({2, h, w}, rng);
      const auto s = fft2(x);
      for (Index p = 0; p < 2; ++p) {
        const auto ref = naive_dft(x.data() + p * h * w, h, w);
        double err = 0;
        for (Index i = 0; i < h * w; ++i) {
          err = std::max(err, std::abs(cd(s.re[p * h * w + i], s.im[p * h * w + i]) - ref[static_cast<std::size_t>(i)]));
        }
        INFO(h << "x" << w);
        CHECK(err < 1e-6);
      }
    }
}

TEST_CASE("fft2 simple spectra") {
  const auto dc = fft2(Tensor<double>::constant({1, 1, 2, 2}, 1.5));
  CHECK(dc.re[0] == doctest::Approx(6.0));
  for (Index i = 1; i < 4; ++i) CHECK(std::abs(dc.re[i]) + std::abs(dc.im[i]) < 1e-15);
  Tensor<double> impulse({1, 1, 4, 4});
  impulse[0] = 1;
  const auto flat = fft2(impulse);
  for (Index i = 0; i < 16; ++i) {
    CHECK(flat.re[i] == doctest::Approx(1.0));
    CHECK(std::abs(flat.im[i]) < 1e-15);
  }
  CHECK_THROWS_AS(fft2(Tensor<double>({1, 1, 6, 4})), UnsupportedSizeError);
}

TEST_CASE("ifft2 inverts fft2 and recovers constants") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const auto x = random<double>({2, 3, 16, 8}, rng);
    const auto inv = ifft2(fft2(x));
    CHECK(max_abs_diff(inv.real, x) < 1e-6);
    CHECK(inv.max_abs_imag < 1e-6);
  }
  ComplexSpectrum<double> dc{Tensor<double>({1, 1, 4, 4}), Tensor<double>({1, 1, 4, 4})};
  dc.re[0] = 16 * 0.625;
  const auto img = ifft2(dc).real;
  CHECK((img.array() - 0.625).abs().maxCoeff() < 1e-15);
}

TEST_CASE("ifft2 of a Hermitian-symmetric spectrum is real") {
  std::mt19937_64 rng(4);
  const Index h = 8, w = 8;
  ComplexSpectrum<double> s{Tensor<double>({1, h, w}), Tensor<double>({1, h, w})};
  std::uniform_real_distribution<double> d(-1, 1);
  for (Index u = 0; u < h; ++u)
    for (Index v = 0; v < w; ++v) {
      const Index cu = (h - u) % h, cv = (w - v) % w;
      const Index i = u * w + v, j = cu * w + cv;
      if (j < i) continue;
      const double re = d(rng), im = (i == j) ? 0.0 : d(rng);
      s.re[i] = re;
      s.im[i] = im;
      s.re[j] = re;
      s.im[j] = -im;
    }
  CHECK(ifft2(s).max_abs_imag < 1e-6);
  // and a non-symmetric one is not
  s.im[1] += 1.0;
  CHECK(ifft2(s).max_abs_imag > 1e-3);
}

TEST_CASE("polar decompose and recombine") {
  ComplexSpectrum<double> s{Tensor<double>({3}, {1, 0, -1}), Tensor<double>({3}, {0, 1, -1})};
  const auto p = polar_decompose(s);
  CHECK(p.amplitude[0] == 1.0);
  CHECK(p.phase[0] == 0.0);
  CHECK(p.amplitude[1] == doctest::Approx(1.0));
  CHECK(p.phase[1] == doctest::Approx(std::numbers::pi / 2));
  CHECK(p.amplitude[2] == doctest::Approx(std::numbers::sqrt2));
  CHECK(p.phase[2] == doctest::Approx(-3 * std::numbers::pi / 4));

  const auto one = polar_recombine(Tensor<double>({1}, {1}), Tensor<double>({1}, {0}));
  CHECK(one.re[0] == 1.0);
  CHECK(one.im[0] == 0.0);

  std::mt19937_64 rng(5);
  ComplexSpectrum<double> r{random<double>({4, 4}, rng), random<double>({4, 4}, rng)};
  const auto back = polar_recombine(polar_decompose(r).amplitude, polar_decompose(r).phase);
  CHECK(max_abs_diff(back.re, r.re) < 1e-6);
  CHECK(max_abs_diff(back.im, r.im) < 1e-6);

  // phases outside [-pi, pi] wrap through cos/sin
  const auto amp = random<double>({5}, rng, 0.1, 2);
  const auto phase = random<double>({5}, rng, -std::numbers::pi, std::numbers::pi);
  Tensor<double> shifted = phase;
  shifted.array() += 4 * std::numbers::pi;
  CHECK(max_abs_diff(polar_recombine(amp, shifted).re, polar_recombine(amp, phase).re) < 1e-12);
  const auto wrapped = polar_recombine(Tensor<double>({1}, {2.0}), Tensor<double>({1}, {3 * std::numbers::pi}));
  const auto at_pi = polar_recombine(Tensor<double>({1}, {2.0}), Tensor<double>({1}, {-std::numbers::pi}));
  CHECK(wrapped.re[0] == doctest::Approx(at_pi.re[0]));
  CHECK(std::abs(wrapped.im[0] - at_pi.im[0]) < 1e-12);

  CHECK_THROWS_AS(polar_recombine(Tensor<double>({1}, {-1}), Tensor<double>({1}, {0})), ContractError);
}

TEST_CASE("phase_swap identities") {
  std::mt19937_64 rng(6);
  const auto a = random<double>({1, 3, 8, 8}, rng, 0, 1);
  const auto b = random<double>({1, 3, 8, 8}, rng, 0, 1);
  const auto [aa, aa2] = phase_swap(a, a);
  CHECK(max_abs_diff(aa, a) < 1e-5);
  CHECK(max_abs_diff(aa2, a) < 1e-5);
  const auto [ab, ba] = phase_swap(a, b);
  // swapping the swapped pair gives back the originals
  const auto [a_again, b_again] = phase_swap(ab, ba);
  CHECK(max_abs_diff(a_again, a) < 1e-5);
  CHECK(max_abs_diff(b_again, b) < 1e-5);
  // amplitude of the first output is a's, phase is b's
  const auto fa = polar_decompose(fft2(a)), fb = polar_decompose(fft2(b)), fab = polar_decompose(fft2(ab));
  CHECK(max_abs_diff(fab.amplitude, fa.amplitude) < 1e-9);
  for (Index i = 0; i < fb.phase.size(); ++i) {
    if (fa.amplitude[i] < 1e-9) continue;
    double d = std::remainder(fab.phase[i] - fb.phase[i], 2 * std::numbers::pi);
    CHECK(std::abs(d) < 1e-7);
  }
}

TEST_CASE("phase_swap of a constant image with a 4x4 pattern") {
  // A constant image has only a DC bin, phase 0 there. The first output keeps
  // that single amplitude with b's DC phase: a constant again. The second output
  // keeps b's amplitudes but takes a's phases, which are 0 where a's amplitude
  // is zero.
  const Tensor<double> a = Tensor<double>::constant({1, 1, 4, 4}, 0.5);
  Tensor<double> b({1, 1, 4, 4});
  for (Index i = 0; i < 16; ++i) b[i] = static_cast<double>((i * 7) % 5) / 4.0;
  const auto [first, second] = phase_swap(a, b);
  CHECK((first.array() - 0.5).abs().maxCoeff() < 1e-12);
  // oracle: inverse DFT of |B| with zero phase
  const auto fb = fft2(b);
  ComplexSpectrum<double> zero_phase{Tensor<double>({1, 1, 4, 4}), Tensor<double>({1, 1, 4, 4})};
  for (Index i = 0; i < 16; ++i) zero_phase.re[i] = std::hypot(fb.re[i], fb.im[i]);
  CHECK(max_abs_diff(second, ifft2(zero_phase).real) < 1e-12);
}

TEST_CASE("transform round trips over 1000 random 3x32x32 images") {
  std::mt19937_64 rng(7);
  double dwt_err = 0, fft_err = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto x = random<double>({1, 3, 32, 32}, rng, 0, 1);
    dwt_err = std::max(dwt_err, max_abs_diff(idwt_haar2(dwt_haar2(x)), x));
    fft_err = std::max(fft_err, max_abs_diff(ifft2(fft2(x)).real, x));
  }
  CHECK(dwt_err < 1e-6);
  CHECK(fft_err < 1e-6);
}

TEST_SUITE_END();
