#include "dualfreq/frequency.hpp"

#include <cmath>
#include <complex>
#include <numbers>

namespace dualfreq {
namespace {

template <typename Scalar>
using Complex = std::complex<Scalar>;

struct PlaneDims {
  Index planes, h, w;
};

PlaneDims plane_dims(const Shape& shape, const char* what) {
  if (shape.size() < 2) throw DimensionError(std::string(what) + ": need at least rank 2");
  PlaneDims d{1, shape[shape.size() - 2], shape[shape.size() - 1]};
  for (std::size_t i = 0; i + 2 < shape.size(); ++i) d.planes *= shape[i];
  if (!is_power_of_two(d.h) || !is_power_of_two(d.w)) {
    throw UnsupportedSizeError(std::string(what) + ": extents must be powers of two, got " +
                               shape_str(shape));
  }
  return d;
}

// Iterative radix-2 transform for one length. Twiddles are evaluated in double.
template <typename Scalar>
class Radix2 {
 public:
  explicit Radix2(Index n) : n_(n), reversed_(static_cast<std::size_t>(n)) {
    int bits = 0;
    while ((Index{1} << bits) < n) ++bits;
    for (Index i = 0; i < n; ++i) {
      Index r = 0;
      for (int b = 0; b < bits; ++b) r |= ((i >> b) & 1) << (bits - 1 - b);
      reversed_[static_cast<std::size_t>(i)] = r;
    }
    twiddles_.resize(static_cast<std::size_t>(n / 2 > 0 ? n / 2 : 1));
    for (Index k = 0; k < n / 2; ++k) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      twiddles_[static_cast<std::size_t>(k)] =
          Complex<Scalar>(static_cast<Scalar>(std::cos(angle)), static_cast<Scalar>(std::sin(angle)));
    }
  }

  void operator()(Complex<Scalar>* data, bool inverse) const {
    for (Index i = 0; i < n_; ++i) {
      const Index r = reversed_[static_cast<std::size_t>(i)];
      if (i < r) std::swap(data[i], data[r]);
    }
    for (Index len = 2; len <= n_; len <<= 1) {
      const Index half = len / 2, step = n_ / len;
      for (Index start = 0; start < n_; start += len) {
        for (Index k = 0; k < half; ++k) {
          const Complex<Scalar> tw = twiddles_[static_cast<std::size_t>(k * step)];
          const Scalar tr = tw.real(), ti = inverse ? -tw.imag() : tw.imag();
          const Complex<Scalar> u = data[start + k], b = data[start + k + half];
          // Written out: std::complex multiply goes through the NaN-aware slow path.
          const Complex<Scalar> v(b.real() * tr - b.imag() * ti, b.real() * ti + b.imag() * tr);
          data[start + k] = u + v;
          data[start + k + half] = u - v;
        }
      }
    }
  }

 private:
  Index n_;
  std::vector<Index> reversed_;
  std::vector<Complex<Scalar>> twiddles_;
};

template <typename Scalar>
void transform_planes(std::vector<Complex<Scalar>>& buf, const PlaneDims& d, bool inverse) {
  const Radix2<Scalar> rows(d.w), cols(d.h);
  std::vector<Complex<Scalar>> column(static_cast<std::size_t>(d.h));
  for (Index p = 0; p < d.planes; ++p) {
    Complex<Scalar>* plane = buf.data() + p * d.h * d.w;
    for (Index y = 0; y < d.h; ++y) rows(plane + y * d.w, inverse);
    for (Index x = 0; x < d.w; ++x) {
      for (Index y = 0; y < d.h; ++y) column[static_cast<std::size_t>(y)] = plane[y * d.w + x];
      cols(column.data(), inverse);
      for (Index y = 0; y < d.h; ++y) plane[y * d.w + x] = column[static_cast<std::size_t>(y)];
    }
  }
  if (inverse) {
    const Scalar norm = Scalar(1) / static_cast<Scalar>(d.h * d.w);
    for (auto& c : buf) c *= norm;
  }
}

template <typename Scalar>
std::vector<Complex<Scalar>> to_complex(const Scalar* re, const Scalar* im, Index n) {
  std::vector<Complex<Scalar>> out(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = Complex<Scalar>(re[i], im ? im[i] : Scalar(0));
  }
  return out;
}

template <typename Scalar>
void split_complex(const std::vector<Complex<Scalar>>& buf, Scalar* re, Scalar* im) {
  for (std::size_t i = 0; i < buf.size(); ++i) {
    re[i] = buf[i].real();
    if (im) im[i] = buf[i].imag();
  }
}

struct HaarDims {
  Index batch, channels, h, w;  // h, w are subband extents
};

template <typename Scalar>
void haar_forward(const Scalar* x, const HaarDims& d, Scalar* ihat) {
  const Index W = 2 * d.w, plane = d.h * d.w;
  for (Index b = 0; b < d.batch; ++b) {
    for (Index c = 0; c < d.channels; ++c) {
      const Scalar* src = x + (b * d.channels + c) * 4 * plane;
      Scalar* bands[4];
      for (int s = 0; s < 4; ++s) bands[s] = ihat + ((b * 4 + s) * d.channels + c) * plane;
      for (Index i = 0; i < d.h; ++i) {
        for (Index j = 0; j < d.w; ++j) {
          const Scalar a = src[(2 * i) * W + 2 * j], bb = src[(2 * i) * W + 2 * j + 1];
          const Scalar cc = src[(2 * i + 1) * W + 2 * j], dd = src[(2 * i + 1) * W + 2 * j + 1];
          const Index k = i * d.w + j;
          bands[0][k] = (a + bb + cc + dd) * Scalar(0.5);
          bands[1][k] = (a + bb - cc - dd) * Scalar(0.5);
          bands[2][k] = (a - bb + cc - dd) * Scalar(0.5);
          bands[3][k] = (a - bb - cc + dd) * Scalar(0.5);
        }
      }
    }
  }
}

template <typename Scalar>
void haar_inverse(const Scalar* ihat, const HaarDims& d, Scalar* x) {
  const Index W = 2 * d.w, plane = d.h * d.w;
  for (Index b = 0; b < d.batch; ++b) {
    for (Index c = 0; c < d.channels; ++c) {
      Scalar* dst = x + (b * d.channels + c) * 4 * plane;
      const Scalar* bands[4];
      for (int s = 0; s < 4; ++s) bands[s] = ihat + ((b * 4 + s) * d.channels + c) * plane;
      for (Index i = 0; i < d.h; ++i) {
        for (Index j = 0; j < d.w; ++j) {
          const Index k = i * d.w + j;
          const Scalar ll = bands[0][k], lh = bands[1][k], hl = bands[2][k], hh = bands[3][k];
          dst[(2 * i) * W + 2 * j] = (ll + lh + hl + hh) * Scalar(0.5);
          dst[(2 * i) * W + 2 * j + 1] = (ll + lh - hl - hh) * Scalar(0.5);
          dst[(2 * i + 1) * W + 2 * j] = (ll - lh + hl - hh) * Scalar(0.5);
          dst[(2 * i + 1) * W + 2 * j + 1] = (ll - lh - hl + hh) * Scalar(0.5);
        }
      }
    }
  }
}

HaarDims haar_dims_from_image(const Shape& shape) {
  require_rank(shape, 4, "dwt_haar2");
  if (shape[2] % 2 != 0 || shape[3] % 2 != 0) {
    throw DimensionError("dwt_haar2: height and width must be even, got " + shape_str(shape));
  }
  return {shape[0], shape[1], shape[2] / 2, shape[3] / 2};
}

HaarDims haar_dims_from_stacked(const Shape& shape) {
  require_rank(shape, 5, "idwt_haar2");
  if (shape[1] != 4) throw DimensionError("idwt_haar2: expected 4 subbands, got " + shape_str(shape));
  return {shape[0], shape[2], shape[3], shape[4]};
}

template <typename Scalar>
Tensor<Scalar> haar_stacked(const Tensor<Scalar>& x) {
  const auto d = haar_dims_from_image(x.shape());
  Tensor<Scalar> ihat({d.batch, 4, d.channels, d.h, d.w});
  haar_forward(x.data(), d, ihat.data());
  return ihat;
}

template <typename Scalar>
Tensor<Scalar> haar_unstacked(const Tensor<Scalar>& ihat) {
  const auto d = haar_dims_from_stacked(ihat.shape());
  Tensor<Scalar> x({d.batch, d.channels, 2 * d.h, 2 * d.w});
  haar_inverse(ihat.data(), d, x.data());
  return x;
}

// Packed [2, ...] complex <-> planes.
template <typename Scalar>
Tensor<Scalar> pack(const Scalar* re, const Scalar* im, const Shape& inner) {
  Shape shape{2};
  shape.insert(shape.end(), inner.begin(), inner.end());
  Tensor<Scalar> out(shape);
  const Index n = shape_size(inner);
  std::copy(re, re + n, out.data());
  std::copy(im, im + n, out.data() + n);
  return out;
}

Shape unpacked_shape(const Shape& packed, const char* what) {
  if (packed.size() < 3 || packed[0] != 2) {
    throw DimensionError(std::string(what) + ": expected packed [2, ...] tensor, got " +
                         shape_str(packed));
  }
  return Shape(packed.begin() + 1, packed.end());
}

}  // namespace

bool is_power_of_two(Index n) { return n > 0 && (n & (n - 1)) == 0; }

template <typename Scalar>
Tensor<Scalar> SubbandSet<Scalar>::stacked() const {
  require_same_shape(ll.shape(), lh.shape(), "SubbandSet");
  require_same_shape(ll.shape(), hl.shape(), "SubbandSet");
  require_same_shape(ll.shape(), hh.shape(), "SubbandSet");
  require_rank(ll.shape(), 4, "SubbandSet");
  const Index batch = ll.dim(0), per = ll.size() / batch;
  Tensor<Scalar> out({batch, 4, ll.dim(1), ll.dim(2), ll.dim(3)});
  const Tensor<Scalar>* bands[4] = {&ll, &lh, &hl, &hh};
  for (Index b = 0; b < batch; ++b) {
    for (int s = 0; s < 4; ++s) {
      out.array().segment((b * 4 + s) * per, per) = bands[s]->array().segment(b * per, per);
    }
  }
  return out;
}

template <typename Scalar>
SubbandSet<Scalar> SubbandSet<Scalar>::from_stacked(const Tensor<Scalar>& ihat) {
  const auto d = haar_dims_from_stacked(ihat.shape());
  const Index per = d.channels * d.h * d.w;
  SubbandSet s;
  Tensor<Scalar>* bands[4] = {&s.ll, &s.lh, &s.hl, &s.hh};
  for (int k = 0; k < 4; ++k) {
    *bands[k] = Tensor<Scalar>({d.batch, d.channels, d.h, d.w});
    for (Index b = 0; b < d.batch; ++b) {
      bands[k]->array().segment(b * per, per) = ihat.array().segment((b * 4 + k) * per, per);
    }
  }
  return s;
}

template <typename Scalar>
SubbandSet<Scalar> dwt_haar2(const Tensor<Scalar>& x) {
  return SubbandSet<Scalar>::from_stacked(haar_stacked(x));
}

template <typename Scalar>
Tensor<Scalar> idwt_haar2(const SubbandSet<Scalar>& s) {
  return haar_unstacked(s.stacked());
}

template <typename Scalar>
ComplexSpectrum<Scalar> fft2(const Tensor<Scalar>& x) {
  const auto d = plane_dims(x.shape(), "fft2");
  auto buf = to_complex<Scalar>(x.data(), nullptr, x.size());
  transform_planes(buf, d, false);
  ComplexSpectrum<Scalar> s{Tensor<Scalar>(x.shape()), Tensor<Scalar>(x.shape())};
  split_complex(buf, s.re.data(), s.im.data());
  return s;
}

template <typename Scalar>
ComplexSpectrum<Scalar> fft2(const ComplexSpectrum<Scalar>& in) {
  require_same_shape(in.re.shape(), in.im.shape(), "fft2");
  const auto d = plane_dims(in.re.shape(), "fft2");
  auto buf = to_complex(in.re.data(), in.im.data(), in.re.size());
  transform_planes(buf, d, false);
  ComplexSpectrum<Scalar> s{Tensor<Scalar>(in.re.shape()), Tensor<Scalar>(in.re.shape())};
  split_complex(buf, s.re.data(), s.im.data());
  return s;
}

template <typename Scalar>
InverseFft<Scalar> ifft2(const ComplexSpectrum<Scalar>& in) {
  require_same_shape(in.re.shape(), in.im.shape(), "ifft2");
  const auto d = plane_dims(in.re.shape(), "ifft2");
  auto buf = to_complex(in.re.data(), in.im.data(), in.re.size());
  transform_planes(buf, d, true);
  InverseFft<Scalar> out{Tensor<Scalar>(in.re.shape()), Scalar(0)};
  for (std::size_t i = 0; i < buf.size(); ++i) {
    out.real[static_cast<Index>(i)] = buf[i].real();
    out.max_abs_imag = std::max(out.max_abs_imag, std::abs(buf[i].imag()));
  }
  return out;
}

template <typename Scalar>
PolarSpectrum<Scalar> polar_decompose(const ComplexSpectrum<Scalar>& s) {
  require_same_shape(s.re.shape(), s.im.shape(), "polar_decompose");
  PolarSpectrum<Scalar> p{Tensor<Scalar>(s.re.shape()), Tensor<Scalar>(s.re.shape())};
  for (Index i = 0; i < s.re.size(); ++i) {
    const Scalar a = std::hypot(s.re[i], s.im[i]);
    p.amplitude[i] = a;
    p.phase[i] = a < static_cast<Scalar>(kPhaseAmplitudeFloor) ? Scalar(0) : std::atan2(s.im[i], s.re[i]);
  }
  return p;
}

template <typename Scalar>
ComplexSpectrum<Scalar> polar_recombine(const Tensor<Scalar>& amplitude,
                                        const Tensor<Scalar>& phase) {
  require_same_shape(amplitude.shape(), phase.shape(), "polar_recombine");
  if (amplitude.size() > 0 && amplitude.array().minCoeff() < Scalar(0)) {
    throw ContractError("polar_recombine: amplitude must be non-negative");
  }
  return ComplexSpectrum<Scalar>{
      Tensor<Scalar>(amplitude.shape(), amplitude.array() * phase.array().cos()),
      Tensor<Scalar>(amplitude.shape(), amplitude.array() * phase.array().sin())};
}

template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> phase_swap(const Tensor<Scalar>& a,
                                                     const Tensor<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "phase_swap");
  const auto pa = polar_decompose(fft2(a));
  const auto pb = polar_decompose(fft2(b));
  return {ifft2(polar_recombine(pa.amplitude, pb.phase)).real,
          ifft2(polar_recombine(pb.amplitude, pa.phase)).real};
}

template <typename Scalar>
Var<Scalar> dwt_haar2(const Var<Scalar>& x) {
  auto& tape = *x.tape();
  const auto xi = x.id();
  return tape.record(
      haar_stacked(x.value()), {x},
      [xi](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        // Orthonormal: the adjoint is the inverse.
        if (auto* gx = t.grad_buffer(xi)) gx->array() += haar_unstacked(g).array();
      },
      "dwt_haar2");
}

template <typename Scalar>
Var<Scalar> idwt_haar2(const Var<Scalar>& ihat) {
  auto& tape = *ihat.tape();
  const auto xi = ihat.id();
  return tape.record(
      haar_unstacked(ihat.value()), {ihat},
      [xi](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        if (auto* gx = t.grad_buffer(xi)) gx->array() += haar_stacked(g).array();
      },
      "idwt_haar2");
}

template <typename Scalar>
Var<Scalar> mask_subbands(const Var<Scalar>& ihat, const SubbandMask& mask) {
  if (mask == kAllSubbands) return ihat;
  const auto d = haar_dims_from_stacked(ihat.shape());
  Tensor<Scalar> keep(ihat.shape());
  const Index per = d.channels * d.h * d.w;
  for (Index b = 0; b < d.batch; ++b) {
    for (int s = 0; s < 4; ++s) {
      keep.array().segment((b * 4 + s) * per, per).setConstant(mask[static_cast<std::size_t>(s)] ? 1 : 0);
    }
  }
  return mul(ihat, ihat.tape()->constant(std::move(keep)));
}

template <typename Scalar>
Var<Scalar> fft2(const Var<Scalar>& x) {
  auto& tape = *x.tape();
  const auto s = fft2(x.value());
  const auto xi = x.id();
  return tape.record(
      pack(s.re.data(), s.im.data(), x.shape()), {x},
      [xi](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        auto* gx = t.grad_buffer(xi);
        if (!gx) return;
        // Adjoint of the unnormalized DFT is N times the normalized inverse.
        const Shape inner = unpacked_shape(g.shape(), "fft2 backward");
        const Index n = shape_size(inner);
        ComplexSpectrum<Scalar> gs{Tensor<Scalar>(inner), Tensor<Scalar>(inner)};
        std::copy(g.data(), g.data() + n, gs.re.data());
        std::copy(g.data() + n, g.data() + 2 * n, gs.im.data());
        const Scalar scale = static_cast<Scalar>(inner[inner.size() - 1] * inner[inner.size() - 2]);
        gx->array() += scale * ifft2(gs).real.array();
      },
      "fft2");
}

template <typename Scalar>
Var<Scalar> ifft2_real(const Var<Scalar>& packed) {
  auto& tape = *packed.tape();
  const Shape inner = unpacked_shape(packed.shape(), "ifft2_real");
  const Index n = shape_size(inner);
  ComplexSpectrum<Scalar> s{Tensor<Scalar>(inner), Tensor<Scalar>(inner)};
  std::copy(packed.value().data(), packed.value().data() + n, s.re.data());
  std::copy(packed.value().data() + n, packed.value().data() + 2 * n, s.im.data());
  const auto pi = packed.id();
  return tape.record(
      ifft2(s).real, {packed},
      [pi, n, inner](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        auto* gp = t.grad_buffer(pi);
        if (!gp) return;
        const auto gs = fft2(g);
        const Scalar inv = Scalar(1) / static_cast<Scalar>(inner[inner.size() - 1] * inner[inner.size() - 2]);
        gp->array().head(n) += inv * gs.re.array();
        gp->array().tail(n) += inv * gs.im.array();
      },
      "ifft2_real");
}

template <typename Scalar>
Var<Scalar> polar_decompose(const Var<Scalar>& packed) {
  auto& tape = *packed.tape();
  const Shape inner = unpacked_shape(packed.shape(), "polar_decompose");
  const Index n = shape_size(inner);
  const Scalar* re = packed.value().data();
  const Scalar* im = re + n;
  Tensor<Scalar> out(packed.shape());
  for (Index i = 0; i < n; ++i) {
    const Scalar a = std::hypot(re[i], im[i]);
    out[i] = a;
    out[n + i] = a < static_cast<Scalar>(kPhaseAmplitudeFloor) ? Scalar(0) : std::atan2(im[i], re[i]);
  }
  const auto pi = packed.id();
  const auto oi = tape.size();
  return tape.record(
      std::move(out), {packed},
      [pi, oi, n](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        auto* gp = t.grad_buffer(pi);
        if (!gp) return;
        const Scalar* re = t.value(pi).data();
        const Scalar* im = re + n;
        const Scalar* amp = t.value(oi).data();
        for (Index i = 0; i < n; ++i) {
          const Scalar a = amp[i];
          if (a < static_cast<Scalar>(kPhaseAmplitudeFloor)) continue;
          const Scalar ga = g[i], gphi = g[n + i];
          (*gp)[i] += ga * re[i] / a - gphi * im[i] / (a * a);
          (*gp)[n + i] += ga * im[i] / a + gphi * re[i] / (a * a);
        }
      },
      "polar_decompose");
}

template <typename Scalar>
Var<Scalar> polar_recombine(const Var<Scalar>& amplitude, const Var<Scalar>& phase) {
  auto& tape = *amplitude.tape();
  require_same_shape(amplitude.shape(), phase.shape(), "polar_recombine");
  const Index n = amplitude.value().size();
  const auto& a = amplitude.value().array();
  const auto& p = phase.value().array();
  if (n > 0 && a.minCoeff() < Scalar(0)) {
    throw ContractError("polar_recombine: amplitude must be non-negative");
  }
  Shape shape{2};
  shape.insert(shape.end(), amplitude.shape().begin(), amplitude.shape().end());
  Tensor<Scalar> out(shape);
  out.array().head(n) = a * p.cos();
  out.array().tail(n) = a * p.sin();
  const auto ai = amplitude.id(), phi = phase.id();
  return tape.record(
      std::move(out), {amplitude, phase},
      [ai, phi, n](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        const auto& av = t.value(ai).array();
        const auto& pv = t.value(phi).array();
        const auto gre = g.array().head(n);
        const auto gim = g.array().tail(n);
        if (auto* ga = t.grad_buffer(ai)) ga->array() += gre * pv.cos() + gim * pv.sin();
        if (auto* gp = t.grad_buffer(phi)) gp->array() += av * (gim * pv.cos() - gre * pv.sin());
      },
      "polar_recombine");
}

#define DUALFREQ_INSTANTIATE_FREQUENCY(S)                                                   \
  template struct SubbandSet<S>;                                                            \
  template SubbandSet<S> dwt_haar2(const Tensor<S>&);                                       \
  template Tensor<S> idwt_haar2(const SubbandSet<S>&);                                      \
  template ComplexSpectrum<S> fft2(const Tensor<S>&);                                       \
  template ComplexSpectrum<S> fft2(const ComplexSpectrum<S>&);                              \
  template InverseFft<S> ifft2(const ComplexSpectrum<S>&);                                  \
  template PolarSpectrum<S> polar_decompose(const ComplexSpectrum<S>&);                     \
  template ComplexSpectrum<S> polar_recombine(const Tensor<S>&, const Tensor<S>&);          \
  template std::pair<Tensor<S>, Tensor<S>> phase_swap(const Tensor<S>&, const Tensor<S>&);  \
  template Var<S> dwt_haar2(const Var<S>&);                                                 \
  template Var<S> idwt_haar2(const Var<S>&);                                                \
  template Var<S> mask_subbands(const Var<S>&, const SubbandMask&);                         \
  template Var<S> fft2(const Var<S>&);                                                      \
  template Var<S> ifft2_real(const Var<S>&);                                                \
  template Var<S> polar_decompose(const Var<S>&);                                           \
  template Var<S> polar_recombine(const Var<S>&, const Var<S>&);

DUALFREQ_INSTANTIATE_FREQUENCY(float)
DUALFREQ_INSTANTIATE_FREQUENCY(double)

}  // namespace dualfreq
