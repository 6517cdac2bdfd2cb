#pragma once

#include <array>
#include <utility>

#include "dualfreq/autodiff.hpp"
#include "dualfreq/tensor.hpp"

namespace dualfreq {

// Subband order used everywhere a subband axis appears.
enum class Subband : int { LL = 0, LH = 1, HL = 2, HH = 3 };

// Which subbands survive after the DWT; masked ones are zeroed.
using SubbandMask = std::array<bool, 4>;
inline constexpr SubbandMask kAllSubbands{true, true, true, true};

// One-level orthonormal 2-D Haar subbands, each [B, C, H/2, W/2].
template <typename Scalar>
struct SubbandSet {
  Tensor<Scalar> ll, lh, hl, hh;

  // [B, 4, C, H/2, W/2] in LL, LH, HL, HH order.
  Tensor<Scalar> stacked() const;
  static SubbandSet from_stacked(const Tensor<Scalar>& ihat);
};

// For each 2x2 block [[a, b], [c, d]]:
//   LL = (a+b+c+d)/2, HL = (a-b+c-d)/2, LH = (a+b-c-d)/2, HH = (a-b-c+d)/2.
template <typename Scalar>
SubbandSet<Scalar> dwt_haar2(const Tensor<Scalar>& x);

template <typename Scalar>
Tensor<Scalar> idwt_haar2(const SubbandSet<Scalar>& s);

template <typename Scalar>
struct ComplexSpectrum {
  Tensor<Scalar> re, im;
};

template <typename Scalar>
struct PolarSpectrum {
  Tensor<Scalar> amplitude;  // >= 0
  Tensor<Scalar> phase;      // in [-pi, pi]
};

// Below this amplitude the phase is defined as 0 and carries no gradient.
inline constexpr double kPhaseAmplitudeFloor = 1e-12;

bool is_power_of_two(Index n);

// Unnormalized forward DFT of every [H, W] plane of a real [.., H, W] tensor.
// H and W must be powers of two.
template <typename Scalar>
ComplexSpectrum<Scalar> fft2(const Tensor<Scalar>& x);

// Forward DFT of a complex spectrum (same layout as above).
template <typename Scalar>
ComplexSpectrum<Scalar> fft2(const ComplexSpectrum<Scalar>& s);

template <typename Scalar>
struct InverseFft {
  Tensor<Scalar> real;
  Scalar max_abs_imag = 0;  // residual of the discarded imaginary part
};

// 1/(H*W)-normalized inverse DFT; returns the real part.
template <typename Scalar>
InverseFft<Scalar> ifft2(const ComplexSpectrum<Scalar>& s);

template <typename Scalar>
PolarSpectrum<Scalar> polar_decompose(const ComplexSpectrum<Scalar>& s);

// Throws ContractError on negative amplitude.
template <typename Scalar>
ComplexSpectrum<Scalar> polar_recombine(const Tensor<Scalar>& amplitude,
                                        const Tensor<Scalar>& phase);

// Returns (IFFT(|A|, phase(B)), IFFT(|B|, phase(A))), real parts.
template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> phase_swap(const Tensor<Scalar>& a,
                                                     const Tensor<Scalar>& b);

// Differentiable forms. Complex values travel packed as [2, ...] with the real
// part first; polar values are packed as [2, ...] with amplitude first.

// [B, C, H, W] -> [B, 4, C, H/2, W/2]
template <typename Scalar>
Var<Scalar> dwt_haar2(const Var<Scalar>& x);

// [B, 4, C, h, w] -> [B, C, 2h, 2w]
template <typename Scalar>
Var<Scalar> idwt_haar2(const Var<Scalar>& ihat);

// Zeroes masked subbands of [B, 4, C, h, w]; returns the input as-is when all are kept.
template <typename Scalar>
Var<Scalar> mask_subbands(const Var<Scalar>& ihat, const SubbandMask& mask);

template <typename Scalar>
Var<Scalar> fft2(const Var<Scalar>& x);

template <typename Scalar>
Var<Scalar> ifft2_real(const Var<Scalar>& packed);

template <typename Scalar>
Var<Scalar> polar_decompose(const Var<Scalar>& packed);

template <typename Scalar>
Var<Scalar> polar_recombine(const Var<Scalar>& amplitude, const Var<Scalar>& phase);

}  // namespace dualfreq
