#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "dualfreq/binding.hpp"
#include "dualfreq/frequency.hpp"
#include "dualfreq/rswattention.hpp"

namespace dualfreq {

enum class FftPart { phase, phase_amplitude };

struct DetectorConfig {
  Index input_size = 32;
  Index c_int = 16;
  Index dwt_window = 4;
  Index fft_window = 8;
  double lambda = 0.4;
  std::array<Index, 2> classifier_widths{32, 32};
  Index blocks_per_stage = 2;
  std::uint64_t seed = 0;

  // Ablation switches.
  SubbandMask subbands = kAllSubbands;
  bool window_tiling = true;  // false: raster layout of each subband instead of 2x2 blocks
  FftPart fft_part = FftPart::phase;
  bool dwt_layernorm = true;
  double ln_eps = 1e-5;
  bool bypass_attention = false;  // branches reduce to their transform round trips

  void validate() const;  // ConfigError on bad values
  std::string to_json() const;
  static DetectorConfig from_json(const std::string& text);
};

// "LL,LH,HL,HH" style lists; "all" for every subband.
SubbandMask parse_subbands(const std::string& text);
std::string format_subbands(const SubbandMask& mask);

// Parameter name prefixes, exposed so callers can select one branch's tensors.
inline constexpr const char* kDwtPrefix = "dwt.";
inline constexpr const char* kFftPrefix = "fft.";
inline constexpr const char* kClassifierPrefix = "cls.";

bool has_prefix(const std::string& name, const char* prefix);

// Seeded from cfg.seed.
template <typename Scalar>
ParameterSet<Scalar> init_detector(const DetectorConfig& cfg);

template <typename Scalar>
Var<Scalar> dwt_branch(const Var<Scalar>& x, const BoundParameters<Scalar>& p,
                       const DetectorConfig& cfg);

template <typename Scalar>
Var<Scalar> fft_branch(const Var<Scalar>& x, const BoundParameters<Scalar>& p,
                       const DetectorConfig& cfg);

// (1 - lambda) * dwt + lambda * fft; ContractError when lambda is outside [0, 1].
template <typename Scalar>
Tensor<Scalar> fuse(const Tensor<Scalar>& dwt_out, const Tensor<Scalar>& fft_out, double lambda);

template <typename Scalar>
Var<Scalar> fuse(const Var<Scalar>& dwt_out, const Var<Scalar>& fft_out, double lambda);

// Fused branch output. At lambda 0 or 1 the unused branch is not evaluated.
template <typename Scalar>
Var<Scalar> detector_features(const Var<Scalar>& x, const BoundParameters<Scalar>& p,
                              const DetectorConfig& cfg);

// [B, 3, H, W] -> [B] logits.
template <typename Scalar>
Var<Scalar> classifier_logits(const Var<Scalar>& features, const BoundParameters<Scalar>& p,
                              const DetectorConfig& cfg);

template <typename Scalar>
Var<Scalar> detector_logits(const Var<Scalar>& x, const BoundParameters<Scalar>& p,
                            const DetectorConfig& cfg);

template <typename Scalar>
Var<Scalar> detector_probabilities(const Var<Scalar>& x, const BoundParameters<Scalar>& p,
                                   const DetectorConfig& cfg);

// Inference without gradients.
template <typename Scalar>
Tensor<Scalar> predict_logits(const ParameterSet<Scalar>& params, const DetectorConfig& cfg,
                              const Tensor<Scalar>& images);

}  // namespace dualfreq
