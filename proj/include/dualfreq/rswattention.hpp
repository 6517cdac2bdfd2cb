#pragma once

#include <random>
#include <string>

#include "dualfreq/binding.hpp"
#include "dualfreq/windows.hpp"

namespace dualfreq {

struct RswConfig {
  Index c_in = 3;
  Index c_int = 16;
  Index window = 4;  // b; N = b*b
};

// Parameter names under `prefix`:
//   pre_w [c_int, c_in], pre_b [c_int]      1x1 channel mixing
//   dw_w [c_int, 3, 3], dw_b [c_int]        depthwise 3x3
//   wq, wk, wv [c_int, c_int]               per-position projections, no bias
//   gmlp_w [N, N], gmlp_b [N]               linear over window positions
//   out_w [c_in, c_int], out_b [c_in]       back to c_in
template <typename Scalar>
void init_rsw(ParameterSet<Scalar>& params, const std::string& prefix, const RswConfig& cfg,
              std::mt19937_64& rng);

// depthwise3x3(conv1x1(x))
template <typename Scalar>
Var<Scalar> rsw_preprocess(const Var<Scalar>& x, const BoundParameters<Scalar>& p,
                           const std::string& prefix);

// softmax(q k^T) v per window: q, k, v are [S, C, N] (or a single [C, N]).
template <typename Scalar>
Var<Scalar> lo_attention(const Var<Scalar>& q, const Var<Scalar>& k, const Var<Scalar>& v);

// gelu(v w + bias), w acting on the last (position) axis.
template <typename Scalar>
Var<Scalar> gmlp(const Var<Scalar>& v, const Var<Scalar>& w, const Var<Scalar>& bias);

// Everything up to and including the inverse window step: [B, c_int, H, W].
template <typename Scalar>
Var<Scalar> rsw_features(const Var<Scalar>& x, const BoundParameters<Scalar>& p,
                         const std::string& prefix, const RswConfig& cfg);

// [B, c_in, H, W] -> [B, c_in, H, W]
template <typename Scalar>
Var<Scalar> rsw_forward(const Var<Scalar>& x, const BoundParameters<Scalar>& p,
                        const std::string& prefix, const RswConfig& cfg);

}  // namespace dualfreq
