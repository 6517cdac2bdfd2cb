#include "dualfreq/rswattention.hpp"

namespace dualfreq {

template <typename Scalar>
void init_rsw(ParameterSet<Scalar>& params, const std::string& prefix, const RswConfig& cfg,
              std::mt19937_64& rng) {
  if (cfg.c_in < 1 || cfg.c_int < 1 || cfg.window < 1) {
    throw ConfigError("rswattention: channel counts and window side must be positive");
  }
  const Index n = cfg.window * cfg.window;
  params.add(prefix + "pre_w", fan_in_uniform<Scalar>({cfg.c_int, cfg.c_in}, cfg.c_in, rng));
  params.add(prefix + "pre_b", Tensor<Scalar>({cfg.c_int}));
  params.add(prefix + "dw_w", fan_in_uniform<Scalar>({cfg.c_int, 3, 3}, 9, rng));
  params.add(prefix + "dw_b", Tensor<Scalar>({cfg.c_int}));
  for (const char* name : {"wq", "wk", "wv"}) {
    params.add(prefix + name, fan_in_uniform<Scalar>({cfg.c_int, cfg.c_int}, cfg.c_int, rng));
  }
  params.add(prefix + "gmlp_w", fan_in_uniform<Scalar>({n, n}, n, rng));
  params.add(prefix + "gmlp_b", Tensor<Scalar>({n}));
  params.add(prefix + "out_w", fan_in_uniform<Scalar>({cfg.c_in, cfg.c_int}, cfg.c_int, rng));
  params.add(prefix + "out_b", Tensor<Scalar>({cfg.c_in}));
}

template <typename Scalar>
Var<Scalar> rsw_preprocess(const Var<Scalar>& x, const BoundParameters<Scalar>& p,
                           const std::string& prefix) {
  auto mixed = conv1x1(x, p[prefix + "pre_w"], p[prefix + "pre_b"]);
  return depthwise_conv3x3(mixed, p[prefix + "dw_w"], p[prefix + "dw_b"]);
}

template <typename Scalar>
Var<Scalar> lo_attention(const Var<Scalar>& q, const Var<Scalar>& k, const Var<Scalar>& v) {
  require_same_shape(q.shape(), k.shape(), "lo_attention");
  require_same_shape(q.shape(), v.shape(), "lo_attention");
  auto affinity = softmax(matmul(q, k, /*transpose_b=*/true), -1);  // [.., C, C]
  return matmul(affinity, v);
}

template <typename Scalar>
Var<Scalar> gmlp(const Var<Scalar>& v, const Var<Scalar>& w, const Var<Scalar>& bias) {
  return gelu(linear(v, w, bias));
}

template <typename Scalar>
Var<Scalar> rsw_features(const Var<Scalar>& x, const BoundParameters<Scalar>& p,
                         const std::string& prefix, const RswConfig& cfg) {
  if (x.value().rank() != 4 || x.dim(1) != cfg.c_in) {
    throw DimensionError("rswattention: expected [B, " + std::to_string(cfg.c_in) +
                         ", H, W], got " + shape_str(x.shape()));
  }
  const auto grid = window_grid(x.shape(), cfg.window);
  const auto xin = rsw_preprocess(x, p, prefix);

  // 1x1 projections commute with windowing, so they run on the full map.
  auto& tape = p.tape();
  const auto no_bias = tape.constant(Tensor<Scalar>({cfg.c_int}));
  const auto side = cfg.window;
  const auto q = window_partition(conv1x1(xin, p[prefix + "wq"], no_bias), side);
  const auto k = window_partition(conv1x1(xin, p[prefix + "wk"], no_bias), side);
  const auto v = window_partition(conv1x1(xin, p[prefix + "wv"], no_bias), side);

  const auto attended = lo_attention(q, k, v);
  const auto mixed = gmlp(v, p[prefix + "gmlp_w"], p[prefix + "gmlp_b"]);
  const auto merged = mul(attended, mixed);

  WindowGrid inner = grid;
  inner.channels = cfg.c_int;
  return window_inverse(merged, inner);
}

template <typename Scalar>
Var<Scalar> rsw_forward(const Var<Scalar>& x, const BoundParameters<Scalar>& p,
                        const std::string& prefix, const RswConfig& cfg) {
  return conv1x1(rsw_features(x, p, prefix, cfg), p[prefix + "out_w"], p[prefix + "out_b"]);
}

#define DUALFREQ_INSTANTIATE_RSW(S)                                                           \
  template void init_rsw(ParameterSet<S>&, const std::string&, const RswConfig&,              \
                         std::mt19937_64&);                                                   \
  template Var<S> rsw_preprocess(const Var<S>&, const BoundParameters<S>&, const std::string&); \
  template Var<S> lo_attention(const Var<S>&, const Var<S>&, const Var<S>&);                  \
  template Var<S> gmlp(const Var<S>&, const Var<S>&, const Var<S>&);                          \
  template Var<S> rsw_features(const Var<S>&, const BoundParameters<S>&, const std::string&,  \
                               const RswConfig&);                                             \
  template Var<S> rsw_forward(const Var<S>&, const BoundParameters<S>&, const std::string&,   \
                              const RswConfig&);

DUALFREQ_INSTANTIATE_RSW(float)
DUALFREQ_INSTANTIATE_RSW(double)

}  // namespace dualfreq
