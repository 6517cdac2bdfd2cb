#pragma once

#include <cstdint>

#include "dualfreq/params.hpp"

namespace dualfreq {

template <typename Scalar>
struct AdamState {
  ParameterSet<Scalar> m;
  ParameterSet<Scalar> v;
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
AdamState<Scalar> adam_init(const ParameterSet<Scalar>& params, double beta1 = 0.9,
                            double beta2 = 0.999, double eps = 1e-8) {
  AdamState<Scalar> s;
  s.m = params.zeros_like();
  s.v = params.zeros_like();
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  return s;
}

// One bias-corrected Adam update, in place. `grads` must carry the same names
// and shapes as `params`.
template <typename Scalar>
void adam_step(ParameterSet<Scalar>& params, const ParameterSet<Scalar>& grads,
               AdamState<Scalar>& state, double lr);

}  // namespace dualfreq
