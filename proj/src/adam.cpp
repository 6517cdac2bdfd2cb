#include "dualfreq/adam.hpp"

#include <cmath>

namespace dualfreq {

template <typename Scalar>
void adam_step(ParameterSet<Scalar>& params, const ParameterSet<Scalar>& grads,
               AdamState<Scalar>& state, double lr) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw DimensionError("adam_step: parameter, gradient and state sets differ in size");
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const auto b1 = static_cast<Scalar>(state.beta1);
  const auto b2 = static_cast<Scalar>(state.beta2);
  const auto correct1 = static_cast<Scalar>(1.0 - std::pow(state.beta1, t));
  const auto correct2 = static_cast<Scalar>(1.0 - std::pow(state.beta2, t));
  const auto eps = static_cast<Scalar>(state.eps);
  const auto step = static_cast<Scalar>(lr);

  auto g = grads.begin();
  auto m = state.m.begin();
  auto v = state.v.begin();
  for (auto p = params.begin(); p != params.end(); ++p, ++g, ++m, ++v) {
    require_same_shape(p->value.shape(), g->value.shape(), "adam_step gradient");
    require_same_shape(p->value.shape(), m->value.shape(), "adam_step state");
    auto& ma = m->value.array();
    auto& va = v->value.array();
    const auto& ga = g->value.array();
    ma = b1 * ma + (Scalar(1) - b1) * ga;
    va = b2 * va + (Scalar(1) - b2) * ga.square();
    p->value.array() -= step * (ma / correct1) / ((va / correct2).sqrt() + eps);
  }
}

template void adam_step(ParameterSet<float>&, const ParameterSet<float>&, AdamState<float>&,
                        double);
template void adam_step(ParameterSet<double>&, const ParameterSet<double>&, AdamState<double>&,
                        double);

}  // namespace dualfreq
