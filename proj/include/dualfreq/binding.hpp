#pragma once

#include <cmath>
#include <map>
#include <string>

#include "dualfreq/autodiff.hpp"
#include "dualfreq/params.hpp"

namespace dualfreq {

// Exposes a ParameterSet on a tape. Leaves are created on first use, so
// parameters a forward pass never touches stay off the tape and come back
// with exactly zero gradient.
template <typename Scalar>
class BoundParameters {
 public:
  BoundParameters(Tape<Scalar>& tape, const ParameterSet<Scalar>& params, bool requires_grad = true)
      : tape_(&tape), params_(&params), requires_grad_(requires_grad) {}

  Var<Scalar> operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it != vars_.end()) return it->second;
    auto v = tape_->leaf((*params_)[name], requires_grad_);
    vars_.emplace(name, v);
    return v;
  }

  bool touched(const std::string& name) const { return vars_.count(name) != 0; }

  // Call after tape.backward().
  ParameterSet<Scalar> gradients() const {
    ParameterSet<Scalar> out;
    for (const auto& e : *params_) {
      auto it = vars_.find(e.name);
      out.add(e.name, it == vars_.end() ? Tensor<Scalar>(e.value.shape()) : tape_->grad(it->second));
    }
    return out;
  }

  Tape<Scalar>& tape() const { return *tape_; }

 private:
  Tape<Scalar>* tape_;
  const ParameterSet<Scalar>* params_;
  bool requires_grad_;
  mutable std::map<std::string, Var<Scalar>> vars_;
};

// uniform(-a, a) with a = 1/sqrt(fan_in).
template <typename Scalar, typename Rng>
Tensor<Scalar> fan_in_uniform(Shape shape, Index fan_in, Rng& rng) {
  const Scalar a = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(fan_in)));
  return Tensor<Scalar>::uniform(std::move(shape), -a, a, rng);
}

}  // namespace dualfreq
