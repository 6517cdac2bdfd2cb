#include "dualfreq/autodiff.hpp"

#include <cmath>

namespace dualfreq {
namespace {

template <typename Scalar>
Tape<Scalar>& tape_of(const Var<Scalar>& a) {
  if (!a.valid()) throw ContractError("operation on an unbound Var");
  return *a.tape();
}

template <typename Scalar>
Tape<Scalar>& tape_of(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.tape() != b.tape()) throw ContractError("operands recorded on different tapes");
  return tape_of(a);
}

// Element-wise op with derivative expressed through (x, y). The output node id
// is tape.size() at record time, so the closure can read y back from the tape.
template <typename Scalar, typename Fwd, typename Deriv>
Var<Scalar> unary(const Var<Scalar>& x, Fwd fwd, Deriv deriv, const char* name) {
  auto& tape = tape_of(x);
  const std::size_t xi = x.id();
  const std::size_t yi = tape.size();
  Tensor<Scalar> y(x.shape(), fwd(x.value().array()));
  return tape.record(
      std::move(y), {x},
      [xi, yi, deriv](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        if (auto* gx = t.grad_buffer(xi)) {
          gx->array() += g.array() * deriv(t.value(xi).array(), t.value(yi).array());
        }
      },
      name);
}

struct AxisSplit {
  Index outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, Index axis) {
  const auto rank = static_cast<Index>(shape.size());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
  }
  AxisSplit s;
  for (Index i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (Index i = axis + 1; i < rank; ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& tape = tape_of(a, b);
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<Scalar> y(a.shape(), a.value().array() + b.value().array());
  const auto ai = a.id(), bi = b.id();
  return tape.record(
      std::move(y), {a, b},
      [ai, bi](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        if (auto* ga = t.grad_buffer(ai)) ga->array() += g.array();
        if (auto* gb = t.grad_buffer(bi)) gb->array() += g.array();
      },
      "add");
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  return axpby(Scalar(1), a, Scalar(-1), b);
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& tape = tape_of(a, b);
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<Scalar> y(a.shape(), a.value().array() * b.value().array());
  const auto ai = a.id(), bi = b.id();
  return tape.record(
      std::move(y), {a, b},
      [ai, bi](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        if (auto* ga = t.grad_buffer(ai)) ga->array() += g.array() * t.value(bi).array();
        if (auto* gb = t.grad_buffer(bi)) gb->array() += g.array() * t.value(ai).array();
      },
      "mul");
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar factor) {
  auto& tape = tape_of(a);
  Tensor<Scalar> y(a.shape(), a.value().array() * factor);
  const auto ai = a.id();
  return tape.record(
      std::move(y), {a},
      [ai, factor](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        if (auto* ga = t.grad_buffer(ai)) ga->array() += g.array() * factor;
      },
      "scale");
}

template <typename Scalar>
Var<Scalar> axpby(Scalar alpha, const Var<Scalar>& a, Scalar beta, const Var<Scalar>& b) {
  auto& tape = tape_of(a, b);
  require_same_shape(a.shape(), b.shape(), "axpby");
  Tensor<Scalar> y(a.shape(), alpha * a.value().array() + beta * b.value().array());
  const auto ai = a.id(), bi = b.id();
  return tape.record(
      std::move(y), {a, b},
      [ai, bi, alpha, beta](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        if (auto* ga = t.grad_buffer(ai)) ga->array() += alpha * g.array();
        if (auto* gb = t.grad_buffer(bi)) gb->array() += beta * g.array();
      },
      "axpby");
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x) {
  return unary(
      x,
      [](const auto& v) -> typename Tensor<Scalar>::Storage {
        return Scalar(1) / (Scalar(1) + (-v).exp());
      },
      [](const auto&, const auto& y) { return y * (Scalar(1) - y); }, "sigmoid");
}

template <typename Scalar>
Var<Scalar> exp(const Var<Scalar>& x) {
  return unary(
      x, [](const auto& v) -> typename Tensor<Scalar>::Storage { return v.exp(); },
      [](const auto&, const auto& y) { return y; }, "exp");
}

template <typename Scalar>
Var<Scalar> expm1(const Var<Scalar>& x) {
  return unary(
      x, [](const auto& v) -> typename Tensor<Scalar>::Storage { return v.expm1(); },
      [](const auto&, const auto& y) { return y + Scalar(1); }, "expm1");
}

template <typename Scalar>
Var<Scalar> log1p(const Var<Scalar>& x) {
  return unary(
      x, [](const auto& v) -> typename Tensor<Scalar>::Storage { return v.log1p(); },
      [](const auto& v, const auto&) { return (Scalar(1) + v).inverse(); }, "log1p");
}

template <typename Scalar>
Var<Scalar> abs(const Var<Scalar>& x) {
  return unary(
      x, [](const auto& v) -> typename Tensor<Scalar>::Storage { return v.abs(); },
      [](const auto& v, const auto&) { return v.sign(); }, "abs");
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x) {
  auto& tape = tape_of(x);
  Tensor<Scalar> y({1}, {x.value().array().sum()});
  const auto xi = x.id();
  return tape.record(
      std::move(y), {x},
      [xi](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        if (auto* gx = t.grad_buffer(xi)) gx->array() += g[0];
      },
      "sum");
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& x) {
  return scale(sum(x), Scalar(1) / static_cast<Scalar>(x.value().size()));
}

template <typename Scalar>
Var<Scalar> weighted_sum(const Var<Scalar>& x, const Tensor<Scalar>& weights) {
  auto& tape = tape_of(x);
  require_same_shape(x.shape(), weights.shape(), "weighted_sum");
  Tensor<Scalar> y({1}, {(x.value().array() * weights.array()).sum()});
  const auto xi = x.id();
  return tape.record(
      std::move(y), {x},
      [xi, weights](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        if (auto* gx = t.grad_buffer(xi)) gx->array() += g[0] * weights.array();
      },
      "weighted_sum");
}

template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& x, Shape shape) {
  auto& tape = tape_of(x);
  Tensor<Scalar> y = x.value().reshaped(std::move(shape));
  const auto xi = x.id();
  return tape.record(
      std::move(y), {x},
      [xi](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        if (auto* gx = t.grad_buffer(xi)) gx->array() += g.array();
      },
      "reshape");
}

template <typename Scalar>
Var<Scalar> gather(const Var<Scalar>& x, Permutation perm, Shape shape) {
  auto& tape = tape_of(x);
  const auto& idx = *perm;
  if (static_cast<Index>(idx.size()) != x.value().size() || shape_size(shape) != x.value().size()) {
    throw DimensionError("gather: permutation length does not match " + shape_str(x.shape()));
  }
  Tensor<Scalar> y(std::move(shape));
  const Scalar* src = x.value().data();
  for (std::size_t i = 0; i < idx.size(); ++i) y[static_cast<Index>(i)] = src[idx[i]];
  const auto xi = x.id();
  return tape.record(
      std::move(y), {x},
      [xi, perm](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        if (auto* gx = t.grad_buffer(xi)) {
          const auto& p = *perm;
          for (std::size_t i = 0; i < p.size(); ++i) (*gx)[p[i]] += g[static_cast<Index>(i)];
        }
      },
      "gather");
}

template <typename Scalar>
Var<Scalar> slice(const Var<Scalar>& x, Index axis, Index start, Index length) {
  auto& tape = tape_of(x);
  const auto s = split_axis(x.shape(), axis);
  if (start < 0 || length < 1 || start + length > s.len) {
    throw DimensionError("slice [" + std::to_string(start) + ", +" + std::to_string(length) +
                         ") out of range for " + shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis < 0 ? axis + x.value().rank() : axis)] = length;
  Tensor<Scalar> y(out_shape);
  const Index block = length * s.inner;
  for (Index o = 0; o < s.outer; ++o) {
    y.array().segment(o * block, block) =
        x.value().array().segment(o * s.len * s.inner + start * s.inner, block);
  }
  const auto xi = x.id();
  return tape.record(
      std::move(y), {x},
      [xi, s, start, block](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        if (auto* gx = t.grad_buffer(xi)) {
          for (Index o = 0; o < s.outer; ++o) {
            gx->array().segment(o * s.len * s.inner + start * s.inner, block) +=
                g.array().segment(o * block, block);
          }
        }
      },
      "slice");
}

template <typename Scalar>
Var<Scalar> concat(const std::vector<Var<Scalar>>& parts, Index axis) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  auto& tape = tape_of(parts.front());
  const Shape& ref = parts.front().shape();
  const auto rank = static_cast<Index>(ref.size());
  const Index ax = axis < 0 ? axis + rank : axis;
  Index total = 0;
  for (const auto& p : parts) {
    if (p.tape() != &tape) throw ContractError("concat operands recorded on different tapes");
    Shape a = p.shape(), b = ref;
    if (static_cast<Index>(a.size()) != rank) throw DimensionError("concat rank mismatch");
    total += a[static_cast<std::size_t>(ax)];
    a[static_cast<std::size_t>(ax)] = b[static_cast<std::size_t>(ax)] = 0;
    if (a != b) throw DimensionError("concat: incompatible shapes");
  }
  Shape out_shape = ref;
  out_shape[static_cast<std::size_t>(ax)] = total;
  Tensor<Scalar> y(out_shape);
  const auto so = split_axis(out_shape, ax);
  std::vector<std::size_t> ids;
  std::vector<Index> lens;
  Index offset = 0;
  for (const auto& p : parts) {
    const Index len = p.dim(ax);
    for (Index o = 0; o < so.outer; ++o) {
      y.array().segment((o * total + offset) * so.inner, len * so.inner) =
          p.value().array().segment(o * len * so.inner, len * so.inner);
    }
    offset += len;
    ids.push_back(p.id());
    lens.push_back(len);
  }
  return tape.record(
      std::move(y), parts,
      [ids, lens, so, total](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        Index off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          const Index len = lens[k];
          if (auto* gp = t.grad_buffer(ids[k])) {
            for (Index o = 0; o < so.outer; ++o) {
              gp->array().segment(o * len * so.inner, len * so.inner) +=
                  g.array().segment((o * total + off) * so.inner, len * so.inner);
            }
          }
          off += len;
        }
      },
      "concat");
}

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b, bool transpose_b) {
  auto& tape = tape_of(a, b);
  const auto ai = a.id(), bi = b.id();
  return tape.record(
      kernels::matmul(a.value(), b.value(), transpose_b), {a, b},
      [ai, bi, transpose_b](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        kernels::matmul_backward(t.value(ai), t.value(bi), transpose_b, g, t.grad_buffer(ai),
                                 t.grad_buffer(bi));
      },
      "matmul");
}

template <typename Scalar>
Var<Scalar> softmax(const Var<Scalar>& x, Index axis) {
  auto& tape = tape_of(x);
  const auto xi = x.id();
  const auto yi = tape.size();
  return tape.record(
      kernels::softmax(x.value(), axis), {x},
      [xi, yi, axis](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        kernels::softmax_backward(t.value(yi), g, axis, t.grad_buffer(xi));
      },
      "softmax");
}

template <typename Scalar>
Var<Scalar> gelu(const Var<Scalar>& x) {
  auto& tape = tape_of(x);
  const auto xi = x.id();
  return tape.record(
      kernels::gelu(x.value()), {x},
      [xi](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        kernels::gelu_backward(t.value(xi), g, t.grad_buffer(xi));
      },
      "gelu");
}

template <typename Scalar>
Var<Scalar> linear(const Var<Scalar>& x, const Var<Scalar>& w, const Var<Scalar>& bias) {
  auto& tape = tape_of(x, w);
  const auto xi = x.id(), wi = w.id(), bi = bias.id();
  return tape.record(
      kernels::linear(x.value(), w.value(), bias.value()), {x, w, bias},
      [xi, wi, bi](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        kernels::linear_backward(t.value(xi), t.value(wi), g, t.grad_buffer(xi),
                                 t.grad_buffer(wi), t.grad_buffer(bi));
      },
      "linear");
}

template <typename Scalar>
Var<Scalar> layernorm(const Var<Scalar>& x, const Var<Scalar>& gamma, const Var<Scalar>& beta,
                      kernels::NormAxes axes, Scalar eps) {
  auto& tape = tape_of(x, gamma);
  auto cache = std::make_shared<kernels::LayerNormCache<Scalar>>();
  const auto xi = x.id(), gi = gamma.id(), bi = beta.id();
  return tape.record(
      kernels::layernorm(x.value(), gamma.value(), beta.value(), axes, eps, cache.get()),
      {x, gamma, beta},
      [xi, gi, bi, axes, cache](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        kernels::layernorm_backward(*cache, t.value(gi), axes, g, t.grad_buffer(xi),
                                    t.grad_buffer(gi), t.grad_buffer(bi));
      },
      "layernorm");
}

template <typename Scalar>
Var<Scalar> conv1x1(const Var<Scalar>& x, const Var<Scalar>& w, const Var<Scalar>& bias) {
  auto& tape = tape_of(x, w);
  const auto xi = x.id(), wi = w.id(), bi = bias.id();
  return tape.record(
      kernels::conv1x1(x.value(), w.value(), bias.value()), {x, w, bias},
      [xi, wi, bi](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        kernels::conv1x1_backward(t.value(xi), t.value(wi), g, t.grad_buffer(xi),
                                  t.grad_buffer(wi), t.grad_buffer(bi));
      },
      "conv1x1");
}

template <typename Scalar>
Var<Scalar> depthwise_conv3x3(const Var<Scalar>& x, const Var<Scalar>& w,
                              const Var<Scalar>& bias) {
  auto& tape = tape_of(x, w);
  const auto xi = x.id(), wi = w.id(), bi = bias.id();
  return tape.record(
      kernels::depthwise_conv3x3(x.value(), w.value(), bias.value()), {x, w, bias},
      [xi, wi, bi](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        kernels::depthwise_conv3x3_backward(t.value(xi), t.value(wi), g, t.grad_buffer(xi),
                                            t.grad_buffer(wi), t.grad_buffer(bi));
      },
      "depthwise_conv3x3");
}

template <typename Scalar>
Var<Scalar> conv3x3(const Var<Scalar>& x, const Var<Scalar>& w, const Var<Scalar>& bias,
                    Index stride) {
  auto& tape = tape_of(x, w);
  const auto xi = x.id(), wi = w.id(), bi = bias.id();
  return tape.record(
      kernels::conv3x3(x.value(), w.value(), bias.value(), stride), {x, w, bias},
      [xi, wi, bi, stride](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        kernels::conv3x3_backward(t.value(xi), t.value(wi), stride, g, t.grad_buffer(xi),
                                  t.grad_buffer(wi), t.grad_buffer(bi));
      },
      "conv3x3");
}

template <typename Scalar>
Var<Scalar> global_avg_pool(const Var<Scalar>& x) {
  auto& tape = tape_of(x);
  require_rank(x.shape(), 4, "global_avg_pool");
  const Index rows = x.dim(0) * x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor<Scalar> y({x.dim(0), x.dim(1)});
  y.matrix(rows, 1) = x.value().matrix(rows, plane).rowwise().mean();
  const auto xi = x.id();
  return tape.record(
      std::move(y), {x},
      [xi, rows, plane](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        if (auto* gx = t.grad_buffer(xi)) {
          gx->matrix(rows, plane).colwise() +=
              g.matrix(rows, 1).col(0) / static_cast<Scalar>(plane);
        }
      },
      "global_avg_pool");
}

template <typename Scalar>
Var<Scalar> bce_loss(const Var<Scalar>& prob, const Tensor<Scalar>& labels) {
  auto& tape = tape_of(prob);
  require_same_shape(prob.shape(), labels.shape(), "bce_loss");
  const auto lo = static_cast<Scalar>(kBceClamp), hi = Scalar(1) - static_cast<Scalar>(kBceClamp);
  const auto& p = prob.value();
  const Index n = p.size();
  Scalar total = 0;
  for (Index i = 0; i < n; ++i) {
    const Scalar q = std::clamp(p[i], lo, hi);
    total -= labels[i] * std::log(q) + (Scalar(1) - labels[i]) * std::log(Scalar(1) - q);
  }
  const auto pi = prob.id();
  return tape.record(
      Tensor<Scalar>({1}, {total / static_cast<Scalar>(n)}), {prob},
      [pi, labels, lo, hi](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        auto* gp = t.grad_buffer(pi);
        if (!gp) return;
        const auto& pv = t.value(pi);
        const Scalar inv_n = g[0] / static_cast<Scalar>(pv.size());
        for (Index i = 0; i < pv.size(); ++i) {
          const Scalar q = pv[i];
          if (q < lo || q > hi) continue;
          (*gp)[i] += inv_n * (-labels[i] / q + (Scalar(1) - labels[i]) / (Scalar(1) - q));
        }
      },
      "bce_loss");
}

#define DUALFREQ_INSTANTIATE_OPS(S)                                                             \
  template Var<S> add(const Var<S>&, const Var<S>&);                                            \
  template Var<S> sub(const Var<S>&, const Var<S>&);                                            \
  template Var<S> mul(const Var<S>&, const Var<S>&);                                            \
  template Var<S> scale(const Var<S>&, S);                                                      \
  template Var<S> axpby(S, const Var<S>&, S, const Var<S>&);                                    \
  template Var<S> sigmoid(const Var<S>&);                                                       \
  template Var<S> exp(const Var<S>&);                                                           \
  template Var<S> expm1(const Var<S>&);                                                         \
  template Var<S> log1p(const Var<S>&);                                                         \
  template Var<S> abs(const Var<S>&);                                                           \
  template Var<S> sum(const Var<S>&);                                                           \
  template Var<S> mean(const Var<S>&);                                                          \
  template Var<S> weighted_sum(const Var<S>&, const Tensor<S>&);                                \
  template Var<S> reshape(const Var<S>&, Shape);                                                \
  template Var<S> gather(const Var<S>&, Permutation, Shape);                                    \
  template Var<S> slice(const Var<S>&, Index, Index, Index);                                    \
  template Var<S> concat(const std::vector<Var<S>>&, Index);                                    \
  template Var<S> matmul(const Var<S>&, const Var<S>&, bool);                                   \
  template Var<S> softmax(const Var<S>&, Index);                                                \
  template Var<S> gelu(const Var<S>&);                                                          \
  template Var<S> linear(const Var<S>&, const Var<S>&, const Var<S>&);                          \
  template Var<S> layernorm(const Var<S>&, const Var<S>&, const Var<S>&, kernels::NormAxes, S); \
  template Var<S> conv1x1(const Var<S>&, const Var<S>&, const Var<S>&);                         \
  template Var<S> depthwise_conv3x3(const Var<S>&, const Var<S>&, const Var<S>&);               \
  template Var<S> conv3x3(const Var<S>&, const Var<S>&, const Var<S>&, Index);                  \
  template Var<S> global_avg_pool(const Var<S>&);                                               \
  template Var<S> bce_loss(const Var<S>&, const Tensor<S>&);

DUALFREQ_INSTANTIATE_OPS(float)
DUALFREQ_INSTANTIATE_OPS(double)

}  // namespace dualfreq
