#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dualfreq/kernels.hpp"
#include "dualfreq/tensor.hpp"

namespace dualfreq {

template <typename Scalar>
class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor<Scalar>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  Index dim(Index axis) const { return value().dim(axis); }
  std::size_t id() const { return id_; }
  Tape<Scalar>* tape() const { return tape_; }
  bool requires_grad() const { return tape_->requires_grad(id_); }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<Scalar>* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode recording. Nodes are appended in evaluation order, so the
// creation order is a topological order and backward walks it in reverse.
template <typename Scalar>
class Tape {
 public:
  // Receives the tape and the gradient flowing into the node; accumulates into
  // the gradient buffers of the node's inputs.
  using BackwardFn = std::function<void(Tape&, const Tensor<Scalar>&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> leaf(Tensor<Scalar> value, bool requires_grad = true) {
    nodes_.push_back(Node{std::move(value), {}, requires_grad, {}, "leaf"});
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  Var<Scalar> constant(Tensor<Scalar> value) { return leaf(std::move(value), false); }

  // Records an op result. The backward function is kept only when some input
  // requires a gradient.
  Var<Scalar> record(Tensor<Scalar> value, std::initializer_list<Var<Scalar>> inputs,
                     BackwardFn backward, const char* op) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || requires_grad(in.id());
    nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : BackwardFn{}, op});
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  Var<Scalar> record(Tensor<Scalar> value, const std::vector<Var<Scalar>>& inputs,
                     BackwardFn backward, const char* op) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || requires_grad(in.id());
    nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : BackwardFn{}, op});
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  const Tensor<Scalar>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  const char* op_name(std::size_t id) const { return nodes_.at(id).op; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient buffer for accumulation; allocated as zeros on first use. Returns
  // null for nodes that do not require a gradient.
  Tensor<Scalar>* grad_buffer(std::size_t id) {
    Node& n = nodes_.at(id);
    if (!n.requires_grad) return nullptr;
    if (n.grad.empty()) n.grad = Tensor<Scalar>(n.value.shape());
    return &n.grad;
  }

  // Gradient after backward(); zeros when nothing flowed into the node.
  Tensor<Scalar> grad(const Var<Scalar>& v) const {
    const Node& n = nodes_.at(v.id());
    return n.grad.empty() ? Tensor<Scalar>(n.value.shape()) : n.grad;
  }

  void backward(const Var<Scalar>& loss) {
    if (loss.value().size() != 1) {
      throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
    }
    if (!requires_grad(loss.id())) return;
    grad_buffer(loss.id())->array().setOnes();
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.backward || n.grad.empty()) continue;
      n.backward(*this, n.grad);
    }
  }

 private:
  struct Node {
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
    bool requires_grad = false;
    BackwardFn backward;
    const char* op = "";
  };

  std::vector<Node> nodes_;
};

using Permutation = std::shared_ptr<const std::vector<Index>>;

// Element-wise arithmetic (operands must share a shape).
template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar factor);
// alpha * a + beta * b
template <typename Scalar>
Var<Scalar> axpby(Scalar alpha, const Var<Scalar>& a, Scalar beta, const Var<Scalar>& b);

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x);
template <typename Scalar>
Var<Scalar> exp(const Var<Scalar>& x);
template <typename Scalar>
Var<Scalar> expm1(const Var<Scalar>& x);
template <typename Scalar>
Var<Scalar> log1p(const Var<Scalar>& x);
template <typename Scalar>
Var<Scalar> abs(const Var<Scalar>& x);

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x);
template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& x);
// sum(x * weights) with constant weights; the gradient-check probe.
template <typename Scalar>
Var<Scalar> weighted_sum(const Var<Scalar>& x, const Tensor<Scalar>& weights);

template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& x, Shape shape);
// out[i] = x[perm[i]]; perm must be a permutation of x's flat indices.
template <typename Scalar>
Var<Scalar> gather(const Var<Scalar>& x, Permutation perm, Shape shape);
template <typename Scalar>
Var<Scalar> slice(const Var<Scalar>& x, Index axis, Index start, Index length);
template <typename Scalar>
Var<Scalar> concat(const std::vector<Var<Scalar>>& parts, Index axis);

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b, bool transpose_b = false);
template <typename Scalar>
Var<Scalar> softmax(const Var<Scalar>& x, Index axis);
template <typename Scalar>
Var<Scalar> gelu(const Var<Scalar>& x);
template <typename Scalar>
Var<Scalar> linear(const Var<Scalar>& x, const Var<Scalar>& w, const Var<Scalar>& bias);
template <typename Scalar>
Var<Scalar> layernorm(const Var<Scalar>& x, const Var<Scalar>& gamma, const Var<Scalar>& beta,
                      kernels::NormAxes axes, Scalar eps);
template <typename Scalar>
Var<Scalar> conv1x1(const Var<Scalar>& x, const Var<Scalar>& w, const Var<Scalar>& bias);
template <typename Scalar>
Var<Scalar> depthwise_conv3x3(const Var<Scalar>& x, const Var<Scalar>& w, const Var<Scalar>& bias);
template <typename Scalar>
Var<Scalar> conv3x3(const Var<Scalar>& x, const Var<Scalar>& w, const Var<Scalar>& bias,
                    Index stride = 1);
// [B, C, H, W] -> [B, C]
template <typename Scalar>
Var<Scalar> global_avg_pool(const Var<Scalar>& x);

inline constexpr double kBceClamp = 1e-7;

// Mean binary cross-entropy on probabilities clamped to [1e-7, 1 - 1e-7].
// Entries that hit the clamp receive no gradient.
template <typename Scalar>
Var<Scalar> bce_loss(const Var<Scalar>& prob, const Tensor<Scalar>& labels);

}  // namespace dualfreq
