#pragma once

#include "dualfreq/tensor.hpp"

// Forward and backward kernels over plain tensors. Backward routines
// accumulate into the gradient buffers they are handed (null pointers are
// skipped), so callers can share buffers between several consumers.
namespace dualfreq::kernels {

// Rank-2 (m x k)(k x n) or rank-3 batched (S x m x k)(S x k x n) product.
// With transpose_b the second operand is read as (.. x n x k).
template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b, bool transpose_b = false);

template <typename Scalar>
void matmul_backward(const Tensor<Scalar>& a, const Tensor<Scalar>& b, bool transpose_b,
                     const Tensor<Scalar>& grad_out, Tensor<Scalar>* grad_a,
                     Tensor<Scalar>* grad_b);

// Max-subtracted softmax along `axis`.
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& x, Index axis);

template <typename Scalar>
void softmax_backward(const Tensor<Scalar>& y, const Tensor<Scalar>& grad_y, Index axis,
                      Tensor<Scalar>* grad_x);

// Exact GELU, x * Phi(x).
template <typename Scalar>
Tensor<Scalar> gelu(const Tensor<Scalar>& x);

template <typename Scalar>
void gelu_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& grad_y, Tensor<Scalar>* grad_x);

// Affine map over the last axis: x[..., n] * w[n, m] + bias[m].
template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const Tensor<Scalar>& bias);

template <typename Scalar>
void linear_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                     const Tensor<Scalar>& grad_y, Tensor<Scalar>* grad_x, Tensor<Scalar>* grad_w,
                     Tensor<Scalar>* grad_bias);

// Axes for layernorm: statistics are taken over every axis >= first_normalized;
// gamma/beta are indexed along affine_axis and broadcast over the rest.
struct NormAxes {
  Index first_normalized = -1;
  Index affine_axis = -1;
};

template <typename Scalar>
struct LayerNormCache {
  Tensor<Scalar> normalized;  // (x - mean) / sqrt(var + eps)
  std::vector<Scalar> inv_std;  // one per normalization group
};

template <typename Scalar>
Tensor<Scalar> layernorm(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma,
                         const Tensor<Scalar>& beta, NormAxes axes, Scalar eps,
                         LayerNormCache<Scalar>* cache = nullptr);

template <typename Scalar>
void layernorm_backward(const LayerNormCache<Scalar>& cache, const Tensor<Scalar>& gamma,
                        NormAxes axes, const Tensor<Scalar>& grad_y, Tensor<Scalar>* grad_x,
                        Tensor<Scalar>* grad_gamma, Tensor<Scalar>* grad_beta);

// x[B, Ci, H, W], w[Co, Ci], bias[Co] -> [B, Co, H, W].
template <typename Scalar>
Tensor<Scalar> conv1x1(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                       const Tensor<Scalar>& bias);

template <typename Scalar>
void conv1x1_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                      const Tensor<Scalar>& grad_y, Tensor<Scalar>* grad_x,
                      Tensor<Scalar>* grad_w, Tensor<Scalar>* grad_bias);

// Per-channel 3x3 convolution, zero padding 1: x[B, C, H, W], w[C, 3, 3], bias[C].
template <typename Scalar>
Tensor<Scalar> depthwise_conv3x3(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                                 const Tensor<Scalar>& bias);

template <typename Scalar>
void depthwise_conv3x3_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                                const Tensor<Scalar>& grad_y, Tensor<Scalar>* grad_x,
                                Tensor<Scalar>* grad_w, Tensor<Scalar>* grad_bias);

// Dense 3x3 convolution with zero padding 1 and the given stride:
// x[B, Ci, H, W], w[Co, Ci, 3, 3], bias[Co] -> [B, Co, Ho, Wo].
template <typename Scalar>
Tensor<Scalar> conv3x3(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                       const Tensor<Scalar>& bias, Index stride = 1);

template <typename Scalar>
void conv3x3_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& w, Index stride,
                      const Tensor<Scalar>& grad_y, Tensor<Scalar>* grad_x,
                      Tensor<Scalar>* grad_w, Tensor<Scalar>* grad_bias);

inline Index conv_out_extent(Index in, Index stride) { return (in - 1) / stride + 1; }

}  // namespace dualfreq::kernels
