#include "dualfreq/kernels.hpp"

#include <unsupported/Eigen/SpecialFunctions>

#include <cmath>
#include <numbers>

namespace dualfreq::kernels {
namespace {

struct AxisSplit {
  Index outer = 1;
  Index len = 1;
  Index inner = 1;
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

template <typename Scalar>
using VecMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;
template <typename Scalar>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;

struct MatmulDims {
  Index batch, m, k, n;
};

template <typename Scalar>
MatmulDims matmul_dims(const Tensor<Scalar>& a, const Tensor<Scalar>& b, bool transpose_b) {
  if (a.rank() != b.rank() || (a.rank() != 2 && a.rank() != 3)) {
    throw DimensionError("matmul expects two rank-2 or two rank-3 tensors, got " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const bool batched = a.rank() == 3;
  MatmulDims d{};
  d.batch = batched ? a.dim(0) : 1;
  d.m = a.dim(-2);
  d.k = a.dim(-1);
  const Index bk = transpose_b ? b.dim(-1) : b.dim(-2);
  d.n = transpose_b ? b.dim(-2) : b.dim(-1);
  if (bk != d.k || (batched && b.dim(0) != d.batch)) {
    throw DimensionError("matmul inner extents do not match: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + (transpose_b ? "^T" : ""));
  }
  return d;
}

void require_conv_input(const Shape& x, Index channels, const char* what) {
  require_rank(x, 4, what);
  if (x[1] != channels) {
    throw DimensionError(std::string(what) + ": input has " + std::to_string(x[1]) +
                         " channels, weights expect " + std::to_string(channels));
  }
}

// Output columns [lo, hi) whose tap kx lands inside a row of width w.
struct TapRange {
  Index lo, hi;
};

TapRange tap_range(Index kx, Index w, Index stride, Index wo) {
  const Index lo = kx == 0 ? 1 : 0;
  const Index hi = w - kx < 0 ? 0 : std::min(wo, (w - kx) / stride + 1);
  return {lo, std::max(lo, hi)};
}

template <typename Scalar>
void im2col3x3(const Scalar* x, Index channels, Index h, Index w, Index stride, Index ho, Index wo,
               Scalar* col) {
  const Index plane = ho * wo;
  for (Index c = 0; c < channels; ++c) {
    const Scalar* xc = x + c * h * w;
    for (Index ky = 0; ky < 3; ++ky) {
      for (Index kx = 0; kx < 3; ++kx) {
        Scalar* row = col + ((c * 3 + ky) * 3 + kx) * plane;
        const auto r = tap_range(kx, w, stride, wo);
        for (Index oy = 0; oy < ho; ++oy) {
          const Index iy = oy * stride + ky - 1;
          Scalar* dst = row + oy * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, Scalar(0));
            continue;
          }
          const Scalar* src = xc + iy * w;
          std::fill(dst, dst + r.lo, Scalar(0));
          if (stride == 1) {
            std::copy(src + r.lo + kx - 1, src + r.hi + kx - 1, dst + r.lo);
          } else {
            for (Index ox = r.lo; ox < r.hi; ++ox) dst[ox] = src[ox * stride + kx - 1];
          }
          std::fill(dst + r.hi, dst + wo, Scalar(0));
        }
      }
    }
  }
}

template <typename Scalar>
void col2im3x3(const Scalar* col, Index channels, Index h, Index w, Index stride, Index ho,
               Index wo, Scalar* x) {
  const Index plane = ho * wo;
  for (Index c = 0; c < channels; ++c) {
    Scalar* xc = x + c * h * w;
    for (Index ky = 0; ky < 3; ++ky) {
      for (Index kx = 0; kx < 3; ++kx) {
        const Scalar* row = col + ((c * 3 + ky) * 3 + kx) * plane;
        const auto r = tap_range(kx, w, stride, wo);
        for (Index oy = 0; oy < ho; ++oy) {
          const Index iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= h) continue;
          const Scalar* src = row + oy * wo;
          Scalar* dst = xc + iy * w;
          for (Index ox = r.lo; ox < r.hi; ++ox) dst[ox * stride + kx - 1] += src[ox];
        }
      }
    }
  }
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b, bool transpose_b) {
  const auto d = matmul_dims(a, b, transpose_b);
  Shape out_shape = a.rank() == 3 ? Shape{d.batch, d.m, d.n} : Shape{d.m, d.n};
  Tensor<Scalar> out(out_shape);
  for (Index s = 0; s < d.batch; ++s) {
    ConstMatrixMap<Scalar> am(a.data() + s * d.m * d.k, d.m, d.k);
    MatrixMap<Scalar> cm(out.data() + s * d.m * d.n, d.m, d.n);
    if (transpose_b) {
      ConstMatrixMap<Scalar> bm(b.data() + s * d.n * d.k, d.n, d.k);
      cm.noalias() = am * bm.transpose();
    } else {
      ConstMatrixMap<Scalar> bm(b.data() + s * d.k * d.n, d.k, d.n);
      cm.noalias() = am * bm;
    }
  }
  return out;
}

template <typename Scalar>
void matmul_backward(const Tensor<Scalar>& a, const Tensor<Scalar>& b, bool transpose_b,
                     const Tensor<Scalar>& grad_out, Tensor<Scalar>* grad_a,
                     Tensor<Scalar>* grad_b) {
  const auto d = matmul_dims(a, b, transpose_b);
  for (Index s = 0; s < d.batch; ++s) {
    ConstMatrixMap<Scalar> am(a.data() + s * d.m * d.k, d.m, d.k);
    ConstMatrixMap<Scalar> gm(grad_out.data() + s * d.m * d.n, d.m, d.n);
    if (transpose_b) {
      ConstMatrixMap<Scalar> bm(b.data() + s * d.n * d.k, d.n, d.k);
      if (grad_a) MatrixMap<Scalar>(grad_a->data() + s * d.m * d.k, d.m, d.k).noalias() += gm * bm;
      if (grad_b) {
        MatrixMap<Scalar>(grad_b->data() + s * d.n * d.k, d.n, d.k).noalias() +=
            gm.transpose() * am;
      }
    } else {
      ConstMatrixMap<Scalar> bm(b.data() + s * d.k * d.n, d.k, d.n);
      if (grad_a) {
        MatrixMap<Scalar>(grad_a->data() + s * d.m * d.k, d.m, d.k).noalias() +=
            gm * bm.transpose();
      }
      if (grad_b) {
        MatrixMap<Scalar>(grad_b->data() + s * d.k * d.n, d.k, d.n).noalias() +=
            am.transpose() * gm;
      }
    }
  }
}

template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& x, Index axis) {
  const auto s = split_axis(x.shape(), axis);
  Tensor<Scalar> y(x.shape());
  for (Index o = 0; o < s.outer; ++o) {
    for (Index i = 0; i < s.inner; ++i) {
      const Scalar* src = x.data() + o * s.len * s.inner + i;
      Scalar* dst = y.data() + o * s.len * s.inner + i;
      Scalar peak = src[0];
      for (Index j = 1; j < s.len; ++j) peak = std::max(peak, src[j * s.inner]);
      Scalar total = 0;
      for (Index j = 0; j < s.len; ++j) {
        dst[j * s.inner] = std::exp(src[j * s.inner] - peak);
        total += dst[j * s.inner];
      }
      for (Index j = 0; j < s.len; ++j) dst[j * s.inner] /= total;
    }
  }
  return y;
}

template <typename Scalar>
void softmax_backward(const Tensor<Scalar>& y, const Tensor<Scalar>& grad_y, Index axis,
                      Tensor<Scalar>* grad_x) {
  if (!grad_x) return;
  const auto s = split_axis(y.shape(), axis);
  for (Index o = 0; o < s.outer; ++o) {
    for (Index i = 0; i < s.inner; ++i) {
      const Index base = o * s.len * s.inner + i;
      Scalar dot = 0;
      for (Index j = 0; j < s.len; ++j) dot += y[base + j * s.inner] * grad_y[base + j * s.inner];
      for (Index j = 0; j < s.len; ++j) {
        const Index k = base + j * s.inner;
        (*grad_x)[k] += y[k] * (grad_y[k] - dot);
      }
    }
  }
}

template <typename Scalar>
Tensor<Scalar> gelu(const Tensor<Scalar>& x) {
  const Scalar inv_sqrt2 = Scalar(1) / std::numbers::sqrt2_v<Scalar>;
  typename Tensor<Scalar>::Storage cdf = Scalar(0.5) * (Scalar(1) + (x.array() * inv_sqrt2).erf());
  return Tensor<Scalar>(x.shape(), x.array() * cdf);
}

template <typename Scalar>
void gelu_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& grad_y, Tensor<Scalar>* grad_x) {
  if (!grad_x) return;
  const Scalar inv_sqrt2 = Scalar(1) / std::numbers::sqrt2_v<Scalar>;
  const Scalar inv_sqrt2pi = Scalar(1) / std::sqrt(Scalar(2) * std::numbers::pi_v<Scalar>);
  const auto& xa = x.array();
  grad_x->array() += grad_y.array() * (Scalar(0.5) * (Scalar(1) + (xa * inv_sqrt2).erf()) +
                                       xa * inv_sqrt2pi * (Scalar(-0.5) * xa.square()).exp());
}

template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const Tensor<Scalar>& bias) {
  require_rank(w.shape(), 2, "linear weight");
  const Index n = w.dim(0), m = w.dim(1);
  if (x.dim(-1) != n) {
    throw DimensionError("linear: input last extent " + std::to_string(x.dim(-1)) +
                         " does not match weight rows " + std::to_string(n));
  }
  require_same_shape(bias.shape(), Shape{m}, "linear bias");
  const Index rows = x.size() / n;
  Shape out_shape = x.shape();
  out_shape.back() = m;
  Tensor<Scalar> y(out_shape);
  auto ym = y.matrix(rows, m);
  ym.noalias() = x.matrix(rows, n) * w.matrix(n, m);
  ym.rowwise() += bias.array().matrix().transpose();
  return y;
}

template <typename Scalar>
void linear_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                     const Tensor<Scalar>& grad_y, Tensor<Scalar>* grad_x, Tensor<Scalar>* grad_w,
                     Tensor<Scalar>* grad_bias) {
  const Index n = w.dim(0), m = w.dim(1);
  const Index rows = x.size() / n;
  auto gy = grad_y.matrix(rows, m);
  if (grad_x) grad_x->matrix(rows, n).noalias() += gy * w.matrix(n, m).transpose();
  if (grad_w) grad_w->matrix(n, m).noalias() += x.matrix(rows, n).transpose() * gy;
  if (grad_bias) grad_bias->matrix(1, m) += gy.colwise().sum();
}

template <typename Scalar>
Tensor<Scalar> layernorm(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma,
                         const Tensor<Scalar>& beta, NormAxes axes, Scalar eps,
                         LayerNormCache<Scalar>* cache) {
  const auto norm = split_axis(x.shape(), axes.first_normalized);
  const auto aff = split_axis(x.shape(), axes.affine_axis);
  require_same_shape(gamma.shape(), Shape{aff.len}, "layernorm gamma");
  require_same_shape(beta.shape(), Shape{aff.len}, "layernorm beta");
  const Index groups = norm.outer;
  const Index group_size = norm.len * norm.inner;

  Tensor<Scalar> xhat(x.shape());
  std::vector<Scalar> inv_std(static_cast<std::size_t>(groups));
  for (Index g = 0; g < groups; ++g) {
    auto seg = x.array().segment(g * group_size, group_size);
    const Scalar mean = seg.mean();
    const Scalar var = (seg - mean).square().mean();
    const Scalar inv = Scalar(1) / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(g)] = inv;
    xhat.array().segment(g * group_size, group_size) = (seg - mean) * inv;
  }
  Tensor<Scalar> y(x.shape());
  for (Index o = 0; o < aff.outer; ++o) {
    for (Index c = 0; c < aff.len; ++c) {
      const Index base = (o * aff.len + c) * aff.inner;
      y.array().segment(base, aff.inner) = gamma[c] * xhat.array().segment(base, aff.inner) + beta[c];
    }
  }
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <typename Scalar>
void layernorm_backward(const LayerNormCache<Scalar>& cache, const Tensor<Scalar>& gamma,
                        NormAxes axes, const Tensor<Scalar>& grad_y, Tensor<Scalar>* grad_x,
                        Tensor<Scalar>* grad_gamma, Tensor<Scalar>* grad_beta) {
  const auto& xhat = cache.normalized;
  const auto norm = split_axis(xhat.shape(), axes.first_normalized);
  const auto aff = split_axis(xhat.shape(), axes.affine_axis);
  const Index groups = norm.outer;
  const Index group_size = norm.len * norm.inner;

  // d(loss)/d(xhat) with the affine scale folded in.
  Tensor<Scalar> dxhat(xhat.shape());
  for (Index o = 0; o < aff.outer; ++o) {
    for (Index c = 0; c < aff.len; ++c) {
      const Index base = (o * aff.len + c) * aff.inner;
      const auto gy = grad_y.array().segment(base, aff.inner);
      if (grad_gamma) (*grad_gamma)[c] += (gy * xhat.array().segment(base, aff.inner)).sum();
      if (grad_beta) (*grad_beta)[c] += gy.sum();
      dxhat.array().segment(base, aff.inner) = gamma[c] * gy;
    }
  }
  if (!grad_x) return;
  for (Index g = 0; g < groups; ++g) {
    const Index base = g * group_size;
    const auto d = dxhat.array().segment(base, group_size);
    const auto xh = xhat.array().segment(base, group_size);
    const Scalar mean_d = d.mean();
    const Scalar mean_dx = (d * xh).mean();
    const Scalar inv = cache.inv_std[static_cast<std::size_t>(g)];
    grad_x->array().segment(base, group_size) += inv * (d - mean_d - xh * mean_dx);
  }
}

template <typename Scalar>
Tensor<Scalar> conv1x1(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                       const Tensor<Scalar>& bias) {
  require_rank(w.shape(), 2, "conv1x1 weight");
  const Index co = w.dim(0), ci = w.dim(1);
  require_conv_input(x.shape(), ci, "conv1x1");
  require_same_shape(bias.shape(), Shape{co}, "conv1x1 bias");
  const Index batch = x.dim(0), plane = x.dim(2) * x.dim(3);
  Tensor<Scalar> y({batch, co, x.dim(2), x.dim(3)});
  auto wm = w.matrix(co, ci);
  for (Index b = 0; b < batch; ++b) {
    MatrixMap<Scalar> ym(y.data() + b * co * plane, co, plane);
    ym.noalias() = wm * ConstMatrixMap<Scalar>(x.data() + b * ci * plane, ci, plane);
    ym.colwise() += bias.array().matrix();
  }
  return y;
}

template <typename Scalar>
void conv1x1_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                      const Tensor<Scalar>& grad_y, Tensor<Scalar>* grad_x,
                      Tensor<Scalar>* grad_w, Tensor<Scalar>* grad_bias) {
  const Index co = w.dim(0), ci = w.dim(1);
  const Index batch = x.dim(0), plane = x.dim(2) * x.dim(3);
  auto wm = w.matrix(co, ci);
  for (Index b = 0; b < batch; ++b) {
    ConstMatrixMap<Scalar> gy(grad_y.data() + b * co * plane, co, plane);
    ConstMatrixMap<Scalar> xm(x.data() + b * ci * plane, ci, plane);
    if (grad_x) MatrixMap<Scalar>(grad_x->data() + b * ci * plane, ci, plane).noalias() += wm.transpose() * gy;
    if (grad_w) grad_w->matrix(co, ci).noalias() += gy * xm.transpose();
    if (grad_bias) grad_bias->array().matrix() += gy.rowwise().sum();
  }
}

template <typename Scalar>
Tensor<Scalar> depthwise_conv3x3(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                                 const Tensor<Scalar>& bias) {
  require_rank(w.shape(), 3, "depthwise weight");
  const Index channels = w.dim(0);
  if (w.dim(1) != 3 || w.dim(2) != 3) throw DimensionError("depthwise kernel must be C x 3 x 3");
  require_conv_input(x.shape(), channels, "depthwise_conv3x3");
  require_same_shape(bias.shape(), Shape{channels}, "depthwise bias");
  const Index batch = x.dim(0), h = x.dim(2), wd = x.dim(3);
  Tensor<Scalar> y(x.shape());
  for (Index b = 0; b < batch; ++b) {
    for (Index c = 0; c < channels; ++c) {
      const Scalar* src = x.data() + (b * channels + c) * h * wd;
      Scalar* dst = y.data() + (b * channels + c) * h * wd;
      const Scalar* k = w.data() + c * 9;
      std::fill(dst, dst + h * wd, bias[c]);
      for (Index ky = 0; ky < 3; ++ky) {
        for (Index kx = 0; kx < 3; ++kx) {
          const Scalar kv = k[ky * 3 + kx];
          const Index dy = ky - 1, dx = kx - 1;
          const Index y0 = std::max<Index>(0, -dy), y1 = std::min(h, h - dy);
          const Index x0 = std::max<Index>(0, -dx), x1 = std::min(wd, wd - dx);
          for (Index oy = y0; oy < y1; ++oy) {
            const Scalar* srow = src + (oy + dy) * wd + dx;
            Scalar* drow = dst + oy * wd;
            for (Index ox = x0; ox < x1; ++ox) drow[ox] += kv * srow[ox];
          }
        }
      }
    }
  }
  return y;
}

template <typename Scalar>
void depthwise_conv3x3_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                                const Tensor<Scalar>& grad_y, Tensor<Scalar>* grad_x,
                                Tensor<Scalar>* grad_w, Tensor<Scalar>* grad_bias) {
  const Index channels = w.dim(0);
  const Index batch = x.dim(0), h = x.dim(2), wd = x.dim(3);
  for (Index b = 0; b < batch; ++b) {
    for (Index c = 0; c < channels; ++c) {
      const Index off = (b * channels + c) * h * wd;
      const Scalar* src = x.data() + off;
      const Scalar* gy = grad_y.data() + off;
      const Scalar* k = w.data() + c * 9;
      if (grad_bias) {
        Scalar total = 0;
        for (Index i = 0; i < h * wd; ++i) total += gy[i];
        (*grad_bias)[c] += total;
      }
      for (Index ky = 0; ky < 3; ++ky) {
        for (Index kx = 0; kx < 3; ++kx) {
          const Index dy = ky - 1, dx = kx - 1;
          const Index y0 = std::max<Index>(0, -dy), y1 = std::min(h, h - dy);
          const Index x0 = std::max<Index>(0, -dx), x1 = std::min(wd, wd - dx);
          const Index len = x1 - x0;
          const Scalar kv = k[ky * 3 + kx];
          Scalar acc = 0;
          for (Index oy = y0; oy < y1; ++oy) {
            const Index srow = (oy + dy) * wd + dx + x0;
            ConstVecMap<Scalar> g(gy + oy * wd + x0, len);
            if (grad_w) acc += g.dot(ConstVecMap<Scalar>(src + srow, len));
            if (grad_x) VecMap<Scalar>(grad_x->data() + off + srow, len) += kv * g;
          }
          if (grad_w) (*grad_w)[c * 9 + ky * 3 + kx] += acc;
        }
      }
    }
  }
}

template <typename Scalar>
Tensor<Scalar> conv3x3(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                       const Tensor<Scalar>& bias, Index stride) {
  require_rank(w.shape(), 4, "conv3x3 weight");
  if (w.dim(2) != 3 || w.dim(3) != 3) throw DimensionError("conv3x3 kernel must be Co x Ci x 3 x 3");
  if (stride < 1) throw ContractError("conv3x3 stride must be positive");
  const Index co = w.dim(0), ci = w.dim(1);
  require_conv_input(x.shape(), ci, "conv3x3");
  require_same_shape(bias.shape(), Shape{co}, "conv3x3 bias");
  const Index batch = x.dim(0), h = x.dim(2), wd = x.dim(3);
  const Index ho = conv_out_extent(h, stride), wo = conv_out_extent(wd, stride);
  Tensor<Scalar> y({batch, co, ho, wo});
  RowMatrix<Scalar> col(ci * 9, ho * wo);
  auto wm = w.matrix(co, ci * 9);
  for (Index b = 0; b < batch; ++b) {
    im2col3x3(x.data() + b * ci * h * wd, ci, h, wd, stride, ho, wo, col.data());
    MatrixMap<Scalar> ym(y.data() + b * co * ho * wo, co, ho * wo);
    ym.noalias() = wm * col;
    ym.colwise() += bias.array().matrix();
  }
  return y;
}

template <typename Scalar>
void conv3x3_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& w, Index stride,
                      const Tensor<Scalar>& grad_y, Tensor<Scalar>* grad_x,
                      Tensor<Scalar>* grad_w, Tensor<Scalar>* grad_bias) {
  const Index co = w.dim(0), ci = w.dim(1);
  const Index batch = x.dim(0), h = x.dim(2), wd = x.dim(3);
  const Index ho = conv_out_extent(h, stride), wo = conv_out_extent(wd, stride);
  RowMatrix<Scalar> col(ci * 9, ho * wo);
  RowMatrix<Scalar> dcol;
  auto wm = w.matrix(co, ci * 9);
  for (Index b = 0; b < batch; ++b) {
    ConstMatrixMap<Scalar> gy(grad_y.data() + b * co * ho * wo, co, ho * wo);
    if (grad_bias) grad_bias->array().matrix() += gy.rowwise().sum();
    if (grad_w) {
      im2col3x3(x.data() + b * ci * h * wd, ci, h, wd, stride, ho, wo, col.data());
      grad_w->matrix(co, ci * 9).noalias() += gy * col.transpose();
    }
    if (grad_x) {
      dcol.noalias() = wm.transpose() * gy;
      col2im3x3(dcol.data(), ci, h, wd, stride, ho, wo, grad_x->data() + b * ci * h * wd);
    }
  }
}

#define DUALFREQ_INSTANTIATE_KERNELS(S)                                                          \
  template Tensor<S> matmul(const Tensor<S>&, const Tensor<S>&, bool);                           \
  template void matmul_backward(const Tensor<S>&, const Tensor<S>&, bool, const Tensor<S>&,      \
                                Tensor<S>*, Tensor<S>*);                                         \
  template Tensor<S> softmax(const Tensor<S>&, Index);                                           \
  template void softmax_backward(const Tensor<S>&, const Tensor<S>&, Index, Tensor<S>*);         \
  template Tensor<S> gelu(const Tensor<S>&);                                                     \
  template void gelu_backward(const Tensor<S>&, const Tensor<S>&, Tensor<S>*);                   \
  template Tensor<S> linear(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);               \
  template void linear_backward(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,            \
                                Tensor<S>*, Tensor<S>*, Tensor<S>*);                             \
  template Tensor<S> layernorm(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, NormAxes,   \
                               S, LayerNormCache<S>*);                                           \
  template void layernorm_backward(const LayerNormCache<S>&, const Tensor<S>&, NormAxes,         \
                                   const Tensor<S>&, Tensor<S>*, Tensor<S>*, Tensor<S>*);        \
  template Tensor<S> conv1x1(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);              \
  template void conv1x1_backward(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,           \
                                 Tensor<S>*, Tensor<S>*, Tensor<S>*);                            \
  template Tensor<S> depthwise_conv3x3(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);    \
  template void depthwise_conv3x3_backward(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, \
                                           Tensor<S>*, Tensor<S>*, Tensor<S>*);                  \
  template Tensor<S> conv3x3(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, Index);       \
  template void conv3x3_backward(const Tensor<S>&, const Tensor<S>&, Index, const Tensor<S>&,    \
                                 Tensor<S>*, Tensor<S>*, Tensor<S>*);

DUALFREQ_INSTANTIATE_KERNELS(float)
DUALFREQ_INSTANTIATE_KERNELS(double)

}  // namespace dualfreq::kernels
