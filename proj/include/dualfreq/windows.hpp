#pragma once

#include "dualfreq/autodiff.hpp"
#include "dualfreq/tensor.hpp"

namespace dualfreq {

// Non-overlapping b x b windows over a [B, C, H, W] map.
struct WindowGrid {
  Index batch = 0, channels = 0, height = 0, width = 0, side = 0;

  Index rows() const { return height / side; }
  Index cols() const { return width / side; }
  Index windows() const { return batch * rows() * cols(); }  // S
  Index positions() const { return side * side; }            // N
  Shape image_shape() const { return {batch, channels, height, width}; }
  Shape windowed_shape() const { return {windows(), channels, positions()}; }
};

// Throws DimensionError unless H and W are multiples of b.
WindowGrid window_grid(const Shape& image, Index side);

// Flat-index maps: out[i] = in[perm[i]].
Permutation window_partition_permutation(const WindowGrid& grid);
Permutation window_inverse_permutation(const WindowGrid& grid);
Permutation invert_permutation(const Permutation& perm);

// [B, C, H, W] -> [S, C, N]. Windows run row-major over the grid, batch-major
// overall; positions inside a window are row-major.
template <typename Scalar>
Tensor<Scalar> window_partition(const Tensor<Scalar>& x, Index side);

// [S, C, N] -> [B, C, H, W].
template <typename Scalar>
Tensor<Scalar> window_inverse(const Tensor<Scalar>& windows, const WindowGrid& grid);

template <typename Scalar>
Var<Scalar> window_partition(const Var<Scalar>& x, Index side);

template <typename Scalar>
Var<Scalar> window_inverse(const Var<Scalar>& windows, const WindowGrid& grid);

// Subband layout of [B, 4, C, h, w] stacked DWT output.
struct TileGrid {
  Index batch = 0, channels = 0, h = 0, w = 0;

  Shape stacked_shape() const { return {batch, 4, channels, h, w}; }
  Shape tiled_shape() const { return {batch, channels, 4, h * w}; }
};

// h and w must be even for the tiled layout.
TileGrid tile_grid(const Shape& stacked);

// Tiled layout: row s of each (batch, channel) holds subband s as consecutive
// 2x2 blocks, blocks row-major, each block's 4 values row-major. A 4 x 4
// window over the result therefore covers the same spatial block in every
// subband.
Permutation dwt_tile_permutation(const TileGrid& grid);

// Plain raster layout with the same [B, C, 4, h*w] shape; used when tiling is
// switched off.
Permutation dwt_flat_permutation(const TileGrid& grid);

template <typename Scalar>
struct TiledFeatures {
  Tensor<Scalar> data;  // [B, C, 4, h*w]
  TileGrid grid;
};

template <typename Scalar>
TiledFeatures<Scalar> dwt_window_tile(const Tensor<Scalar>& ihat);

template <typename Scalar>
Tensor<Scalar> dwt_window_untile(const TiledFeatures<Scalar>& tiled);

template <typename Scalar>
Var<Scalar> dwt_window_tile(const Var<Scalar>& ihat, bool tiled_layout = true);

template <typename Scalar>
Var<Scalar> dwt_window_untile(const Var<Scalar>& tiled, const TileGrid& grid,
                              bool tiled_layout = true);

}  // namespace dualfreq
