#include "dualfreq/windows.hpp"

#include <map>
#include <mutex>
#include <tuple>

namespace dualfreq {
namespace {

// Index maps depend only on the layout, and training asks for the same few
// over and over.
using LayoutKey = std::tuple<int, Index, Index, Index, Index, Index>;

template <typename Build>
Permutation cached(const LayoutKey& key, Build build) {
  static std::mutex mutex;
  static std::map<LayoutKey, Permutation> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  if (cache.size() > 256) cache.clear();
  auto perm = build();
  cache.emplace(key, perm);
  return perm;
}

template <typename Scalar>
Tensor<Scalar> apply(const Tensor<Scalar>& x, const Permutation& perm, Shape shape) {
  const auto& idx = *perm;
  if (static_cast<Index>(idx.size()) != x.size() || shape_size(shape) != x.size()) {
    throw DimensionError("permutation length does not match " + shape_str(x.shape()));
  }
  Tensor<Scalar> y(std::move(shape));
  for (std::size_t i = 0; i < idx.size(); ++i) y[static_cast<Index>(i)] = x[idx[i]];
  return y;
}

void check_windowed(const Shape& shape, const WindowGrid& grid, const char* what) {
  if (shape != grid.windowed_shape()) {
    throw DimensionError(std::string(what) + ": expected " + shape_str(grid.windowed_shape()) +
                         ", got " + shape_str(shape));
  }
}

}  // namespace

WindowGrid window_grid(const Shape& image, Index side) {
  require_rank(image, 4, "window_partition");
  if (side < 1 || image[2] % side != 0 || image[3] % side != 0) {
    throw DimensionError("window side " + std::to_string(side) + " does not divide " +
                         shape_str(image));
  }
  return {image[0], image[1], image[2], image[3], side};
}

namespace {

Permutation build_partition(const WindowGrid& g) {
  auto perm = std::make_shared<std::vector<Index>>();
  perm->reserve(static_cast<std::size_t>(g.batch * g.channels * g.height * g.width));
  const Index b = g.side;
  for (Index bb = 0; bb < g.batch; ++bb)
    for (Index wi = 0; wi < g.rows(); ++wi)
      for (Index wj = 0; wj < g.cols(); ++wj)
        for (Index c = 0; c < g.channels; ++c)
          for (Index pi = 0; pi < b; ++pi)
            for (Index pj = 0; pj < b; ++pj)
              perm->push_back(((bb * g.channels + c) * g.height + wi * b + pi) * g.width + wj * b + pj);
  return perm;
}

}  // namespace

Permutation invert_permutation(const Permutation& perm) {
  auto inv = std::make_shared<std::vector<Index>>(perm->size());
  for (std::size_t i = 0; i < perm->size(); ++i) {
    (*inv)[static_cast<std::size_t>((*perm)[i])] = static_cast<Index>(i);
  }
  return inv;
}

Permutation window_partition_permutation(const WindowGrid& g) {
  return cached({0, g.batch, g.channels, g.height, g.width, g.side},
                [&g] { return build_partition(g); });
}

Permutation window_inverse_permutation(const WindowGrid& g) {
  return cached({1, g.batch, g.channels, g.height, g.width, g.side},
                [&g] { return invert_permutation(build_partition(g)); });
}

template <typename Scalar>
Tensor<Scalar> window_partition(const Tensor<Scalar>& x, Index side) {
  const auto grid = window_grid(x.shape(), side);
  return apply(x, window_partition_permutation(grid), grid.windowed_shape());
}

template <typename Scalar>
Tensor<Scalar> window_inverse(const Tensor<Scalar>& windows, const WindowGrid& grid) {
  check_windowed(windows.shape(), grid, "window_inverse");
  return apply(windows, window_inverse_permutation(grid), grid.image_shape());
}

template <typename Scalar>
Var<Scalar> window_partition(const Var<Scalar>& x, Index side) {
  const auto grid = window_grid(x.shape(), side);
  return gather(x, window_partition_permutation(grid), grid.windowed_shape());
}

template <typename Scalar>
Var<Scalar> window_inverse(const Var<Scalar>& windows, const WindowGrid& grid) {
  check_windowed(windows.shape(), grid, "window_inverse");
  return gather(windows, window_inverse_permutation(grid), grid.image_shape());
}

TileGrid tile_grid(const Shape& stacked) {
  require_rank(stacked, 5, "dwt_window_tile");
  if (stacked[1] != 4) throw DimensionError("dwt_window_tile: expected 4 subbands, got " + shape_str(stacked));
  if (stacked[3] % 2 != 0 || stacked[4] % 2 != 0) {
    throw DimensionError("dwt_window_tile: subband extents must be even, got " + shape_str(stacked));
  }
  return {stacked[0], stacked[2], stacked[3], stacked[4]};
}

// Both layouts map (b, s, c, y, x) to ((b*C + c)*4 + s)*hw + pos; they differ only in pos.
template <typename PosFn>
Permutation layout_permutation(const TileGrid& g, PosFn pos) {
  const Index hw = g.h * g.w;
  auto perm = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(g.batch * 4 * g.channels * hw));
  for (Index b = 0; b < g.batch; ++b)
    for (Index s = 0; s < 4; ++s)
      for (Index c = 0; c < g.channels; ++c)
        for (Index y = 0; y < g.h; ++y)
          for (Index x = 0; x < g.w; ++x) {
            const Index src = (((b * 4 + s) * g.channels + c) * g.h + y) * g.w + x;
            const Index dst = ((b * g.channels + c) * 4 + s) * hw + pos(y, x);
            (*perm)[static_cast<std::size_t>(dst)] = src;
          }
  return perm;
}

Permutation build_tile(const TileGrid& g, bool tiled_layout) {
  const Index w = g.w, half_w = g.w / 2;
  if (!tiled_layout) return layout_permutation(g, [w](Index y, Index x) { return y * w + x; });
  return layout_permutation(g, [half_w](Index y, Index x) {
    return 4 * ((y / 2) * half_w + x / 2) + (y % 2) * 2 + x % 2;
  });
}

Permutation tile_permutation(const TileGrid& g, bool tiled_layout, bool inverse) {
  const int kind = 2 + (tiled_layout ? 0 : 1) + (inverse ? 2 : 0);
  return cached({kind, g.batch, g.channels, g.h, g.w, 0}, [&] {
    auto perm = build_tile(g, tiled_layout);
    return inverse ? invert_permutation(perm) : perm;
  });
}

Permutation dwt_tile_permutation(const TileGrid& g) { return tile_permutation(g, true, false); }

Permutation dwt_flat_permutation(const TileGrid& g) { return tile_permutation(g, false, false); }

template <typename Scalar>
TiledFeatures<Scalar> dwt_window_tile(const Tensor<Scalar>& ihat) {
  const auto grid = tile_grid(ihat.shape());
  return {apply(ihat, dwt_tile_permutation(grid), grid.tiled_shape()), grid};
}

template <typename Scalar>
Tensor<Scalar> dwt_window_untile(const TiledFeatures<Scalar>& tiled) {
  if (tiled.data.shape() != tiled.grid.tiled_shape()) {
    throw DimensionError("dwt_window_untile: data " + shape_str(tiled.data.shape()) +
                         " does not match grid " + shape_str(tiled.grid.tiled_shape()));
  }
  return apply(tiled.data, tile_permutation(tiled.grid, true, true), tiled.grid.stacked_shape());
}

template <typename Scalar>
Var<Scalar> dwt_window_tile(const Var<Scalar>& ihat, bool tiled_layout) {
  const auto grid = tile_grid(ihat.shape());
  return gather(ihat, tile_permutation(grid, tiled_layout, false), grid.tiled_shape());
}

template <typename Scalar>
Var<Scalar> dwt_window_untile(const Var<Scalar>& tiled, const TileGrid& grid, bool tiled_layout) {
  if (tiled.shape() != grid.tiled_shape()) {
    throw DimensionError("dwt_window_untile: data " + shape_str(tiled.shape()) +
                         " does not match grid " + shape_str(grid.tiled_shape()));
  }
  return gather(tiled, tile_permutation(grid, tiled_layout, true), grid.stacked_shape());
}

#define DUALFREQ_INSTANTIATE_WINDOWS(S)                                                  \
  template Tensor<S> window_partition(const Tensor<S>&, Index);                          \
  template Tensor<S> window_inverse(const Tensor<S>&, const WindowGrid&);                \
  template Var<S> window_partition(const Var<S>&, Index);                                \
  template Var<S> window_inverse(const Var<S>&, const WindowGrid&);                      \
  template TiledFeatures<S> dwt_window_tile(const Tensor<S>&);                           \
  template Tensor<S> dwt_window_untile(const TiledFeatures<S>&);                         \
  template Var<S> dwt_window_tile(const Var<S>&, bool);                                  \
  template Var<S> dwt_window_untile(const Var<S>&, const TileGrid&, bool);

DUALFREQ_INSTANTIATE_WINDOWS(float)
DUALFREQ_INSTANTIATE_WINDOWS(double)

}  // namespace dualfreq
