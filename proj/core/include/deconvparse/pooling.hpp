#pragma once

#include <cstdint>
#include <vector>

#include "deconvparse/tensor.hpp"

namespace deconvparse {

// Pooling region: `depth` adjacent feature maps by `h` x `w` spatial cells.
// {1, r, r} is plain 2D spatial pooling.
struct PoolRegion {
  std::size_t depth = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  std::size_t volume() const { return depth * h * w; }
  bool operator==(const PoolRegion&) const = default;
};

// Recorded argmax locations of one pooling stage. Each pooled cell stores
// the flat index of its selected element inside its region, enumerated
// row-major as (local_depth, local_row, local_col).
struct SwitchSet {
  std::vector<std::size_t> pooled_shape;  // [maps, ph, pw]
  PoolRegion region;
  std::vector<std::uint32_t> index;  // one entry per pooled cell

  std::size_t cells() const { return index.size(); }
  // Shape of the tensor the switches were taken from: [maps*depth, ph*h, pw*w].
  std::vector<std::size_t> source_shape() const {
    return {pooled_shape[0] * region.depth, pooled_shape[1] * region.h,
            pooled_shape[2] * region.w};
  }
};

struct PoolResult {
  Tensor pooled;
  SwitchSet switches;
};

// 3D max pooling over disjoint regions. Selection is by maximum absolute
// value with the sign preserved in the output; ties break to the lowest
// flat index. z must be [K,H,W] with K,H,W divisible by the region extents.
PoolResult pool(const Tensor& z, PoolRegion region);

// Fixed-switch pooling p = P_s z: each pooled cell copies the element the
// switch selects. Exact adjoint of unpool.
Tensor pool_fixed(const Tensor& z, const SwitchSet& s);

// Unpooling U_s: places pooled values at their switch positions, zeros
// elsewhere. Output has shape s.source_shape().
Tensor unpool(const Tensor& p, const SwitchSet& s);

}  // namespace deconvparse
