#pragma once

#include <vector>

#include "bevocc/geometry.hpp"
#include "bevocc/tensor.hpp"

namespace bevocc {

// Uniform depth discretization along the camera z axis.
struct DepthBinSpec {
  double d_min = 0.0;
  double d_max = 0.0;
  int64_t count = 0;

  void validate() const;
  double width() const { return (d_max - d_min) / static_cast<double>(count); }
  double center(int64_t i) const { return d_min + (static_cast<double>(i) + 0.5) * width(); }
};

// Ego-frame point for every (pixel, depth bin center), [H', W', D, 3]:
// p_ego = T_e2c^-1 * (d * K^-1 * [u, v, 1]).
Tensor build_frustum(const Camera& cam, const DepthBinSpec& bins);

// Softmax over depth bins times context, [H', W', D, C2]:
// out[v, u, d, c] = softmax(depth)[d, v, u] * context[c, v, u].
Tensor lift(const Tensor& depth_logits, const Tensor& context);

// Sum-accumulates every in-range frustum point's feature vector into the
// voxel containing it. Voxel intervals are half-open per axis, so a point on
// an upper boundary belongs to the next voxel. Accumulation order is fixed
// (camera, then v, u, d) for bit determinism. Output [C2, H, W, Z] on `grid`
// (callers pass the half-resolution grid).
Tensor voxel_pool(const std::vector<Tensor>& frustums, const std::vector<Tensor>& lifted,
                  const VoxelGridSpec& grid);

// Gradient of voxel_pool with respect to each camera's lifted features.
std::vector<Tensor> voxel_pool_backward(const std::vector<Tensor>& frustums,
                                        const VoxelGridSpec& grid, int64_t channels,
                                        const Tensor& grad_out);

struct DepthTargets {
  Tensor one_hot;  // [D, H', W']
  Tensor valid;    // [H', W'], 1 where d_min <= depth < d_max
};

// Bin index floor((d - d_min) / bin width); pixels outside [d_min, d_max)
// are masked out of the depth loss.
DepthTargets depth_targets(const Tensor& depth_map, const DepthBinSpec& bins);

}  // namespace bevocc
