#include "bevocc/view_transform.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "bevocc/nn.hpp"

namespace bevocc {

void DepthBinSpec::validate() const {
  if (!(d_min > 0.0)) throw std::invalid_argument("DepthBinSpec: d_min must be > 0");
  if (!(d_max > d_min)) throw std::invalid_argument("DepthBinSpec: d_max must exceed d_min");
  if (count < 1) throw std::invalid_argument("DepthBinSpec: need at least one bin");
}

Tensor build_frustum(const Camera& cam, const DepthBinSpec& bins) {
  cam.validate();
  bins.validate();
  const Mat3 k_inv = cam.intrinsics.inverse();
  const Mat4 cam_to_ego = cam.ego_to_cam.rigid_inverse();
  const int64_t h = cam.image_h, w = cam.image_w, d_n = bins.count;

  Tensor out{{h, w, d_n, 3}};
  double* o = out.data();
  for (int64_t v = 0; v < h; ++v) {
    for (int64_t u = 0; u < w; ++u) {
      const Vec3 ray = k_inv * Vec3{static_cast<double>(u), static_cast<double>(v), 1.0};
      for (int64_t d = 0; d < d_n; ++d) {
        const Vec3 p_ego = cam_to_ego.transform_point(ray * bins.center(d));
        double* p = o + ((v * w + u) * d_n + d) * 3;
        p[0] = p_ego.x;
        p[1] = p_ego.y;
        p[2] = p_ego.z;
      }
    }
  }
  return out;
}

Tensor lift(const Tensor& depth_logits, const Tensor& context) {
  if (depth_logits.rank() != 3 || context.rank() != 3)
    throw std::invalid_argument("lift: expected [D, H', W'] depth logits and [C2, H', W'] context");
  const int64_t d_n = depth_logits.dim(0), h = depth_logits.dim(1), w = depth_logits.dim(2);
  const int64_t c_n = context.dim(0);
  if (context.dim(1) != h || context.dim(2) != w)
    throw std::invalid_argument("lift: depth logits " + shape_string(depth_logits.dims()) +
                                " and context " + shape_string(context.dims()) +
                                " disagree on image dims");

  const Tensor prob = channel_softmax(depth_logits);
  Tensor out{{h, w, d_n, c_n}};
  const double* pd = prob.data();
  const double* ctx = context.data();
  double* o = out.data();
  for (int64_t v = 0; v < h; ++v)
    for (int64_t u = 0; u < w; ++u)
      for (int64_t d = 0; d < d_n; ++d) {
        const double p = pd[(d * h + v) * w + u];
        double* row = o + ((v * w + u) * d_n + d) * c_n;
        for (int64_t c = 0; c < c_n; ++c) row[c] = p * ctx[(c * h + v) * w + u];
      }
  return out;
}

namespace {

// Voxel index of an ego point on `grid`, or false when out of range.
inline bool locate(const VoxelGridSpec& grid, double x, double y, double z, int64_t& i, int64_t& j,
                   int64_t& k) {
  const double fi = std::floor((x - grid.range[0]) / grid.step_h());
  const double fj = std::floor((y - grid.range[1]) / grid.step_w());
  const double fk = std::floor((z - grid.range[2]) / grid.step_z());
  if (fi < 0.0 || fj < 0.0 || fk < 0.0) return false;
  i = static_cast<int64_t>(fi);
  j = static_cast<int64_t>(fj);
  k = static_cast<int64_t>(fk);
  return i < grid.dims[0] && j < grid.dims[1] && k < grid.dims[2];
}

void check_pool_args(const std::vector<Tensor>& frustums, const std::vector<Tensor>& lifted,
                     const VoxelGridSpec& grid) {
  grid.validate();
  if (frustums.empty() || frustums.size() != lifted.size())
    throw std::invalid_argument("voxel_pool: need matching per-camera frustum/lifted lists");
  for (size_t n = 0; n < frustums.size(); ++n) {
    const Tensor& f = frustums[n];
    const Tensor& l = lifted[n];
    if (f.rank() != 4 || f.dims().back() != 3)
      throw std::invalid_argument("voxel_pool: frustum must be [H', W', D, 3], got " +
                                  shape_string(f.dims()));
    if (l.rank() != 4 || l.dim(0) != f.dim(0) || l.dim(1) != f.dim(1) || l.dim(2) != f.dim(2))
      throw std::invalid_argument("voxel_pool: lifted " + shape_string(l.dims()) +
                                  " does not match frustum " + shape_string(f.dims()));
    if (l.dim(3) != lifted[0].dim(3))
      throw std::invalid_argument("voxel_pool: cameras disagree on channel count");
  }
}

}  // namespace

Tensor voxel_pool(const std::vector<Tensor>& frustums, const std::vector<Tensor>& lifted,
                  const VoxelGridSpec& grid) {
  check_pool_args(frustums, lifted, grid);
  const int64_t c_n = lifted[0].dim(3);
  const int64_t gh = grid.dims[0], gw = grid.dims[1], gz = grid.dims[2];
  Tensor out{{c_n, gh, gw, gz}};
  double* o = out.data();

  for (size_t cam = 0; cam < frustums.size(); ++cam) {
    const Tensor& f = frustums[cam];
    const Tensor& l = lifted[cam];
    const double* fp = f.data();
    const double* lp = l.data();
    const int64_t points = f.size() / 3;
    for (int64_t idx = 0; idx < points; ++idx) {
      int64_t i, j, k;
      if (!locate(grid, fp[idx * 3], fp[idx * 3 + 1], fp[idx * 3 + 2], i, j, k)) continue;
      const int64_t voxel = (i * gw + j) * gz + k;
      const double* feat = lp + idx * c_n;
      for (int64_t c = 0; c < c_n; ++c) o[c * gh * gw * gz + voxel] += feat[c];
    }
  }
  return out;
}

std::vector<Tensor> voxel_pool_backward(const std::vector<Tensor>& frustums,
                                        const VoxelGridSpec& grid, int64_t channels,
                                        const Tensor& grad_out) {
  grid.validate();
  const int64_t gh = grid.dims[0], gw = grid.dims[1], gz = grid.dims[2];
  if (grad_out.dims() != std::vector<int64_t>{channels, gh, gw, gz})
    throw std::invalid_argument("voxel_pool_backward: grad_out shape " +
                                shape_string(grad_out.dims()) + " does not match grid");
  std::vector<Tensor> grads;
  grads.reserve(frustums.size());
  const double* go = grad_out.data();
  for (const Tensor& f : frustums) {
    if (f.rank() != 4 || f.dims().back() != 3)
      throw std::invalid_argument("voxel_pool_backward: frustum must be [H', W', D, 3]");
    Tensor g{{f.dim(0), f.dim(1), f.dim(2), channels}};
    double* gp = g.data();
    const double* fp = f.data();
    const int64_t points = f.size() / 3;
    for (int64_t idx = 0; idx < points; ++idx) {
      int64_t i, j, k;
      if (!locate(grid, fp[idx * 3], fp[idx * 3 + 1], fp[idx * 3 + 2], i, j, k)) continue;
      const int64_t voxel = (i * gw + j) * gz + k;
      for (int64_t c = 0; c < channels; ++c) gp[idx * channels + c] = go[c * gh * gw * gz + voxel];
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

DepthTargets depth_targets(const Tensor& depth_map, const DepthBinSpec& bins) {
  bins.validate();
  if (depth_map.rank() != 2)
    throw std::invalid_argument("depth_targets: expected [H', W'], got " +
                                shape_string(depth_map.dims()));
  const int64_t h = depth_map.dim(0), w = depth_map.dim(1), d_n = bins.count;
  DepthTargets out;
  out.one_hot = Tensor{{d_n, h, w}};
  out.valid = Tensor{{h, w}};
  const double* d = depth_map.data();
  double* oh = out.one_hot.data();
  double* vm = out.valid.data();
  for (int64_t i = 0; i < h * w; ++i) {
    const double depth = d[i];
    if (depth < bins.d_min || depth >= bins.d_max) continue;
    const auto bin = static_cast<int64_t>(std::floor((depth - bins.d_min) / bins.width()));
    if (bin < 0 || bin >= d_n) continue;  // floating-point edge of the last bin
    oh[bin * h * w + i] = 1.0;
    vm[i] = 1.0;
  }
  return out;
}

}  // namespace bevocc
