#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "bevocc/tensor.hpp"

namespace bevocc {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const;
  Vec3 normalized() const;
};

// Row-major 3x3.
struct Mat3 {
  std::array<double, 9> m{};

  static Mat3 identity();
  double operator()(int r, int c) const { return m[static_cast<size_t>(r * 3 + c)]; }
  double& operator()(int r, int c) { return m[static_cast<size_t>(r * 3 + c)]; }
  Vec3 operator*(const Vec3& v) const;
  Mat3 operator*(const Mat3& o) const;
  Mat3 transposed() const;
  // Adjugate inverse; throws std::invalid_argument on a singular matrix.
  Mat3 inverse() const;
};

// Row-major 4x4 affine transform; the last row must be (0, 0, 0, 1).
struct Mat4 {
  std::array<double, 16> m{};

  static Mat4 identity();
  double operator()(int r, int c) const { return m[static_cast<size_t>(r * 4 + c)]; }
  double& operator()(int r, int c) { return m[static_cast<size_t>(r * 4 + c)]; }
  Mat3 rotation() const;
  Vec3 translation() const;
  Vec3 transform_point(const Vec3& p) const;
  // Inverse of a rigid transform: [R|t]^-1 = [R^T | -R^T t].
  Mat4 rigid_inverse() const;
};

// Row-major 3x4 projection (K * [R|t]).
struct Mat34 {
  std::array<double, 12> m{};

  double operator()(int r, int c) const { return m[static_cast<size_t>(r * 4 + c)]; }
  double& operator()(int r, int c) { return m[static_cast<size_t>(r * 4 + c)]; }
  // Applies to the homogeneous point [p, 1]; returns (u*d, v*d, d).
  Vec3 apply(const Vec3& p) const;
};

// Perception range plus grid resolution. Range order is
// [H_s, W_s, Z_s, H_e, W_e, Z_e] in meters, dims [H, W, Z] voxel counts.
// Ego axes map as x <-> H, y <-> W, z <-> Z.
struct VoxelGridSpec {
  std::array<double, 6> range{};
  std::array<int64_t, 3> dims{};

  void validate() const;
  // Voxel shape [(W_e-W_s)/W, (H_e-H_s)/H, (Z_e-Z_s)/Z].
  std::array<double, 3> voxel_size() const;
  double step_h() const { return (range[3] - range[0]) / static_cast<double>(dims[0]); }
  double step_w() const { return (range[4] - range[1]) / static_cast<double>(dims[1]); }
  double step_z() const { return (range[5] - range[2]) / static_cast<double>(dims[2]); }
  int64_t voxel_count() const { return dims[0] * dims[1] * dims[2]; }
  // Same range at half resolution; all dims must be even.
  VoxelGridSpec half() const;
};

// Pinhole camera: intrinsics K (upper triangular, positive focals) and the
// rigid ego-to-camera transform. Camera frame is x right, y down, z forward;
// integer pixel coordinates are pixel centers.
struct Camera {
  Mat3 intrinsics;
  Mat4 ego_to_cam = Mat4::identity();
  int64_t image_h = 0;
  int64_t image_w = 0;

  void validate() const;
};

// Ordered multi-camera rig; order is significant (deterministic means).
struct CameraRig {
  std::vector<Camera> cameras;

  void validate() const;
  size_t size() const { return cameras.size(); }
};

// Voxel center positions in ego coordinates, [H, W, Z, 3]:
// center(i,j,k) = range_start + (index + 0.5) * step per axis.
Tensor voxel_centers(const VoxelGridSpec& spec);

// T_e2i = K * [R|t] as a 3x4 matrix.
Mat34 compose_e2i(const Camera& cam);

struct Projection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
  bool valid = false;
};

// Depth must exceed 1e-6 and (u, v) must fall in [0, W'-1] x [0, H'-1] for a
// valid hit, so bilinear sampling at a valid point never reads outside the
// feature map.
Projection project_point(const Mat34& e2i, const Vec3& p, int64_t image_h, int64_t image_w);

struct ProjectedPoints {
  Tensor uv;                   // [..., 2]
  Tensor depth;                // [...]
  std::vector<uint8_t> valid;  // flattened [...]
};

// Projects a [..., 3] tensor of ego points through one camera.
ProjectedPoints project_points(const Tensor& points, const Camera& cam);

}  // namespace bevocc
