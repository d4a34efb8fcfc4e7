#include "bevocc/geometry.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace bevocc {

double Vec3::norm() const { return std::sqrt(x * x + y * y + z * z); }

Vec3 Vec3::normalized() const {
  const double n = norm();
  if (n <= 0.0) throw std::invalid_argument("Vec3: cannot normalize zero vector");
  return {x / n, y / n, z / n};
}

Mat3 Mat3::identity() {
  Mat3 r;
  r.m = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  return r;
}

Vec3 Mat3::operator*(const Vec3& v) const {
  return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
          m[3] * v.x + m[4] * v.y + m[5] * v.z,
          m[6] * v.x + m[7] * v.y + m[8] * v.z};
}

Mat3 Mat3::operator*(const Mat3& o) const {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
      r(i, j) = s;
    }
  return r;
}

Mat3 Mat3::transposed() const {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
  return r;
}

Mat3 Mat3::inverse() const {
  const double a = m[0], b = m[1], c = m[2];
  const double d = m[3], e = m[4], f = m[5];
  const double g = m[6], h = m[7], i = m[8];
  const double det = a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g);
  if (std::abs(det) < 1e-12) throw std::invalid_argument("Mat3: singular matrix");
  Mat3 r;
  r.m = {(e * i - f * h) / det, (c * h - b * i) / det, (b * f - c * e) / det,
         (f * g - d * i) / det, (a * i - c * g) / det, (c * d - a * f) / det,
         (d * h - e * g) / det, (b * g - a * h) / det, (a * e - b * d) / det};
  return r;
}

Mat4 Mat4::identity() {
  Mat4 r;
  r.m = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
  return r;
}

Mat3 Mat4::rotation() const {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r(i, j) = (*this)(i, j);
  return r;
}

Vec3 Mat4::translation() const { return {m[3], m[7], m[11]}; }

Vec3 Mat4::transform_point(const Vec3& p) const {
  return {m[0] * p.x + m[1] * p.y + m[2] * p.z + m[3],
          m[4] * p.x + m[5] * p.y + m[6] * p.z + m[7],
          m[8] * p.x + m[9] * p.y + m[10] * p.z + m[11]};
}

Mat4 Mat4::rigid_inverse() const {
  const Mat3 rt = rotation().transposed();
  const Vec3 t = translation();
  const Vec3 nt = rt * t;
  Mat4 r = Mat4::identity();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r(i, j) = rt(i, j);
  r(0, 3) = -nt.x;
  r(1, 3) = -nt.y;
  r(2, 3) = -nt.z;
  return r;
}

Vec3 Mat34::apply(const Vec3& p) const {
  return {m[0] * p.x + m[1] * p.y + m[2] * p.z + m[3],
          m[4] * p.x + m[5] * p.y + m[6] * p.z + m[7],
          m[8] * p.x + m[9] * p.y + m[10] * p.z + m[11]};
}

void VoxelGridSpec::validate() const {
  if (!(range[3] > range[0] && range[4] > range[1] && range[5] > range[2]))
    throw std::invalid_argument("VoxelGridSpec: range end must exceed range start per axis");
  if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1)
    throw std::invalid_argument("VoxelGridSpec: grid dims must be >= 1");
}

std::array<double, 3> VoxelGridSpec::voxel_size() const {
  return {step_w(), step_h(), step_z()};
}

VoxelGridSpec VoxelGridSpec::half() const {
  for (int64_t d : dims)
    if (d % 2 != 0)
      throw std::invalid_argument("VoxelGridSpec: half() requires even dims, got " +
                                  shape_string({dims[0], dims[1], dims[2]}));
  VoxelGridSpec h = *this;
  h.dims = {dims[0] / 2, dims[1] / 2, dims[2] / 2};
  return h;
}

void Camera::validate() const {
  const Mat3& k = intrinsics;
  if (k(1, 0) != 0.0 || k(2, 0) != 0.0 || k(2, 1) != 0.0)
    throw std::invalid_argument("Camera: intrinsics must be upper triangular");
  if (!(k(0, 0) > 0.0 && k(1, 1) > 0.0))
    throw std::invalid_argument("Camera: focal entries must be positive");
  if (image_h < 1 || image_w < 1)
    throw std::invalid_argument("Camera: image dims must be >= 1");
  // Rotation orthonormality within 1e-9, and an affine last row.
  const Mat3 r = ego_to_cam.rotation();
  const Mat3 rrt = r * r.transposed();
  const Mat3 id = Mat3::identity();
  for (int i = 0; i < 9; ++i)
    if (std::abs(rrt.m[static_cast<size_t>(i)] - id.m[static_cast<size_t>(i)]) > 1e-9)
      throw std::invalid_argument("Camera: extrinsic rotation is not orthonormal");
  if (std::abs(ego_to_cam(3, 0)) > 1e-12 || std::abs(ego_to_cam(3, 1)) > 1e-12 ||
      std::abs(ego_to_cam(3, 2)) > 1e-12 || std::abs(ego_to_cam(3, 3) - 1.0) > 1e-12)
    throw std::invalid_argument("Camera: extrinsic last row must be (0, 0, 0, 1)");
}

void CameraRig::validate() const {
  if (cameras.empty()) throw std::invalid_argument("CameraRig: need at least one camera");
  for (const Camera& c : cameras) c.validate();
}

Tensor voxel_centers(const VoxelGridSpec& spec) {
  spec.validate();
  const int64_t h = spec.dims[0], w = spec.dims[1], z = spec.dims[2];
  const double sh = spec.step_h(), sw = spec.step_w(), sz = spec.step_z();
  Tensor out{{h, w, z, 3}};
  double* o = out.data();
  for (int64_t i = 0; i < h; ++i) {
    const double cx = spec.range[0] + (static_cast<double>(i) + 0.5) * sh;
    for (int64_t j = 0; j < w; ++j) {
      const double cy = spec.range[1] + (static_cast<double>(j) + 0.5) * sw;
      for (int64_t k = 0; k < z; ++k) {
        const double cz = spec.range[2] + (static_cast<double>(k) + 0.5) * sz;
        double* p = o + ((i * w + j) * z + k) * 3;
        p[0] = cx;
        p[1] = cy;
        p[2] = cz;
      }
    }
  }
  return out;
}

Mat34 compose_e2i(const Camera& cam) {
  cam.validate();
  Mat34 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += cam.intrinsics(i, k) * cam.ego_to_cam(k, j);
      r(i, j) = s;
    }
  return r;
}

Projection project_point(const Mat34& e2i, const Vec3& p, int64_t image_h, int64_t image_w) {
  const Vec3 q = e2i.apply(p);
  Projection out;
  out.depth = q.z;
  if (q.z <= 1e-6) return out;  // behind or too close to the camera plane
  out.u = q.x / q.z;
  out.v = q.y / q.z;
  out.valid = out.u >= 0.0 && out.u <= static_cast<double>(image_w - 1) && out.v >= 0.0 &&
              out.v <= static_cast<double>(image_h - 1);
  return out;
}

ProjectedPoints project_points(const Tensor& points, const Camera& cam) {
  if (points.rank() < 1 || points.dims().back() != 3)
    throw std::invalid_argument("project_points: expected [..., 3], got " +
                                shape_string(points.dims()));
  const Mat34 e2i = compose_e2i(cam);
  const int64_t n = points.size() / 3;

  std::vector<int64_t> base(points.dims().begin(), points.dims().end() - 1);
  std::vector<int64_t> uv_dims = base;
  uv_dims.push_back(2);
  ProjectedPoints out;
  out.uv = Tensor{uv_dims};
  out.depth = Tensor{base.empty() ? std::vector<int64_t>{1} : base};
  out.valid.assign(static_cast<size_t>(n), 0);

  const double* p = points.data();
  double* uv = out.uv.data();
  double* d = out.depth.data();
  for (int64_t i = 0; i < n; ++i) {
    const Projection pr =
        project_point(e2i, {p[i * 3], p[i * 3 + 1], p[i * 3 + 2]}, cam.image_h, cam.image_w);
    uv[i * 2] = pr.u;
    uv[i * 2 + 1] = pr.v;
    d[i] = pr.depth;
    out.valid[static_cast<size_t>(i)] = pr.valid ? 1 : 0;
  }
  return out;
}

}  // namespace bevocc
