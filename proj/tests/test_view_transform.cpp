#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bevocc/scenegen.hpp"
#include "bevocc/view_transform.hpp"
#include "support/helpers.hpp"

using namespace bevocc;
using namespace bevocc::testsupport;

namespace {

Camera identity_camera(int64_t h, int64_t w) {
  Camera cam;
  cam.intrinsics = Mat3::identity();
  cam.image_h = h;
  cam.image_w = w;
  return cam;
}

CameraRig test_rig(int64_t cameras, int64_t h = 8, int64_t w = 12) {
  RingRigSpec ring;
  ring.cameras = cameras;
  ring.image_h = h;
  ring.image_w = w;
  ring.fov_deg = 100.0;
  ring.height = 1.0;
  ring.pitch_deg = 12.0;
  ring.radius = 0.4;
  return make_ring_rig(ring);
}

VoxelGridSpec test_grid() {
  VoxelGridSpec grid;
  grid.range = {-4.0, -4.0, 0.0, 4.0, 4.0, 2.0};
  grid.dims = {8, 8, 4};
  return grid;
}

}  // namespace

TEST_CASE("depth bin spec arithmetic and validation") {
  DepthBinSpec bins{1.0, 5.0, 4};
  CHECK(bins.width() == 1.0);
  CHECK(bins.center(0) == 1.5);
  CHECK(bins.center(3) == 4.5);
  CHECK_THROWS_AS((DepthBinSpec{0.0, 5.0, 4}).validate(), std::invalid_argument);
  CHECK_THROWS_AS((DepthBinSpec{2.0, 1.0, 4}).validate(), std::invalid_argument);
  CHECK_THROWS_AS((DepthBinSpec{1.0, 2.0, 0}).validate(), std::invalid_argument);
}

TEST_CASE("frustum through an identity chain lands on the ray") {
  Camera cam = identity_camera(2, 2);
  DepthBinSpec bins{0.5, 1.5, 1};  // single bin centered at exactly 1
  const Tensor frustum = build_frustum(cam, bins);
  CHECK(frustum.dims() == std::vector<int64_t>{2, 2, 1, 3});
  CHECK(frustum(0, 0, 0, 0) == doctest::Approx(0.0));
  CHECK(frustum(0, 0, 0, 1) == doctest::Approx(0.0));
  CHECK(frustum(0, 0, 0, 2) == doctest::Approx(1.0));
}

TEST_CASE("doubling the bin depth doubles the camera-frame ray point") {
  Camera cam = identity_camera(3, 3);
  DepthBinSpec bins{0.5, 3.5, 2};  // centers 1.25 and 2.75... use ratio check instead
  const Tensor frustum = build_frustum(cam, bins);
  const double ratio = bins.center(1) / bins.center(0);
  for (int64_t v = 0; v < 3; ++v)
    for (int64_t u = 0; u < 3; ++u)
      for (int64_t a = 0; a < 3; ++a)
        CHECK(frustum(v, u, 1, a) == doctest::Approx(ratio * frustum(v, u, 0, a)).epsilon(1e-12));
}

TEST_CASE("re-projecting frustum points recovers pixel and depth") {
  const CameraRig rig = test_rig(3);
  DepthBinSpec bins{0.5, 6.5, 4};
  for (const Camera& cam : rig.cameras) {
    const Tensor frustum = build_frustum(cam, bins);
    const Mat34 e2i = compose_e2i(cam);
    for (int64_t v = 0; v < cam.image_h; ++v)
      for (int64_t u = 0; u < cam.image_w; ++u)
        for (int64_t d = 0; d < bins.count; ++d) {
          const Vec3 p{frustum(v, u, d, 0), frustum(v, u, d, 1), frustum(v, u, d, 2)};
          const Vec3 q = e2i.apply(p);
          CHECK(std::abs(q.z - bins.center(d)) < 1e-9);
          CHECK(std::abs(q.x / q.z - static_cast<double>(u)) < 1e-9);
          CHECK(std::abs(q.y / q.z - static_cast<double>(v)) < 1e-9);
        }
  }
}

TEST_CASE("lift: one-hot depth concentrates all context mass in one bin") {
  const int64_t d_n = 5, h = 2, w = 3, c_n = 2;
  Tensor depth{{d_n, h, w}};
  for (int64_t i = 0; i < h * w; ++i) depth.data()[3 * h * w + i] = 1000.0;
  SplitMix64 rng{31};
  const Tensor context = random_tensor(rng, {c_n, h, w});
  const Tensor lifted = lift(depth, context);
  CHECK(lifted.dims() == std::vector<int64_t>{h, w, d_n, c_n});
  for (int64_t v = 0; v < h; ++v)
    for (int64_t u = 0; u < w; ++u)
      for (int64_t c = 0; c < c_n; ++c) {
        CHECK(lifted(v, u, 3, c) == doctest::Approx(context(c, v, u)).epsilon(1e-12));
        CHECK(lifted(v, u, 0, c) == doctest::Approx(0.0).epsilon(1e-15));
      }
}

TEST_CASE("lift: uniform depth logits split the context evenly") {
  const Tensor depth{{4, 2, 2}, 0.7};
  SplitMix64 rng{32};
  const Tensor context = random_tensor(rng, {3, 2, 2});
  const Tensor lifted = lift(depth, context);
  for (int64_t v = 0; v < 2; ++v)
    for (int64_t u = 0; u < 2; ++u)
      for (int64_t d = 0; d < 4; ++d)
        for (int64_t c = 0; c < 3; ++c)
          CHECK(lifted(v, u, d, c) == doctest::Approx(context(c, v, u) / 4.0).epsilon(1e-12));
}

TEST_CASE("lift: summing over depth recovers the context exactly") {
  SplitMix64 rng{33};
  const Tensor depth = random_tensor(rng, {6, 4, 5}, -3.0, 3.0);
  const Tensor context = random_tensor(rng, {4, 4, 5}, -2.0, 2.0);
  const Tensor lifted = lift(depth, context);
  for (int64_t v = 0; v < 4; ++v)
    for (int64_t u = 0; u < 5; ++u)
      for (int64_t c = 0; c < 4; ++c) {
        double s = 0.0;
        for (int64_t d = 0; d < 6; ++d) s += lifted(v, u, d, c);
        CHECK(std::abs(s - context(c, v, u)) < 1e-12);
      }
  const Tensor bad_context = random_tensor(rng, {4, 5, 5});
  CHECK_THROWS_AS(lift(depth, bad_context), std::invalid_argument);
}

TEST_CASE("voxel_pool scatters a single in-range point") {
  const VoxelGridSpec grid = test_grid();
  // One-pixel, one-bin "camera": hand-build the frustum and lifted tensors.
  Tensor frustum{{1, 1, 1, 3}};
  frustum(0, 0, 0, 0) = -3.7;  // voxel i=0
  frustum(0, 0, 0, 1) = 0.1;   // j=4
  frustum(0, 0, 0, 2) = 0.3;   // k=0
  Tensor lifted{{1, 1, 1, 2}};
  lifted(0, 0, 0, 0) = 1.0;
  lifted(0, 0, 0, 1) = 2.0;
  const Tensor pooled = voxel_pool({frustum}, {lifted}, grid);
  CHECK(pooled.dims() == std::vector<int64_t>{2, 8, 8, 4});
  CHECK(pooled(0, 0, 4, 0) == 1.0);
  CHECK(pooled(1, 0, 4, 0) == 2.0);
  CHECK(pooled.sum() == 3.0);
}

TEST_CASE("voxel_pool adds features landing in the same voxel") {
  const VoxelGridSpec grid = test_grid();
  Tensor frustum{{1, 2, 1, 3}};
  for (int64_t u = 0; u < 2; ++u) {
    frustum(0, u, 0, 0) = 1.1 + 0.05 * static_cast<double>(u);
    frustum(0, u, 0, 1) = 1.1;
    frustum(0, u, 0, 2) = 0.6;
  }
  Tensor lifted{{1, 2, 1, 2}};
  lifted(0, 0, 0, 0) = 1.0;
  lifted(0, 1, 0, 1) = 1.0;
  const Tensor pooled = voxel_pool({frustum}, {lifted}, grid);
  const int64_t i = 5, j = 5, k = 1;  // (1.1 - (-4)) / 1 = 5.1 and 0.6/0.5 = 1.2
  CHECK(pooled(0, i, j, k) == 1.0);
  CHECK(pooled(1, i, j, k) == 1.0);
  CHECK(pooled.sum() == 2.0);
}

TEST_CASE("points on an upper voxel boundary belong to the next voxel") {
  VoxelGridSpec grid;
  grid.range = {0.0, 0.0, 0.0, 4.0, 4.0, 4.0};
  grid.dims = {4, 4, 4};
  Tensor frustum{{1, 1, 1, 3}};
  frustum(0, 0, 0, 0) = 1.0;  // exactly on the boundary between voxel 0 and 1
  frustum(0, 0, 0, 1) = 0.5;
  frustum(0, 0, 0, 2) = 0.5;
  Tensor lifted{{1, 1, 1, 1}, 1.0};
  const Tensor pooled = voxel_pool({frustum}, {lifted}, grid);
  CHECK(pooled(0, 1, 0, 0) == 1.0);
  CHECK(pooled(0, 0, 0, 0) == 0.0);
  // ... and a point exactly on the range end falls outside
  frustum(0, 0, 0, 0) = 4.0;
  CHECK(voxel_pool({frustum}, {lifted}, grid).sum() == 0.0);
}

TEST_CASE("conservation: pooled mass equals in-range lifted mass") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    SplitMix64 rng{seed * 101 + 7};
    RingRigSpec ring;
    ring.cameras = 1 + static_cast<int64_t>(seed % 4);
    ring.image_h = 6;
    ring.image_w = 9;
    ring.fov_deg = rng.uniform(70.0, 120.0);
    ring.height = rng.uniform(0.5, 1.8);
    ring.pitch_deg = rng.uniform(-10.0, 25.0);
    ring.radius = rng.uniform(0.0, 1.0);
    const CameraRig rig = make_ring_rig(ring);
    const VoxelGridSpec grid = test_grid();
    DepthBinSpec bins{0.4, rng.uniform(4.0, 9.0), rng.uniform_int(3, 8)};

    std::vector<Tensor> frustums;
    std::vector<Tensor> lifted;
    double in_range_mass = 0.0;
    for (const Camera& cam : rig.cameras) {
      frustums.push_back(build_frustum(cam, bins));
      lifted.push_back(random_tensor(rng, {cam.image_h, cam.image_w, bins.count, 3}, -2.0, 2.0));
      // Independent mask-and-sum: a point is in range iff every coordinate
      // sits inside the half-open per-axis interval.
      const Tensor& f = frustums.back();
      const Tensor& l = lifted.back();
      const int64_t points = f.size() / 3;
      for (int64_t idx = 0; idx < points; ++idx) {
        const double x = f.data()[idx * 3], y = f.data()[idx * 3 + 1], z = f.data()[idx * 3 + 2];
        const bool in = x >= grid.range[0] && x < grid.range[3] && y >= grid.range[1] &&
                        y < grid.range[4] && z >= grid.range[2] && z < grid.range[5];
        if (!in) continue;
        for (int64_t c = 0; c < 3; ++c) in_range_mass += l.data()[idx * 3 + c];
      }
    }
    const Tensor pooled = voxel_pool(frustums, lifted, grid);
    const double scale = std::max({1.0, std::abs(in_range_mass), std::abs(pooled.sum())});
    CHECK(std::abs(pooled.sum() - in_range_mass) / scale < 1e-9);
  }
}

TEST_CASE("pooled values are invariant under camera reordering") {
  SplitMix64 rng{35};
  const CameraRig rig = test_rig(3, 5, 7);
  const VoxelGridSpec grid = test_grid();
  DepthBinSpec bins{0.5, 6.0, 5};
  std::vector<Tensor> frustums;
  std::vector<Tensor> lifted;
  for (const Camera& cam : rig.cameras) {
    frustums.push_back(build_frustum(cam, bins));
    lifted.push_back(random_tensor(rng, {cam.image_h, cam.image_w, bins.count, 2}, -1.0, 1.0));
  }
  const Tensor forward_order = voxel_pool(frustums, lifted, grid);
  const std::vector<Tensor> rf{frustums[2], frustums[0], frustums[1]};
  const std::vector<Tensor> rl{lifted[2], lifted[0], lifted[1]};
  const Tensor shuffled = voxel_pool(rf, rl, grid);
  CHECK(max_abs_diff(forward_order, shuffled) < 1e-12);
}

TEST_CASE("a camera facing away from the grid contributes nothing") {
  // Grid strictly in front of the origin along +x; camera faces -x.
  VoxelGridSpec grid;
  grid.range = {2.0, -2.0, 0.0, 6.0, 2.0, 2.0};
  grid.dims = {4, 4, 2};
  Camera cam;
  cam.intrinsics = Mat3::identity();
  cam.intrinsics(0, 0) = 5.0;
  cam.intrinsics(1, 1) = 5.0;
  cam.intrinsics(0, 2) = 3.0;
  cam.intrinsics(1, 2) = 3.0;
  cam.image_h = 7;
  cam.image_w = 7;
  // camera z axis = ego -x: rows of R are right (0,1,0)?, down, forward(-1,0,0)
  cam.ego_to_cam = Mat4::identity();
  cam.ego_to_cam(0, 0) = 0.0;
  cam.ego_to_cam(0, 1) = -1.0;
  cam.ego_to_cam(1, 1) = 0.0;
  cam.ego_to_cam(1, 2) = -1.0;
  cam.ego_to_cam(2, 0) = -1.0;
  cam.ego_to_cam(2, 2) = 0.0;
  cam.validate();
  DepthBinSpec bins{0.5, 8.0, 6};
  const Tensor frustum = build_frustum(cam, bins);
  SplitMix64 rng{36};
  const Tensor lifted = random_tensor(rng, {7, 7, 6, 2});
  const Tensor pooled = voxel_pool({frustum}, {lifted}, grid);
  CHECK(pooled.sum() == 0.0);
  CHECK(pooled.min() == 0.0);
  CHECK(pooled.max() == 0.0);
}

TEST_CASE("depth target binning follows floor arithmetic") {
  DepthBinSpec bins{1.0, 5.0, 4};
  Tensor depth{{2, 3}};
  depth(0, 0) = 2.5;   // bin 1
  depth(0, 1) = 0.5;   // below d_min: invalid
  depth(0, 2) = 1.0;   // exactly d_min: bin 0
  depth(1, 0) = 5.0;   // exactly d_max: invalid (half-open)
  depth(1, 1) = 4.999; // last bin
  depth(1, 2) = -1.0;  // background marker: invalid
  const DepthTargets targets = depth_targets(depth, bins);
  CHECK(targets.one_hot(1, 0, 0) == 1.0);
  CHECK(targets.valid(0, 0) == 1.0);
  CHECK(targets.valid(0, 1) == 0.0);
  CHECK(targets.one_hot(0, 0, 2) == 1.0);
  CHECK(targets.valid(0, 2) == 1.0);
  CHECK(targets.valid(1, 0) == 0.0);
  CHECK(targets.one_hot(3, 1, 1) == 1.0);
  CHECK(targets.valid(1, 2) == 0.0);
  // exactly one bin set per valid pixel, none for invalid
  for (int64_t i = 0; i < 6; ++i) {
    double s = 0.0;
    for (int64_t d = 0; d < 4; ++d) s += targets.one_hot.data()[d * 6 + i];
    CHECK(s == targets.valid.data()[i]);
  }
}
