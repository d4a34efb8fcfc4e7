#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bevocc/geometry.hpp"
#include "bevocc/tensor.hpp"

namespace bevocc {

// N cameras evenly spaced on a ring around the ego origin, facing outward
// with a downward pitch.
struct RingRigSpec {
  int64_t cameras = 4;
  int64_t image_h = 96;
  int64_t image_w = 128;
  double fov_deg = 100.0;    // horizontal
  double height = 1.6;       // meters above z = 0
  double pitch_deg = 10.0;   // downward
  double radius = 0.5;       // ring radius in meters

  void validate() const;
};

CameraRig make_ring_rig(const RingRigSpec& spec);

// Deterministic synthetic world: identical spec -> identical scene and
// renders, bit for bit, via the project SplitMix64 generator.
struct SceneSpec {
  uint64_t seed = 0;
  VoxelGridSpec grid;
  int64_t num_classes = 5;  // M including empty
  int64_t boxes = 4;
  int64_t pillars = 3;
  RingRigSpec rig;
  double feature_noise_sigma = 0.0;
  double clearance = 3.0;  // objects keep this xy distance from the origin

  void validate() const;
};

struct OccupancyScene {
  Tensor labels;  // [H, W, Z] class ids, 0 = empty
  int64_t num_classes = 0;
  std::vector<std::string> class_names;
};

// Ground plane at the lowest z layer (class 1) plus non-overlapping boxes
// and pillars of random classes sitting on it. Throws naming the seed if an
// object cannot be placed after bounded retries.
OccupancyScene gen_scene(const SceneSpec& spec);

struct RenderedView {
  Tensor features;   // [M, H', W'] one-hot class of the first hit
  Tensor depth;      // [H', W'] camera-frame z of the hit, -1 when none
  Tensor first_hit;  // [H', W'] flat voxel index of the first hit, -1 when none
};

// Marches every pixel ray through the grid at a uniform step of half the
// smallest voxel extent; the first occupied voxel defines the pixel's class
// and depth. Optional Gaussian feature noise for robustness tests.
std::vector<RenderedView> render_views(const OccupancyScene& scene, const CameraRig& rig,
                                       const VoxelGridSpec& grid, double noise_sigma = 0.0,
                                       uint64_t noise_seed = 0);

struct SceneBundle {
  OccupancyScene scene;
  CameraRig rig;
  std::vector<RenderedView> views;
  VoxelGridSpec grid;
};

SceneBundle make_scene_bundle(const SceneSpec& spec);

// Writes labels.occt, per-camera features/depth .occt files, and
// manifest.json (file names, shapes, rig echo) into `dir`.
void write_scene_bundle(const SceneBundle& bundle, const std::string& dir);
SceneBundle load_scene_bundle(const std::string& dir);

}  // namespace bevocc
