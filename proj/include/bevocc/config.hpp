#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "bevocc/geometry.hpp"
#include "bevocc/occupancy_head.hpp"
#include "bevocc/scenegen.hpp"
#include "bevocc/view_transform.hpp"

namespace bevocc {

// One JSON run config drives every CLI verb. The schema is strict: unknown
// keys anywhere are rejected.
struct RunConfig {
  uint64_t seed = 0;
  VoxelGridSpec grid;
  bool has_ring = true;
  RingRigSpec ring;
  CameraRig explicit_rig;
  DepthBinSpec bins;
  HeadConfig head;

  int64_t boxes = 4;
  int64_t pillars = 3;
  double noise_sigma = 0.0;
  double clearance = 3.0;

  enum class WeightsInit { zeros, random, manifest };
  WeightsInit weights_init = WeightsInit::random;
  std::string weights_manifest;

  std::string scene_dir = "scene";
  std::string out_dir = "out";
  int64_t bench_repeats = 9;

  CameraRig rig() const;
  SceneSpec scene_spec() const;
  PipelineWeights weights() const;
};

RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

// Weights manifest: {"layers": {"<name>": "<relative .occt path>"}}. Paths
// resolve relative to the manifest file. The manifest must cover exactly the
// layer set of the HeadConfig, with matching shapes.
PipelineWeights load_weights_manifest(const std::string& manifest_path, const HeadConfig& cfg);
// Writes one .occt per layer plus manifest.json into `dir`; returns the
// manifest path.
std::string save_weights_manifest(const PipelineWeights& weights, const std::string& dir);

}  // namespace bevocc
