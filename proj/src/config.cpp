#include "bevocc/config.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "bevocc/json_io.hpp"

namespace bevocc {

using nlohmann::json;

CameraRig RunConfig::rig() const {
  if (has_ring) return make_ring_rig(ring);
  explicit_rig.validate();
  return explicit_rig;
}

SceneSpec RunConfig::scene_spec() const {
  SceneSpec spec;
  spec.seed = seed;
  spec.grid = grid;
  spec.num_classes = head.num_classes;
  spec.boxes = boxes;
  spec.pillars = pillars;
  spec.rig = ring;
  spec.feature_noise_sigma = noise_sigma;
  spec.clearance = clearance;
  return spec;
}

PipelineWeights RunConfig::weights() const {
  switch (weights_init) {
    case WeightsInit::zeros:
      return make_zero_weights(head);
    case WeightsInit::random:
      return make_random_weights(head, seed ^ 0x77a3c1b4d9e5f021ull);
    case WeightsInit::manifest:
      return load_weights_manifest(weights_manifest, head);
  }
  throw std::logic_error("RunConfig: unreachable weights init");
}

namespace {

RingRigSpec ring_from_json(const json& j) {
  check_keys(j, {"count", "image_size", "fov_deg", "height", "pitch_deg", "radius"},
             "config.cameras");
  RingRigSpec spec;
  if (j.contains("count")) spec.cameras = j.at("count").get<int64_t>();
  if (j.contains("image_size")) {
    const auto sz = j.at("image_size").get<std::vector<int64_t>>();
    if (sz.size() != 2)
      throw std::invalid_argument("config.cameras: 'image_size' must be [H', W']");
    spec.image_h = sz[0];
    spec.image_w = sz[1];
  }
  if (j.contains("fov_deg")) spec.fov_deg = j.at("fov_deg").get<double>();
  if (j.contains("height")) spec.height = j.at("height").get<double>();
  if (j.contains("pitch_deg")) spec.pitch_deg = j.at("pitch_deg").get<double>();
  if (j.contains("radius")) spec.radius = j.at("radius").get<double>();
  spec.validate();
  return spec;
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  check_keys(j, {"seed", "grid", "cameras", "depth_bins", "head", "scene", "weights", "paths", "bench"},
             "config");
  for (const char* required : {"seed", "grid", "cameras", "depth_bins", "head"})
    if (!j.contains(required))
      throw std::invalid_argument("config: missing required key '" + std::string(required) + "'");

  RunConfig cfg;
  cfg.seed = j.at("seed").get<uint64_t>();
  cfg.grid = grid_from_json(j.at("grid"), "config.grid");

  const json& cameras = j.at("cameras");
  if (cameras.is_array()) {
    cfg.has_ring = false;
    for (const json& cj : cameras)
      cfg.explicit_rig.cameras.push_back(camera_from_json(cj, "config.cameras[]"));
    cfg.explicit_rig.validate();
  } else {
    cfg.has_ring = true;
    cfg.ring = ring_from_json(cameras);
  }

  {
    const json& bj = j.at("depth_bins");
    check_keys(bj, {"d_min", "d_max", "count"}, "config.depth_bins");
    for (const char* key : {"d_min", "d_max", "count"})
      if (!bj.contains(key))
        throw std::invalid_argument("config.depth_bins: missing '" + std::string(key) + "'");
    cfg.bins.d_min = bj.at("d_min").get<double>();
    cfg.bins.d_max = bj.at("d_max").get<double>();
    cfg.bins.count = bj.at("count").get<int64_t>();
    cfg.bins.validate();
  }

  {
    const json& hj = j.at("head");
    check_keys(hj, {"c1", "c2", "c3", "classes", "kernel", "decoder_widths", "conv3d_layers",
                    "fused_channels"},
               "config.head");
    for (const char* key : {"c1", "c2", "c3", "classes", "decoder_widths"})
      if (!hj.contains(key))
        throw std::invalid_argument("config.head: missing '" + std::string(key) + "'");
    cfg.head.c1 = hj.at("c1").get<int64_t>();
    cfg.head.c2 = hj.at("c2").get<int64_t>();
    cfg.head.c3 = hj.at("c3").get<int64_t>();
    cfg.head.num_classes = hj.at("classes").get<int64_t>();
    cfg.head.grid = cfg.grid.dims;
    cfg.head.decoder_widths = hj.at("decoder_widths").get<std::vector<int64_t>>();
    if (hj.contains("kernel")) cfg.head.kernel = hj.at("kernel").get<int64_t>();
    if (hj.contains("conv3d_layers")) cfg.head.conv3d_layers = hj.at("conv3d_layers").get<int64_t>();
    if (hj.contains("fused_channels")) cfg.head.fused_channels = hj.at("fused_channels").get<int64_t>();
    cfg.head.validate();
  }

  if (j.contains("scene")) {
    const json& sj = j.at("scene");
    check_keys(sj, {"boxes", "pillars", "noise_sigma", "clearance"}, "config.scene");
    if (sj.contains("boxes")) cfg.boxes = sj.at("boxes").get<int64_t>();
    if (sj.contains("pillars")) cfg.pillars = sj.at("pillars").get<int64_t>();
    if (sj.contains("noise_sigma")) cfg.noise_sigma = sj.at("noise_sigma").get<double>();
    if (sj.contains("clearance")) cfg.clearance = sj.at("clearance").get<double>();
  }

  if (j.contains("weights")) {
    const json& wj = j.at("weights");
    check_keys(wj, {"init", "manifest"}, "config.weights");
    const std::string init = wj.contains("init") ? wj.at("init").get<std::string>() : "random";
    if (init == "zeros") {
      cfg.weights_init = RunConfig::WeightsInit::zeros;
    } else if (init == "random") {
      cfg.weights_init = RunConfig::WeightsInit::random;
    } else if (init == "manifest") {
      cfg.weights_init = RunConfig::WeightsInit::manifest;
      if (!wj.contains("manifest"))
        throw std::invalid_argument("config.weights: init 'manifest' needs a 'manifest' path");
      cfg.weights_manifest = wj.at("manifest").get<std::string>();
    } else {
      throw std::invalid_argument("config.weights: unknown init '" + init + "'");
    }
  }

  if (j.contains("paths")) {
    const json& pj = j.at("paths");
    check_keys(pj, {"scene_dir", "out_dir"}, "config.paths");
    if (pj.contains("scene_dir")) cfg.scene_dir = pj.at("scene_dir").get<std::string>();
    if (pj.contains("out_dir")) cfg.out_dir = pj.at("out_dir").get<std::string>();
  }

  if (j.contains("bench")) {
    const json& bj = j.at("bench");
    check_keys(bj, {"repeats"}, "config.bench");
    if (bj.contains("repeats")) cfg.bench_repeats = bj.at("repeats").get<int64_t>();
    if (cfg.bench_repeats < 5)
      throw std::invalid_argument("config.bench: repeats must be >= 5");
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_run_config: cannot open " + path);
  json j;
  try {
    is >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("load_run_config: bad JSON in " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

PipelineWeights load_weights_manifest(const std::string& manifest_path, const HeadConfig& cfg) {
  std::ifstream is(manifest_path);
  if (!is) throw std::runtime_error("load_weights_manifest: cannot open " + manifest_path);
  json j;
  try {
    is >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("load_weights_manifest: bad JSON: " + std::string(e.what()));
  }
  check_keys(j, {"layers"}, "weights manifest");
  if (!j.contains("layers") || !j.at("layers").is_object())
    throw std::invalid_argument("weights manifest: needs a 'layers' object");
  const json& layers = j.at("layers");

  PipelineWeights weights = make_zero_weights(cfg);
  const auto named = named_tensors(weights);
  const std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();

  for (const auto& [key, value] : layers.items()) {
    bool known = false;
    for (const auto& [name, tensor] : named)
      if (name == key) {
        known = true;
        break;
      }
    if (!known)
      throw std::invalid_argument("weights manifest: unknown layer '" + key + "'");
  }
  for (const auto& [name, tensor] : named) {
    if (!layers.contains(name))
      throw std::invalid_argument("weights manifest: missing layer '" + name + "'");
    const std::string rel = layers.at(name).get<std::string>();
    const Tensor loaded = load_occt((base / rel).string());
    if (loaded.dims() != tensor->dims())
      throw std::invalid_argument("weights manifest: layer '" + name + "' has shape " +
                                  shape_string(loaded.dims()) + ", expected " +
                                  shape_string(tensor->dims()));
    *tensor = loaded;
  }
  return weights;
}

std::string save_weights_manifest(const PipelineWeights& weights, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  PipelineWeights& mutable_weights = const_cast<PipelineWeights&>(weights);
  json layers = json::object();
  for (const auto& [name, tensor] : named_tensors(mutable_weights)) {
    const std::string fname = name + ".occt";
    save_occt(dir + "/" + fname, *tensor, OcctDtype::f64);
    layers[name] = fname;
  }
  const std::string manifest_path = dir + "/manifest.json";
  std::ofstream os(manifest_path);
  if (!os) throw std::runtime_error("save_weights_manifest: cannot write " + manifest_path);
  os << json{{"layers", layers}}.dump(2) << "\n";
  if (!os) throw std::runtime_error("save_weights_manifest: write failed for " + manifest_path);
  return manifest_path;
}

}  // namespace bevocc
