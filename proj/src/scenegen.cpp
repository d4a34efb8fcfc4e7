#include "bevocc/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "bevocc/json_io.hpp"
#include "bevocc/parallel.hpp"
#include "bevocc/rng.hpp"

namespace bevocc {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

void RingRigSpec::validate() const {
  if (cameras < 1) throw std::invalid_argument("RingRigSpec: need at least one camera");
  if (image_h < 2 || image_w < 2) throw std::invalid_argument("RingRigSpec: image dims must be >= 2");
  if (!(fov_deg > 0.0 && fov_deg < 180.0))
    throw std::invalid_argument("RingRigSpec: fov must be in (0, 180) degrees");
  if (radius < 0.0) throw std::invalid_argument("RingRigSpec: radius must be >= 0");
}

CameraRig make_ring_rig(const RingRigSpec& spec) {
  spec.validate();
  CameraRig rig;
  const double focal =
      (static_cast<double>(spec.image_w) / 2.0) / std::tan(spec.fov_deg * kPi / 180.0 / 2.0);
  const double pitch = spec.pitch_deg * kPi / 180.0;
  for (int64_t n = 0; n < spec.cameras; ++n) {
    const double yaw = 2.0 * kPi * static_cast<double>(n) / static_cast<double>(spec.cameras);
    const Vec3 pos{spec.radius * std::cos(yaw), spec.radius * std::sin(yaw), spec.height};
    // Camera axes in ego coordinates: z forward (outward, pitched down),
    // x right, y down.
    const Vec3 forward{std::cos(yaw) * std::cos(pitch), std::sin(yaw) * std::cos(pitch),
                       -std::sin(pitch)};
    const Vec3 right = forward.cross(Vec3{0.0, 0.0, 1.0}).normalized();
    const Vec3 down = forward.cross(right);

    Camera cam;
    cam.image_h = spec.image_h;
    cam.image_w = spec.image_w;
    cam.intrinsics = Mat3::identity();
    cam.intrinsics(0, 0) = focal;
    cam.intrinsics(1, 1) = focal;
    cam.intrinsics(0, 2) = (static_cast<double>(spec.image_w) - 1.0) / 2.0;
    cam.intrinsics(1, 2) = (static_cast<double>(spec.image_h) - 1.0) / 2.0;

    // Rows of R_e2c are the camera axes; t = -R * position.
    Mat4 e2c = Mat4::identity();
    const Vec3 axes[3] = {right, down, forward};
    for (int r = 0; r < 3; ++r) {
      e2c(r, 0) = axes[r].x;
      e2c(r, 1) = axes[r].y;
      e2c(r, 2) = axes[r].z;
    }
    e2c(0, 3) = -axes[0].dot(pos);
    e2c(1, 3) = -axes[1].dot(pos);
    e2c(2, 3) = -axes[2].dot(pos);
    cam.ego_to_cam = e2c;
    cam.validate();
    rig.cameras.push_back(cam);
  }
  return rig;
}

void SceneSpec::validate() const {
  grid.validate();
  rig.validate();
  if (num_classes < 2)
    throw std::invalid_argument("SceneSpec: need at least one semantic class besides empty");
  if (boxes < 0 || pillars < 0) throw std::invalid_argument("SceneSpec: object counts must be >= 0");
  if (feature_noise_sigma < 0.0)
    throw std::invalid_argument("SceneSpec: feature noise sigma must be >= 0");
}

namespace {

struct Footprint {
  int64_t i0, j0, k0;
  int64_t ei, ej, ek;
};

// xy distance from the ego origin to the closest point of the footprint.
double footprint_clearance(const VoxelGridSpec& grid, const Footprint& f) {
  const double x0 = grid.range[0] + static_cast<double>(f.i0) * grid.step_h();
  const double x1 = grid.range[0] + static_cast<double>(f.i0 + f.ei) * grid.step_h();
  const double y0 = grid.range[1] + static_cast<double>(f.j0) * grid.step_w();
  const double y1 = grid.range[1] + static_cast<double>(f.j0 + f.ej) * grid.step_w();
  const double cx = std::clamp(0.0, x0, x1);
  const double cy = std::clamp(0.0, y0, y1);
  return std::sqrt(cx * cx + cy * cy);
}

bool region_empty(const Tensor& labels, const Footprint& f) {
  const int64_t w = labels.dim(1), z = labels.dim(2);
  for (int64_t i = f.i0; i < f.i0 + f.ei; ++i)
    for (int64_t j = f.j0; j < f.j0 + f.ej; ++j)
      for (int64_t k = f.k0; k < f.k0 + f.ek; ++k)
        if (labels.data()[(i * w + j) * z + k] != 0.0) return false;
  return true;
}

void fill_region(Tensor& labels, const Footprint& f, int64_t cls) {
  const int64_t w = labels.dim(1), z = labels.dim(2);
  for (int64_t i = f.i0; i < f.i0 + f.ei; ++i)
    for (int64_t j = f.j0; j < f.j0 + f.ej; ++j)
      for (int64_t k = f.k0; k < f.k0 + f.ek; ++k)
        labels.data()[(i * w + j) * z + k] = static_cast<double>(cls);
}

}  // namespace

OccupancyScene gen_scene(const SceneSpec& spec) {
  spec.validate();
  const int64_t h = spec.grid.dims[0], w = spec.grid.dims[1], z = spec.grid.dims[2];
  const int64_t m = spec.num_classes;

  OccupancyScene scene;
  scene.num_classes = m;
  scene.class_names.push_back("empty");
  scene.class_names.push_back("ground");
  for (int64_t c = 2; c < m; ++c) scene.class_names.push_back("class" + std::to_string(c));
  scene.labels = Tensor{{h, w, z}};

  // Ground plane: the lowest z layer.
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j) scene.labels.data()[(i * w + j) * z] = 1.0;

  SplitMix64 rng{spec.seed};
  auto object_class = [&]() -> int64_t { return m >= 3 ? rng.uniform_int(2, m - 1) : 1; };

  auto place = [&](const char* kind, int64_t count, auto make_footprint) {
    for (int64_t n = 0; n < count; ++n) {
      bool placed = false;
      for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
        const Footprint f = make_footprint();
        if (f.i0 < 0 || f.j0 < 0 || f.i0 + f.ei > h || f.j0 + f.ej > w || f.k0 + f.ek > z) continue;
        if (footprint_clearance(spec.grid, f) < spec.clearance) continue;
        if (!region_empty(scene.labels, f)) continue;
        fill_region(scene.labels, f, object_class());
        placed = true;
      }
      if (!placed)
        throw std::runtime_error("gen_scene: could not place " + std::string(kind) + " " +
                                 std::to_string(n) + " after 100 attempts (seed " +
                                 std::to_string(spec.seed) + ")");
    }
  };

  if (z < 2 && (spec.boxes > 0 || spec.pillars > 0))
    throw std::runtime_error("gen_scene: grid too flat for objects (seed " +
                             std::to_string(spec.seed) + ")");

  place("box", spec.boxes, [&]() -> Footprint {
    Footprint f;
    f.ei = rng.uniform_int(2, 5);
    f.ej = rng.uniform_int(2, 5);
    f.ek = rng.uniform_int(2, std::max<int64_t>(2, std::min<int64_t>(4, z - 1)));
    f.i0 = rng.uniform_int(0, std::max<int64_t>(0, h - f.ei));
    f.j0 = rng.uniform_int(0, std::max<int64_t>(0, w - f.ej));
    f.k0 = 1;
    return f;
  });
  place("pillar", spec.pillars, [&]() -> Footprint {
    Footprint f;
    const int64_t side = rng.uniform_int(1, 2);
    f.ei = side;
    f.ej = side;
    f.ek = std::min<int64_t>(z - 1, rng.uniform_int(3, std::max<int64_t>(3, z - 1)));
    f.i0 = rng.uniform_int(0, std::max<int64_t>(0, h - f.ei));
    f.j0 = rng.uniform_int(0, std::max<int64_t>(0, w - f.ej));
    f.k0 = 1;
    return f;
  });
  return scene;
}

namespace {

// Ray/AABB slab intersection; false when the ray misses the grid box.
bool grid_entry_exit(const VoxelGridSpec& grid, const Vec3& origin, const Vec3& dir, double& t0,
                     double& t1) {
  t0 = 0.0;
  t1 = std::numeric_limits<double>::infinity();
  const double lo[3] = {grid.range[0], grid.range[1], grid.range[2]};
  const double hi[3] = {grid.range[3], grid.range[4], grid.range[5]};
  const double o[3] = {origin.x, origin.y, origin.z};
  const double d[3] = {dir.x, dir.y, dir.z};
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (o[a] < lo[a] || o[a] > hi[a]) return false;
      continue;
    }
    double ta = (lo[a] - o[a]) / d[a];
    double tb = (hi[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return t0 <= t1;
}

}  // namespace

std::vector<RenderedView> render_views(const OccupancyScene& scene, const CameraRig& rig,
                                       const VoxelGridSpec& grid, double noise_sigma,
                                       uint64_t noise_seed) {
  rig.validate();
  grid.validate();
  if (scene.labels.dims() != std::vector<int64_t>{grid.dims[0], grid.dims[1], grid.dims[2]})
    throw std::invalid_argument("render_views: scene labels do not match the grid dims");
  const int64_t m = scene.num_classes;
  const int64_t gh = grid.dims[0], gw = grid.dims[1], gz = grid.dims[2];
  const double step = 0.5 * std::min({grid.step_h(), grid.step_w(), grid.step_z()});
  const double* labels = scene.labels.data();

  std::vector<RenderedView> views;
  views.reserve(rig.size());
  for (const Camera& cam : rig.cameras) {
    RenderedView view;
    view.features = Tensor{{m, cam.image_h, cam.image_w}};
    view.depth = Tensor{{cam.image_h, cam.image_w}, -1.0};
    view.first_hit = Tensor{{cam.image_h, cam.image_w}, -1.0};

    const Mat3 k_inv = cam.intrinsics.inverse();
    const Mat4 c2e = cam.ego_to_cam.rigid_inverse();
    const Mat3 r_c2e = c2e.rotation();
    const Vec3 origin = c2e.translation();

    double* feat = view.features.data();
    double* depth = view.depth.data();
    double* hit = view.first_hit.data();
    const int64_t pixels = cam.image_h * cam.image_w;

    parallel_for(0, pixels, [&](int64_t pix) {
      const int64_t v = pix / cam.image_w;
      const int64_t u = pix % cam.image_w;
      const Vec3 ray_cam =
          (k_inv * Vec3{static_cast<double>(u), static_cast<double>(v), 1.0}).normalized();
      const Vec3 dir = r_c2e * ray_cam;

      int64_t cls = 0;
      double t0, t1;
      if (grid_entry_exit(grid, origin, dir, t0, t1)) {
        for (double t = std::max(t0, 0.0) + 0.5 * step; t <= t1; t += step) {
          const Vec3 p = origin + dir * t;
          const auto i = static_cast<int64_t>(std::floor((p.x - grid.range[0]) / grid.step_h()));
          const auto j = static_cast<int64_t>(std::floor((p.y - grid.range[1]) / grid.step_w()));
          const auto k = static_cast<int64_t>(std::floor((p.z - grid.range[2]) / grid.step_z()));
          if (i < 0 || j < 0 || k < 0 || i >= gh || j >= gw || k >= gz) continue;
          const int64_t voxel = (i * gw + j) * gz + k;
          const auto label = static_cast<int64_t>(labels[voxel]);
          if (label != 0) {
            cls = label;
            depth[pix] = t * ray_cam.z;  // camera-frame z of the hit sample
            hit[pix] = static_cast<double>(voxel);
            break;
          }
        }
      }
      feat[cls * pixels + pix] = 1.0;
    });

    if (noise_sigma > 0.0) {
      SplitMix64 rng{noise_seed ^ (0xabcdef1234567890ull + views.size())};
      for (int64_t i = 0; i < view.features.size(); ++i)
        view.features.data()[i] += noise_sigma * rng.normal();
    }
    views.push_back(std::move(view));
  }
  return views;
}

SceneBundle make_scene_bundle(const SceneSpec& spec) {
  SceneBundle bundle;
  bundle.grid = spec.grid;
  bundle.scene = gen_scene(spec);
  bundle.rig = make_ring_rig(spec.rig);
  bundle.views =
      render_views(bundle.scene, bundle.rig, spec.grid, spec.feature_noise_sigma, spec.seed);
  return bundle;
}

void write_scene_bundle(const SceneBundle& bundle, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  nlohmann::json manifest;
  manifest["grid"] = grid_to_json(bundle.grid);
  manifest["num_classes"] = bundle.scene.num_classes;
  manifest["class_names"] = bundle.scene.class_names;
  manifest["labels"] = "labels.occt";
  save_occt(dir + "/labels.occt", bundle.scene.labels, OcctDtype::i64);

  nlohmann::json cameras = nlohmann::json::array();
  nlohmann::json features = nlohmann::json::array();
  nlohmann::json depths = nlohmann::json::array();
  for (size_t n = 0; n < bundle.views.size(); ++n) {
    const std::string fname = "cam" + std::to_string(n) + "_features.occt";
    const std::string dname = "cam" + std::to_string(n) + "_depth.occt";
    save_occt(dir + "/" + fname, bundle.views[n].features, OcctDtype::f64);
    save_occt(dir + "/" + dname, bundle.views[n].depth, OcctDtype::f64);
    features.push_back(fname);
    depths.push_back(dname);
    cameras.push_back(camera_to_json(bundle.rig.cameras[n]));
  }
  manifest["features"] = features;
  manifest["depth"] = depths;
  manifest["rig"] = cameras;

  std::ofstream os(dir + "/manifest.json");
  if (!os) throw std::runtime_error("write_scene_bundle: cannot write manifest in " + dir);
  os << manifest.dump(2) << "\n";
  if (!os) throw std::runtime_error("write_scene_bundle: manifest write failed in " + dir);
}

SceneBundle load_scene_bundle(const std::string& dir) {
  std::ifstream is(dir + "/manifest.json");
  if (!is) throw std::runtime_error("load_scene_bundle: cannot open " + dir + "/manifest.json");
  nlohmann::json manifest;
  try {
    is >> manifest;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("load_scene_bundle: bad manifest JSON: " + std::string(e.what()));
  }
  check_keys(manifest, {"grid", "num_classes", "class_names", "labels", "features", "depth", "rig"},
             "manifest");

  SceneBundle bundle;
  bundle.grid = grid_from_json(manifest.at("grid"), "manifest.grid");
  bundle.scene.num_classes = manifest.at("num_classes").get<int64_t>();
  bundle.scene.class_names = manifest.at("class_names").get<std::vector<std::string>>();
  bundle.scene.labels = load_occt(dir + "/" + manifest.at("labels").get<std::string>());

  const auto features = manifest.at("features").get<std::vector<std::string>>();
  const auto depths = manifest.at("depth").get<std::vector<std::string>>();
  const auto& rig_json = manifest.at("rig");
  if (features.size() != depths.size() || features.size() != rig_json.size())
    throw std::runtime_error("load_scene_bundle: per-camera lists disagree in length");
  for (size_t n = 0; n < features.size(); ++n) {
    bundle.rig.cameras.push_back(camera_from_json(rig_json[n], "manifest.rig"));
    RenderedView view;
    view.features = load_occt(dir + "/" + features[n]);
    view.depth = load_occt(dir + "/" + depths[n]);
    bundle.views.push_back(std::move(view));
  }
  bundle.rig.validate();
  return bundle;
}

}  // namespace bevocc
