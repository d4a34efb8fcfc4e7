#include "bevocc/json_io.hpp"

#include <stdexcept>

namespace bevocc {

using nlohmann::json;

void check_keys(const json& obj, const std::vector<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw std::invalid_argument(where + ": expected a JSON object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const std::string& a : allowed)
      if (key == a) {
        ok = true;
        break;
      }
    if (!ok) throw std::invalid_argument(where + ": unknown key '" + key + "'");
  }
}

json grid_to_json(const VoxelGridSpec& spec) {
  return json{{"range", spec.range}, {"dims", spec.dims}};
}

VoxelGridSpec grid_from_json(const json& j, const std::string& where) {
  check_keys(j, {"range", "dims"}, where);
  if (!j.contains("range") || !j.contains("dims"))
    throw std::invalid_argument(where + ": needs 'range' and 'dims'");
  const auto range = j.at("range").get<std::vector<double>>();
  const auto dims = j.at("dims").get<std::vector<int64_t>>();
  if (range.size() != 6) throw std::invalid_argument(where + ": 'range' must have 6 entries");
  if (dims.size() != 3) throw std::invalid_argument(where + ": 'dims' must have 3 entries");
  VoxelGridSpec spec;
  std::copy(range.begin(), range.end(), spec.range.begin());
  std::copy(dims.begin(), dims.end(), spec.dims.begin());
  spec.validate();
  return spec;
}

json camera_to_json(const Camera& cam) {
  return json{{"k", cam.intrinsics.m},
              {"t_e2c", cam.ego_to_cam.m},
              {"image_size", std::array<int64_t, 2>{cam.image_h, cam.image_w}}};
}

Camera camera_from_json(const json& j, const std::string& where) {
  check_keys(j, {"k", "t_e2c", "image_size"}, where);
  if (!j.contains("k") || !j.contains("t_e2c") || !j.contains("image_size"))
    throw std::invalid_argument(where + ": needs 'k', 't_e2c', and 'image_size'");
  const auto k = j.at("k").get<std::vector<double>>();
  const auto t = j.at("t_e2c").get<std::vector<double>>();
  const auto sz = j.at("image_size").get<std::vector<int64_t>>();
  if (k.size() != 9) throw std::invalid_argument(where + ": 'k' must be a flat 3x3 (9 numbers)");
  if (t.size() != 16) throw std::invalid_argument(where + ": 't_e2c' must be a flat 4x4 (16 numbers)");
  if (sz.size() != 2) throw std::invalid_argument(where + ": 'image_size' must be [H', W']");
  Camera cam;
  std::copy(k.begin(), k.end(), cam.intrinsics.m.begin());
  std::copy(t.begin(), t.end(), cam.ego_to_cam.m.begin());
  cam.image_h = sz[0];
  cam.image_w = sz[1];
  cam.validate();
  return cam;
}

}  // namespace bevocc
