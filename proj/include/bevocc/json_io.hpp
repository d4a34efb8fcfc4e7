#pragma once

#include <json.hpp>

#include "bevocc/geometry.hpp"

namespace bevocc {

// Strict JSON readers: unknown keys are rejected so config typos fail loudly.
void check_keys(const nlohmann::json& obj, const std::vector<std::string>& allowed,
                const std::string& where);

nlohmann::json grid_to_json(const VoxelGridSpec& spec);
VoxelGridSpec grid_from_json(const nlohmann::json& j, const std::string& where);

// Cameras serialize K and T_e2c as flat row-major arrays (9 and 16 numbers)
// plus "image_size": [H', W'].
nlohmann::json camera_to_json(const Camera& cam);
Camera camera_from_json(const nlohmann::json& j, const std::string& where);

}  // namespace bevocc
