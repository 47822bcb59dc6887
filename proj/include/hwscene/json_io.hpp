#pragma once

#include "hwscene/geometry.hpp"

#include <json.hpp>

#include <string>

namespace hwscene {

using json = nlohmann::json;

json to_json(const Eigen::Vector2d& v);
json to_json(const Eigen::Vector3d& v);
json to_json(const Eigen::Matrix3d& m);  // row-major nested arrays
json to_json(const Eigen::Quaterniond& q);  // [w, x, y, z]
json to_json(const SimilarityTransformd& xf);
json to_json(const Rigid3d& xf);  // {"rotation": 3x3, "translation": [..]}

Eigen::Vector2d vec2_from_json(const json& j);
Eigen::Vector3d vec3_from_json(const json& j);
Eigen::Matrix3d mat3_from_json(const json& j);
Eigen::Quaterniond quat_from_json(const json& j);
SimilarityTransformd similarity_from_json(const json& j);
Rigid3d rigid_from_json(const json& j);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

/// Wraps nlohmann parse errors into Error(parse, module).
json parse_json(std::string_view text, const std::string& module, const std::string& what);

}  // namespace hwscene
