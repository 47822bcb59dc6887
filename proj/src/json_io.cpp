#include "hwscene/json_io.hpp"

#include "hwscene/error.hpp"

#include <charconv>

namespace hwscene {

namespace {
[[noreturn]] void bad(const std::string& what) { throw Error(ErrorKind::schema, "json", what); }

double number(const json& j) {
  if (!j.is_number()) bad("expected a number, got " + j.dump());
  return j.get<double>();
}
}  // namespace

json to_json(const Eigen::Vector2d& v) { return json::array({v.x(), v.y()}); }
json to_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

json to_json(const Eigen::Matrix3d& m) {
  json out = json::array();
  for (int r = 0; r < 3; ++r) out.push_back(json::array({m(r, 0), m(r, 1), m(r, 2)}));
  return out;
}

json to_json(const Eigen::Quaterniond& q) { return json::array({q.w(), q.x(), q.y(), q.z()}); }

json to_json(const SimilarityTransformd& xf) {
  return {{"scale", xf.scale}, {"rotation", to_json(xf.rotation)}, {"translation", to_json(xf.translation)}};
}

json to_json(const Rigid3d& xf) {
  return {{"rotation", to_json(Eigen::Matrix3d(xf.linear()))},
          {"translation", to_json(Eigen::Vector3d(xf.translation()))}};
}

Eigen::Vector2d vec2_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) bad("expected [x, y], got " + j.dump());
  return {number(j[0]), number(j[1])};
}

Eigen::Vector3d vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) bad("expected [x, y, z], got " + j.dump());
  return {number(j[0]), number(j[1]), number(j[2])};
}

Eigen::Matrix3d mat3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) bad("expected a 3x3 nested array");
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r) m.row(r) = vec3_from_json(j[static_cast<std::size_t>(r)]).transpose();
  return m;
}

Eigen::Quaterniond quat_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) bad("expected [w, x, y, z], got " + j.dump());
  return Eigen::Quaterniond(number(j[0]), number(j[1]), number(j[2]), number(j[3]));
}

SimilarityTransformd similarity_from_json(const json& j) {
  SimilarityTransformd xf;
  try {
    xf.scale = number(j.at("scale"));
    xf.rotation = mat3_from_json(j.at("rotation"));
    xf.translation = vec3_from_json(j.at("translation"));
  } catch (const json::exception& e) {
    bad(std::string("similarity transform: ") + e.what());
  }
  return xf;
}

Rigid3d rigid_from_json(const json& j) {
  Rigid3d xf = Rigid3d::Identity();
  try {
    xf.linear() = mat3_from_json(j.at("rotation"));
    xf.translation() = vec3_from_json(j.at("translation"));
  } catch (const json::exception& e) {
    bad(std::string("rigid transform: ") + e.what());
  }
  return xf;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

json parse_json(std::string_view text, const std::string& module, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::parse, module, what + ": " + e.what());
  }
}

}  // namespace hwscene
