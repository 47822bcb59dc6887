#include "hwscene/splat.hpp"

#include "hwscene/error.hpp"
#include "hwscene/io_util.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <map>
#include <optional>
#include <sstream>

namespace hwscene {

namespace {

constexpr const char* kModule = "splat_store";

enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

std::optional<PlyType> ply_type(std::string_view s) {
  if (s == "char" || s == "int8") return PlyType::i8;
  if (s == "uchar" || s == "uint8") return PlyType::u8;
  if (s == "short" || s == "int16") return PlyType::i16;
  if (s == "ushort" || s == "uint16") return PlyType::u16;
  if (s == "int" || s == "int32") return PlyType::i32;
  if (s == "uint" || s == "uint32") return PlyType::u32;
  if (s == "float" || s == "float32") return PlyType::f32;
  if (s == "double" || s == "float64") return PlyType::f64;
  return std::nullopt;
}

std::size_t type_size(PlyType t) {
  switch (t) {
    case PlyType::i8:
    case PlyType::u8: return 1;
    case PlyType::i16:
    case PlyType::u16: return 2;
    case PlyType::i32:
    case PlyType::u32:
    case PlyType::f32: return 4;
    case PlyType::f64: return 8;
  }
  return 0;
}

template <typename T>
T load(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

double read_scalar(PlyType t, const char* p) {
  switch (t) {
    case PlyType::i8: return load<std::int8_t>(p);
    case PlyType::u8: return load<std::uint8_t>(p);
    case PlyType::i16: return load<std::int16_t>(p);
    case PlyType::u16: return load<std::uint16_t>(p);
    case PlyType::i32: return load<std::int32_t>(p);
    case PlyType::u32: return load<std::uint32_t>(p);
    case PlyType::f32: return load<float>(p);
    case PlyType::f64: return load<double>(p);
  }
  return 0;
}

struct Property {
  std::string name;
  PlyType type;
  std::size_t offset;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> properties;
  std::size_t stride = 0;
  bool has_list = false;
};

[[noreturn]] void schema(const std::string& what) { throw Error(ErrorKind::schema, kModule, what); }

}  // namespace

void SplatCloud::validate() const {
  if (sh_degree < 0 || sh_degree > 3) schema("sh_degree must be within 0..3");
  const auto k = static_cast<std::size_t>(rest_coefficients(sh_degree));
  for (std::size_t i = 0; i < gaussians.size(); ++i) {
    const auto& g = gaussians[i];
    const auto tag = "gaussian " + std::to_string(i);
    if (g.color_rest.size() != k) schema(tag + ": color_rest size does not match sh_degree");
    if (!g.position.allFinite() || !g.rotation.coeffs().allFinite() || !g.log_scale.allFinite() ||
        !std::isfinite(g.opacity_logit) || !g.color_dc.allFinite()) {
      schema(tag + ": non-finite field");
    }
    for (const auto& c : g.color_rest) {
      if (!c.allFinite()) schema(tag + ": non-finite SH coefficient");
    }
    if (std::abs(g.rotation.norm() - 1.0) > 1e-6) schema(tag + ": rotation is not a unit quaternion");
  }
}

SplatCloud parse_splat_ply(std::string_view bytes, std::string fallback_source_id) {
  const auto header_end_tag = bytes.find("end_header");
  if (bytes.substr(0, 3) != "ply" || header_end_tag == std::string_view::npos) {
    schema("not a PLY file (missing magic or end_header)");
  }
  auto body_start = bytes.find('\n', header_end_tag);
  if (body_start == std::string_view::npos) schema("unterminated header");
  ++body_start;

  std::istringstream header(std::string(bytes.substr(0, header_end_tag)));
  std::string line;
  std::vector<Element> elements;
  std::string source_id;
  bool format_seen = false;
  while (std::getline(header, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "binary_little_endian") {
        throw Error(ErrorKind::unsupported, kModule, "unsupported PLY encoding '" + fmt + "'");
      }
      format_seen = true;
    } else if (kw == "comment") {
      std::string key;
      ls >> key;
      if (key == "source_id") ls >> source_id;
    } else if (kw == "element") {
      Element e;
      ls >> e.name >> e.count;
      if (ls.fail()) schema("bad element line: " + line);
      elements.push_back(std::move(e));
    } else if (kw == "property") {
      if (elements.empty()) schema("property before any element");
      std::string type_name, name;
      ls >> type_name;
      auto& e = elements.back();
      if (type_name == "list") {
        e.has_list = true;
        continue;
      }
      ls >> name;
      const auto t = ply_type(type_name);
      if (!t) schema("unknown property type '" + type_name + "'");
      e.properties.push_back({name, *t, e.stride});
      e.stride += type_size(*t);
    }
  }
  if (!format_seen) schema("missing format line");

  std::size_t offset = body_start;
  const Element* vertex = nullptr;
  for (const auto& e : elements) {
    if (e.name == "vertex") {
      vertex = &e;
      break;
    }
    if (e.has_list) throw Error(ErrorKind::unsupported, kModule, "list properties before vertex element");
    offset += e.stride * e.count;
  }
  if (!vertex) schema("missing vertex element");
  if (vertex->has_list) throw Error(ErrorKind::unsupported, kModule, "list properties in vertex element");

  std::map<std::string, const Property*> by_name;
  for (const auto& p : vertex->properties) by_name[p.name] = &p;
  const auto require = [&](const std::string& name) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) schema("missing required property '" + name + "'");
    return it->second;
  };
  const Property* pos[3] = {require("x"), require("y"), require("z")};
  const Property* dc[3] = {require("f_dc_0"), require("f_dc_1"), require("f_dc_2")};
  const Property* opacity = require("opacity");
  const Property* scale[3] = {require("scale_0"), require("scale_1"), require("scale_2")};
  const Property* rot[4] = {require("rot_0"), require("rot_1"), require("rot_2"), require("rot_3")};

  std::size_t n_rest = 0;
  while (by_name.contains("f_rest_" + std::to_string(n_rest))) ++n_rest;
  std::size_t rest_total = 0;
  for (const auto& p : vertex->properties) {
    if (p.name.rfind("f_rest_", 0) == 0) ++rest_total;
  }
  if (rest_total != n_rest) schema("f_rest properties are not numbered contiguously from 0");
  int degree = -1;
  for (int d = 0; d <= 3; ++d) {
    if (3u * static_cast<std::size_t>(SplatCloud::rest_coefficients(d)) == n_rest) degree = d;
  }
  if (degree < 0) schema("f_rest count " + std::to_string(n_rest) + " matches no SH degree 0..3");
  std::vector<const Property*> rest(n_rest);
  for (std::size_t i = 0; i < n_rest; ++i) rest[i] = by_name["f_rest_" + std::to_string(i)];

  if (offset + vertex->stride * vertex->count > bytes.size()) schema("vertex data truncated");

  SplatCloud cloud;
  cloud.sh_degree = degree;
  cloud.source_id = !source_id.empty() ? source_id
                    : !fallback_source_id.empty() ? std::move(fallback_source_id)
                                                  : sha256_hex(bytes);
  const auto k = static_cast<std::size_t>(SplatCloud::rest_coefficients(degree));
  cloud.gaussians.resize(vertex->count);
  for (std::size_t i = 0; i < vertex->count; ++i) {
    const char* rec = bytes.data() + offset + i * vertex->stride;
    const auto get = [rec](const Property* p) { return read_scalar(p->type, rec + p->offset); };
    auto& g = cloud.gaussians[i];
    for (int a = 0; a < 3; ++a) {
      g.position[a] = get(pos[a]);
      g.color_dc[a] = get(dc[a]);
      g.log_scale[a] = get(scale[a]);
    }
    g.opacity_logit = get(opacity);
    Eigen::Quaterniond q(get(rot[0]), get(rot[1]), get(rot[2]), get(rot[3]));
    const double n = q.norm();
    if (!(n > 0) || !std::isfinite(n)) schema("gaussian " + std::to_string(i) + ": zero or non-finite rotation");
    if (std::abs(n - 1.0) > 1e-6) q.coeffs() /= n;
    g.rotation = q;
    // f_rest is channel-major: all coefficients of R, then G, then B.
    g.color_rest.resize(k);
    for (std::size_t c = 0; c < k; ++c) {
      g.color_rest[c] = {get(rest[c]), get(rest[k + c]), get(rest[2 * k + c])};
    }
  }
  cloud.validate();
  return cloud;
}

std::string write_splat_ply(const SplatCloud& cloud) {
  cloud.validate();
  const auto k = static_cast<std::size_t>(SplatCloud::rest_coefficients(cloud.sh_degree));
  std::string out = "ply\nformat binary_little_endian 1.0\n";
  if (!cloud.source_id.empty()) out += "comment source_id " + cloud.source_id + "\n";
  out += "element vertex " + std::to_string(cloud.gaussians.size()) + "\n";
  for (const char* n : {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"}) {
    out += std::string("property float ") + n + "\n";
  }
  for (std::size_t i = 0; i < 3 * k; ++i) out += "property float f_rest_" + std::to_string(i) + "\n";
  for (const char* n : {"opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"}) {
    out += std::string("property float ") + n + "\n";
  }
  out += "end_header\n";

  const std::size_t floats = 17 + 3 * k;
  std::vector<float> rec(floats);
  out.reserve(out.size() + cloud.gaussians.size() * floats * sizeof(float));
  for (const auto& g : cloud.gaussians) {
    std::size_t j = 0;
    for (int a = 0; a < 3; ++a) rec[j++] = static_cast<float>(g.position[a]);
    for (int a = 0; a < 3; ++a) rec[j++] = 0.0f;
    for (int a = 0; a < 3; ++a) rec[j++] = static_cast<float>(g.color_dc[a]);
    for (int ch = 0; ch < 3; ++ch) {
      for (std::size_t c = 0; c < k; ++c) rec[j++] = static_cast<float>(g.color_rest[c][ch]);
    }
    rec[j++] = static_cast<float>(g.opacity_logit);
    for (int a = 0; a < 3; ++a) rec[j++] = static_cast<float>(g.log_scale[a]);
    rec[j++] = static_cast<float>(g.rotation.w());
    rec[j++] = static_cast<float>(g.rotation.x());
    rec[j++] = static_cast<float>(g.rotation.y());
    rec[j++] = static_cast<float>(g.rotation.z());
    out.append(reinterpret_cast<const char*>(rec.data()), floats * sizeof(float));
  }
  return out;
}

SplatCloud transform_splat(const SplatCloud& cloud, const SimilarityTransformd& xf, SplatTransformOptions options) {
  if (!xf.is_finite()) throw Error(ErrorKind::validation, kModule, "non-finite transform");
  if (!(xf.scale > 0)) throw Error(ErrorKind::validation, kModule, "transform scale must be positive");
  if (xf.is_identity()) return cloud;

  const bool rotated = xf.rotation != Eigen::Matrix3d::Identity();
  const bool drop_sh = rotated && !options.keep_unrotated_sh;
  const Eigen::Quaterniond qr(xf.rotation);
  const double log_s = std::log(xf.scale);

  SplatCloud out;
  out.source_id = cloud.source_id;
  out.sh_degree = drop_sh ? 0 : cloud.sh_degree;
  out.gaussians.reserve(cloud.gaussians.size());
  for (const auto& g : cloud.gaussians) {
    Gaussian h = g;
    h.position = xf(g.position);
    if (rotated) h.rotation = (qr * g.rotation).normalized();
    h.log_scale = g.log_scale.array() + log_s;
    if (drop_sh) h.color_rest.clear();
    out.gaussians.push_back(std::move(h));
  }
  return out;
}

SplatCloud prune_by_mask(const SplatCloud& cloud, const std::vector<bool>& keep) {
  if (keep.size() != cloud.gaussians.size()) {
    throw Error(ErrorKind::validation, kModule,
                "mask length " + std::to_string(keep.size()) + " != gaussian count " +
                    std::to_string(cloud.gaussians.size()));
  }
  SplatCloud out;
  out.sh_degree = cloud.sh_degree;
  out.source_id = cloud.source_id;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (keep[i]) out.gaussians.push_back(cloud.gaussians[i]);
  }
  return out;
}

}  // namespace hwscene
