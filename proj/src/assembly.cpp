#include "hwscene/assembly.hpp"

#include "hwscene/error.hpp"
#include "hwscene/gltf.hpp"
#include "hwscene/io_util.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

namespace hwscene {

namespace {

constexpr const char* kModule = "cad_assembly";
constexpr const char* kSyntheticRoot = "__assembly__";

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorKind::validation, kModule, what); }

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

[[noreturn]] void unknown_node(const Assembly& asm_, const std::string& name, const std::string& context) {
  std::vector<std::pair<std::size_t, std::string>> ranked;
  for (const auto& [id, p] : asm_.parts) ranked.emplace_back(edit_distance(name, id), id);
  std::sort(ranked.begin(), ranked.end());
  std::string msg = context + ": unknown node name '" + name + "'; candidates:";
  for (std::size_t i = 0; i < std::min<std::size_t>(5, ranked.size()); ++i) msg += " '" + ranked[i].second + "'";
  throw Error(ErrorKind::binding, kModule, msg);
}

Eigen::Matrix4d rigid_rows(const Rigid3d& xf) { return xf.matrix(); }

std::string mesh_digest(const TriangleMesh& mesh) {
  std::string bytes;
  for (const auto& v : mesh.vertices) bytes.append(reinterpret_cast<const char*>(v.data()), sizeof(double) * 3);
  for (const auto& t : mesh.triangles) bytes.append(reinterpret_cast<const char*>(t.data()), sizeof(std::uint32_t) * 3);
  return sha256_hex(bytes);
}

void validate_tag(const TagAnchor& tag) {
  const auto tag_name = "tag " + std::to_string(tag.tag_id);
  if (!(tag.side_length > 0)) invalid(tag_name + ": side_length must be positive");
  Eigen::Matrix<double, 3, 4> centered;
  const Eigen::Vector3d c = tag.center();
  for (int i = 0; i < 4; ++i) centered.col(i) = tag.corners_cad[static_cast<std::size_t>(i)] - c;
  const Eigen::JacobiSVD<Eigen::Matrix<double, 3, 4>> svd(centered, Eigen::ComputeFullU);
  const Eigen::Vector3d normal = svd.matrixU().col(2);
  for (int i = 0; i < 4; ++i) {
    if (std::abs(normal.dot(centered.col(i))) > 1e-3) invalid(tag_name + ": corners are not coplanar within 1e-3 mm");
  }
  for (std::size_t i = 0; i < 4; ++i) {
    const double side = (tag.corners_cad[(i + 1) % 4] - tag.corners_cad[i]).norm();
    if (std::abs(side - tag.side_length) > 1e-3) {
      invalid(tag_name + ": side " + std::to_string(i) + " measures " + format_double(side) + " mm, expected " +
              format_double(tag.side_length));
    }
  }
}

TagAnchor tag_from_json(const json& j) {
  TagAnchor t;
  t.tag_id = j.at("tag_id").get<int>();
  const auto role = j.at("role").get<std::string>();
  if (role == "grounding") t.role = TagRole::grounding;
  else if (role == "constraint") t.role = TagRole::constraint;
  else invalid("tag " + std::to_string(t.tag_id) + ": unknown role '" + role + "'");
  t.attached_part = j.contains("attached_part") ? j.at("attached_part").get<std::string>() : j.at("part").get<std::string>();
  const auto& corners = j.at("corners");
  if (!corners.is_array() || corners.size() != 4) invalid("tag " + std::to_string(t.tag_id) + ": expected 4 corners");
  for (std::size_t i = 0; i < 4; ++i) t.corners_cad[i] = vec3_from_json(corners[i]);
  t.side_length = j.at("side_length").get<double>();
  return t;
}

DofSpec dof_from_json(const json& j, const std::vector<TagAnchor>& tags) {
  DofSpec d;
  d.dof_id = j.at("dof_id").get<std::string>();
  d.moving_part = j.at("moving_part").get<std::string>();
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "prismatic") d.kind = DofKind::prismatic;
  else if (kind == "revolute") d.kind = DofKind::revolute;
  else invalid("dof " + d.dof_id + ": unknown kind '" + kind + "'");
  d.axis = vec3_from_json(j.at("axis"));
  if (d.kind == DofKind::revolute) d.origin = vec3_from_json(j.at("origin"));
  else if (j.contains("origin")) d.origin = vec3_from_json(j.at("origin"));
  d.constraint_tag = j.at("constraint_tag").get<int>();
  const auto limits = j.at("limits");
  if (!limits.is_array() || limits.size() != 2) invalid("dof " + d.dof_id + ": limits must be [min, max]");
  d.limit_min = limits[0].get<double>();
  d.limit_max = limits[1].get<double>();
  const auto tag = std::find_if(tags.begin(), tags.end(), [&](const auto& t) { return t.tag_id == d.constraint_tag; });
  if (tag == tags.end()) invalid("dof " + d.dof_id + ": constraint tag " + std::to_string(d.constraint_tag) + " not declared");
  if (tag->role != TagRole::constraint) invalid("dof " + d.dof_id + ": tag " + std::to_string(d.constraint_tag) + " is not a constraint tag");
  d.nominal_tag_center = j.contains("nominal_tag_center") ? vec3_from_json(j.at("nominal_tag_center")) : tag->center();
  return d;
}

}  // namespace

std::string_view to_string(TagRole role) { return role == TagRole::grounding ? "grounding" : "constraint"; }
std::string_view to_string(DofKind kind) { return kind == DofKind::prismatic ? "prismatic" : "revolute"; }

Rigid3d DofSpec::motion(double value) const {
  if (kind == DofKind::prismatic) {
    Rigid3d m = Rigid3d::Identity();
    m.translation() = value * axis;
    return m;
  }
  return rotation_about_line(axis, origin, value);
}

const Part& Assembly::part(const std::string& id) const {
  const auto it = parts.find(id);
  if (it == parts.end()) throw Error(ErrorKind::not_found, kModule, "unknown part '" + id + "'");
  return it->second;
}

const TagAnchor* Assembly::find_tag(int tag_id) const {
  for (const auto& t : tags) {
    if (t.tag_id == tag_id) return &t;
  }
  return nullptr;
}

const DofSpec* Assembly::find_dof(const std::string& dof_id) const {
  for (const auto& d : dofs) {
    if (d.dof_id == dof_id) return &d;
  }
  return nullptr;
}

std::vector<const DofSpec*> Assembly::dofs_moving(const std::string& part_id) const {
  std::vector<const DofSpec*> out;
  for (const auto& d : dofs) {
    if (d.moving_part == part_id) out.push_back(&d);
  }
  return out;
}

std::vector<std::string> Assembly::ancestors(const std::string& id) const {
  std::vector<std::string> out;
  const Part* p = &part(id);
  while (p->parent) {
    out.push_back(*p->parent);
    p = &part(*p->parent);
  }
  return out;
}

std::vector<std::string> Assembly::subtree(const std::string& id) const {
  std::vector<std::string> out{id};
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& kids = part(out[i]).children;
    out.insert(out.end(), kids.begin(), kids.end());
  }
  return out;
}

Assembly load_assembly(std::string_view glb_bytes, std::string_view manifest_json, AssemblyLoadOptions options) {
  const json manifest = parse_json(manifest_json, kModule, "assembly manifest");
  if (manifest.contains("gltf_unit")) {
    const auto unit = manifest.at("gltf_unit").get<std::string>();
    if (unit == "m") options.gltf_to_mm = 1000.0;
    else if (unit == "mm") options.gltf_to_mm = 1.0;
    else invalid("gltf_unit must be 'm' or 'mm'");
  }
  const GltfDocument doc = parse_glb(glb_bytes);
  if (doc.nodes.empty() || doc.roots.empty()) throw Error(ErrorKind::integrity, kModule, "scene graph has no nodes");

  Assembly asm_;
  // Stable unique ids: node name, "node_<i>" when unnamed, "#k" suffix on repeats.
  std::vector<std::string> ids(doc.nodes.size());
  std::map<std::string, int> seen;
  for (std::size_t i = 0; i < doc.nodes.size(); ++i) {
    std::string base = doc.nodes[i].name.empty() ? "node_" + std::to_string(i) : doc.nodes[i].name;
    const int n = ++seen[base];
    ids[i] = n == 1 ? base : base + "#" + std::to_string(n);
  }

  const double unit = options.gltf_to_mm;
  std::function<void(int, const std::optional<std::string>&, double)> add = [&](int index, const std::optional<std::string>& parent,
                                                                               double parent_scale) {
    const auto& node = doc.nodes[static_cast<std::size_t>(index)];
    const double s = node.scale.x();
    if (!(s > 0) || std::abs(node.scale.y() - s) > 1e-9 * s || std::abs(node.scale.z() - s) > 1e-9 * s) {
      throw Error(ErrorKind::unsupported, kModule, "node '" + ids[static_cast<std::size_t>(index)] + "' has non-uniform scale");
    }
    const double own_scale = parent_scale * s;
    Part p;
    p.part_id = ids[static_cast<std::size_t>(index)];
    p.name = node.name;
    p.parent = parent;
    p.local_transform.linear() = node.rotation.toRotationMatrix();
    p.local_transform.translation() = parent_scale * unit * node.translation;
    if (node.mesh) {
      TriangleMesh m = *node.mesh;
      for (auto& v : m.vertices) v *= own_scale * unit;
      m.drop_degenerate();
      p.mesh = std::move(m);
    }
    for (int c : node.children) p.children.push_back(ids[static_cast<std::size_t>(c)]);
    const auto id = p.part_id;
    asm_.parts.emplace(id, std::move(p));
    for (int c : node.children) add(c, id, own_scale);
  };

  if (doc.roots.size() == 1) {
    asm_.root = ids[static_cast<std::size_t>(doc.roots.front())];
    add(doc.roots.front(), std::nullopt, 1.0);
  } else {
    Part root;
    root.part_id = root.name = kSyntheticRoot;
    for (int r : doc.roots) root.children.push_back(ids[static_cast<std::size_t>(r)]);
    asm_.root = kSyntheticRoot;
    asm_.parts.emplace(kSyntheticRoot, root);
    for (int r : doc.roots) add(r, std::string(kSyntheticRoot), 1.0);
  }

  try {
    for (const auto& t : manifest.value("tags", json::array())) {
      TagAnchor tag = tag_from_json(t);
      if (!asm_.has_part(tag.attached_part)) unknown_node(asm_, tag.attached_part, "tag " + std::to_string(tag.tag_id));
      if (asm_.find_tag(tag.tag_id)) invalid("duplicate tag id " + std::to_string(tag.tag_id));
      validate_tag(tag);
      asm_.tags.push_back(std::move(tag));
    }
    if (std::none_of(asm_.tags.begin(), asm_.tags.end(), [](const auto& t) { return t.role == TagRole::grounding; })) {
      invalid("manifest declares no grounding tag");
    }
    for (const auto& d : manifest.value("dofs", json::array())) {
      DofSpec dof = dof_from_json(d, asm_.tags);
      if (!asm_.has_part(dof.moving_part)) unknown_node(asm_, dof.moving_part, "dof " + dof.dof_id);
      if (asm_.find_dof(dof.dof_id)) invalid("duplicate dof id " + dof.dof_id);
      if (std::abs(dof.axis.norm() - 1.0) > 1e-9) invalid("dof " + dof.dof_id + ": axis is not unit length");
      if (!(dof.limit_min <= dof.limit_max)) invalid("dof " + dof.dof_id + ": limits must satisfy min <= max");
      asm_.dofs.push_back(std::move(dof));
    }
    for (const auto& d : manifest.value("docs", json::array())) {
      DocLink doc_link;
      doc_link.part_ids = d.at("part_ids").get<std::vector<std::string>>();
      doc_link.title = d.value("title", "");
      doc_link.url = d.at("url").get<std::string>();
      if (doc_link.part_ids.empty()) invalid("doc '" + doc_link.title + "' references no parts");
      for (const auto& pid : doc_link.part_ids) {
        if (!asm_.has_part(pid)) unknown_node(asm_, pid, "doc '" + doc_link.title + "'");
      }
      asm_.docs.push_back(std::move(doc_link));
    }
    for (const auto& d : asm_.dofs) asm_.joint_values[d.dof_id] = 0.0;
    for (const auto& [k, v] : manifest.value("joint_values", json::object()).items()) asm_.joint_values[k] = v.get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::schema, kModule, std::string("assembly manifest: ") + e.what());
  }
  validate_joint_values(asm_, asm_.joint_values);

  // Zero pose, parents before children.
  for (const auto& id : asm_.subtree(asm_.root)) {
    const auto& p = asm_.parts.at(id);
    asm_.zero_pose[id] = p.parent ? asm_.zero_pose.at(*p.parent) * p.local_transform : p.local_transform;
  }

  json canon;
  canon["root"] = asm_.root;
  for (const auto& [id, p] : asm_.parts) {
    json jp;
    jp["name"] = p.name;
    jp["parent"] = p.parent ? json(*p.parent) : json(nullptr);
    const Eigen::Matrix4d m = rigid_rows(p.local_transform);
    json local = json::array();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) local.push_back(format_double(m(r, c)));
    }
    jp["local"] = local;
    jp["mesh"] = p.mesh ? json(mesh_digest(*p.mesh)) : json(nullptr);
    canon["parts"][id] = jp;
  }
  json man = manifest_to_json(asm_);
  man.erase("joint_values");
  canon["manifest"] = man;
  asm_.content_hash = sha256_hex(canon.dump());
  return asm_;
}

Assembly load_assembly_files(const std::filesystem::path& glb, const std::filesystem::path& manifest) {
  return load_assembly(read_file(glb), read_file(manifest));
}

void validate_joint_values(const Assembly& asm_, const JointValues& joints) {
  for (const auto& [id, v] : joints) {
    const auto* d = asm_.find_dof(id);
    if (!d) invalid("joint value for unknown dof '" + id + "'");
    if (!std::isfinite(v) || v < d->limit_min || v > d->limit_max) {
      invalid("joint value " + format_double(v) + " for dof '" + id + "' outside limits [" + format_double(d->limit_min) +
              ", " + format_double(d->limit_max) + "]");
    }
  }
}

Rigid3d part_world_transform(const Assembly& asm_, const std::string& part_id, const JointValues& joints) {
  const Part& leaf = asm_.part(part_id);
  std::vector<const Part*> chain{&leaf};
  while (chain.back()->parent) chain.push_back(&asm_.part(*chain.back()->parent));

  Rigid3d world = Rigid3d::Identity();
  for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
    const Part& p = **it;
    world = world * p.local_transform;
    for (const DofSpec* d : asm_.dofs_moving(p.part_id)) {
      const auto jv = joints.find(d->dof_id);
      const double value = jv == joints.end() ? 0.0 : jv->second;
      if (value == 0.0) continue;
      const Rigid3d& w0 = asm_.zero_pose.at(p.part_id);
      world = world * (w0.inverse(Eigen::Isometry) * d->motion(value) * w0);
    }
  }
  return world;
}

Eigen::Vector3d posed_point(const Assembly& asm_, const std::string& part_id, const JointValues& joints,
                            const Eigen::Vector3d& zero_pose_point) {
  const Rigid3d w = part_world_transform(asm_, part_id, joints);
  return w * (asm_.zero_pose.at(part_id).inverse(Eigen::Isometry) * zero_pose_point);
}

std::array<Eigen::Vector3d, 4> tag_corners_at(const Assembly& asm_, const TagAnchor& tag, const JointValues& joints) {
  const Rigid3d w = part_world_transform(asm_, tag.attached_part, joints);
  const Rigid3d rel = w * asm_.zero_pose.at(tag.attached_part).inverse(Eigen::Isometry);
  std::array<Eigen::Vector3d, 4> out;
  for (std::size_t i = 0; i < 4; ++i) out[i] = rel * tag.corners_cad[i];
  return out;
}

std::vector<DocLink> docs_for_part(const Assembly& asm_, const std::string& part_id) {
  std::set<std::string> related;
  for (auto& a : asm_.ancestors(part_id)) related.insert(std::move(a));
  for (auto& d : asm_.subtree(part_id)) related.insert(std::move(d));
  std::vector<DocLink> out;
  for (const auto& doc : asm_.docs) {
    if (std::any_of(doc.part_ids.begin(), doc.part_ids.end(), [&](const auto& p) { return related.contains(p); })) {
      out.push_back(doc);
    }
  }
  return out;
}

json manifest_to_json(const Assembly& asm_) {
  json out;
  out["tags"] = json::array();
  for (const auto& t : asm_.tags) {
    json corners = json::array();
    for (const auto& c : t.corners_cad) corners.push_back(to_json(c));
    out["tags"].push_back({{"tag_id", t.tag_id},
                           {"role", to_string(t.role)},
                           {"attached_part", t.attached_part},
                           {"corners", corners},
                           {"side_length", t.side_length}});
  }
  out["dofs"] = json::array();
  for (const auto& d : asm_.dofs) {
    out["dofs"].push_back({{"dof_id", d.dof_id},
                           {"moving_part", d.moving_part},
                           {"kind", to_string(d.kind)},
                           {"axis", to_json(d.axis)},
                           {"origin", to_json(d.origin)},
                           {"constraint_tag", d.constraint_tag},
                           {"nominal_tag_center", to_json(d.nominal_tag_center)},
                           {"limits", {d.limit_min, d.limit_max}}});
  }
  out["docs"] = json::array();
  for (const auto& d : asm_.docs) out["docs"].push_back({{"part_ids", d.part_ids}, {"title", d.title}, {"url", d.url}});
  out["joint_values"] = asm_.joint_values;
  return out;
}

json part_tree_to_json(const Assembly& asm_) {
  json parts = json::object();
  for (const auto& [id, p] : asm_.parts) {
    parts[id] = {{"name", p.name},
                 {"parent", p.parent ? json(*p.parent) : json(nullptr)},
                 {"children", p.children},
                 {"local_transform", to_json(p.local_transform)},
                 {"has_mesh", p.mesh.has_value()}};
  }
  return {{"root", asm_.root}, {"parts", parts}, {"content_hash", asm_.content_hash}};
}

}  // namespace hwscene
