#pragma once

#include "hwscene/geometry.hpp"
#include "hwscene/json_io.hpp"
#include "hwscene/triangle_mesh.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hwscene {

/// A CAD part. `local_transform` maps the part frame into its parent frame;
/// the mesh, if any, is expressed in the part frame. Millimetres throughout.
struct Part {
  std::string part_id;
  std::string name;
  std::optional<std::string> parent;
  Rigid3d local_transform = Rigid3d::Identity();
  std::optional<TriangleMesh> mesh;
  std::vector<std::string> children;
};

enum class TagRole { grounding, constraint };

/// A fiducial tag fixed to the hardware. Corners are given in the assembly
/// frame at the zero-joint pose, in detector corner order.
struct TagAnchor {
  int tag_id = 0;
  TagRole role = TagRole::grounding;
  std::string attached_part;
  std::array<Eigen::Vector3d, 4> corners_cad;
  double side_length = 0;

  Eigen::Vector3d center() const {
    return (corners_cad[0] + corners_cad[1] + corners_cad[2] + corners_cad[3]) / 4.0;
  }
};

enum class DofKind { prismatic, revolute };

/// One joint. Axis and origin are expressed in the assembly frame at the
/// zero-joint pose and ride along with the moving part's parent.
struct DofSpec {
  std::string dof_id;
  std::string moving_part;
  DofKind kind = DofKind::prismatic;
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  int constraint_tag = 0;
  Eigen::Vector3d nominal_tag_center = Eigen::Vector3d::Zero();
  double limit_min = 0;
  double limit_max = 0;

  /// Joint motion in the assembly frame for joint value `value`.
  Rigid3d motion(double value) const;
};

struct DocLink {
  std::vector<std::string> part_ids;
  std::string title;
  std::string url;
};

using JointValues = std::map<std::string, double>;

struct Assembly {
  std::map<std::string, Part> parts;
  std::string root;
  std::vector<TagAnchor> tags;
  std::vector<DofSpec> dofs;
  std::vector<DocLink> docs;
  JointValues joint_values;
  /// SHA-256 over the canonical part tree and manifest.
  std::string content_hash;

  const Part& part(const std::string& id) const;
  bool has_part(const std::string& id) const { return parts.contains(id); }
  const TagAnchor* find_tag(int tag_id) const;
  const DofSpec* find_dof(const std::string& dof_id) const;
  /// DOFs whose moving part is `part_id`, in manifest order.
  std::vector<const DofSpec*> dofs_moving(const std::string& part_id) const;

  /// Ids of strict ancestors of `id`, nearest first.
  std::vector<std::string> ancestors(const std::string& id) const;
  /// Ids of the subtree rooted at `id`, including `id`.
  std::vector<std::string> subtree(const std::string& id) const;

  /// Zero-joint world transform of every part.
  std::map<std::string, Rigid3d> zero_pose;
};

struct AssemblyLoadOptions {
  /// Length unit of the scene-graph file. glTF is metres by definition.
  double gltf_to_mm = 1000.0;
};

/// Builds an Assembly from a .glb container and its sidecar manifest (JSON).
Assembly load_assembly(std::string_view glb_bytes, std::string_view manifest_json, AssemblyLoadOptions options = {});
Assembly load_assembly_files(const std::filesystem::path& glb, const std::filesystem::path& manifest);

/// Throws Error(validation) for unknown DOFs or values outside limits.
void validate_joint_values(const Assembly& asm_, const JointValues& joints);

/// World transform of a part with every DOF inserted between the moving part
/// and its parent, after the part's local transform. Missing joints read 0.
Rigid3d part_world_transform(const Assembly& asm_, const std::string& part_id, const JointValues& joints);

/// Maps a point given in the assembly frame at zero pose onto the posed part.
Eigen::Vector3d posed_point(const Assembly& asm_, const std::string& part_id, const JointValues& joints,
                            const Eigen::Vector3d& zero_pose_point);

/// Tag corners in the assembly frame under `joints`.
std::array<Eigen::Vector3d, 4> tag_corners_at(const Assembly& asm_, const TagAnchor& tag, const JointValues& joints);

/// DocLinks attached to the part, any ancestor or any descendant.
std::vector<DocLink> docs_for_part(const Assembly& asm_, const std::string& part_id);

/// Manifest-shaped JSON (tags, dofs, docs, joint_values).
json manifest_to_json(const Assembly& asm_);
/// Part tree without meshes, for API responses.
json part_tree_to_json(const Assembly& asm_);

std::string_view to_string(TagRole role);
std::string_view to_string(DofKind kind);

}  // namespace hwscene
