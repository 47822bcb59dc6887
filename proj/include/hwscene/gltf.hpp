#pragma once

#include "hwscene/triangle_mesh.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hwscene {

/// Node of a glTF 2.0 scene graph, reduced to what the assembly loader
/// consumes: hierarchy, TRS and triangle geometry.
struct GltfNode {
  std::string name;
  std::vector<int> children;
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d scale = Eigen::Vector3d::Ones();
  /// Triangles of all primitives of the node's mesh, in node-local units.
  std::optional<TriangleMesh> mesh;
};

struct GltfDocument {
  std::vector<GltfNode> nodes;
  std::vector<int> roots;
};

/// Parses a binary glTF (.glb) container. Only POSITION and indices of
/// TRIANGLES primitives are read; buffers must live in the BIN chunk.
GltfDocument parse_glb(std::string_view bytes);

/// Writes a .glb with one mesh per node that carries geometry.
std::string write_glb(const GltfDocument& doc);

}  // namespace hwscene
