#pragma once

#include "hwscene/assembly.hpp"
#include "hwscene/splat.hpp"
#include "hwscene/triangle_mesh.hpp"

#include <Eigen/Geometry>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hwscene {

/// Closest point on triangle (a, b, c) to p, by Voronoi-region classification.
template <typename Scalar>
Vector3<Scalar> closest_point_on_triangle(const Vector3<Scalar>& p, const Vector3<Scalar>& a, const Vector3<Scalar>& b,
                                          const Vector3<Scalar>& c) {
  const Vector3<Scalar> ab = b - a, ac = c - a, ap = p - a;
  const Scalar d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= Scalar(0) && d2 <= Scalar(0)) return a;

  const Vector3<Scalar> bp = p - b;
  const Scalar d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= Scalar(0) && d4 <= d3) return b;

  const Scalar vc = d1 * d4 - d3 * d2;
  if (vc <= Scalar(0) && d1 >= Scalar(0) && d3 <= Scalar(0)) return a + (d1 / (d1 - d3)) * ab;

  const Vector3<Scalar> cp = p - c;
  const Scalar d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= Scalar(0) && d5 <= d6) return c;

  const Scalar vb = d5 * d2 - d1 * d6;
  if (vb <= Scalar(0) && d2 >= Scalar(0) && d6 <= Scalar(0)) return a + (d2 / (d2 - d6)) * ac;

  const Scalar va = d3 * d6 - d5 * d4;
  if (va <= Scalar(0) && (d4 - d3) >= Scalar(0) && (d5 - d6) >= Scalar(0)) {
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  }

  const Scalar denom = Scalar(1) / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

/// One mesh placed in world space, tagged with the part it belongs to.
struct MeshInstance {
  const TriangleMesh* mesh = nullptr;
  Rigid3d transform = Rigid3d::Identity();
  std::string part_id;
};

struct NearestTriangle {
  double distance = 0;
  std::string part_id;
  std::size_t triangle = 0;  // index into SpatialIndex::triangles()
  Eigen::Vector3d closest = Eigen::Vector3d::Zero();
};

/// Bounding-volume hierarchy over world-space triangles. Immutable after
/// construction; queries are safe from any thread.
class SpatialIndex {
 public:
  struct Triangle {
    Eigen::Vector3d a, b, c;
    std::uint32_t part = 0;  // index into part_ids()
  };
  struct Node {
    Eigen::AlignedBox3d box;
    /// Children for inner nodes; `first`/`count` for leaves (count > 0).
    std::uint32_t left = 0, right = 0;
    std::uint32_t first = 0, count = 0;
    bool is_leaf() const { return count > 0; }
  };

  static constexpr std::uint32_t kLeafSize = 8;

  /// Throws Error(validation) when the instances carry no triangles.
  static SpatialIndex build(std::span<const MeshInstance> meshes);

  NearestTriangle nearest(const Eigen::Vector3d& p) const;
  double distance(const Eigen::Vector3d& p) const { return nearest(p).distance; }
  /// Exhaustive search over every triangle; reference for the tree query.
  NearestTriangle nearest_linear(const Eigen::Vector3d& p) const;

  const Eigen::AlignedBox3d& bounds() const { return nodes_.front().box; }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Triangle>& triangles() const { return triangles_; }
  const std::vector<std::string>& part_ids() const { return part_ids_; }

 private:
  std::uint32_t build_node(std::uint32_t first, std::uint32_t count);

  std::vector<Triangle> triangles_;
  std::vector<Node> nodes_;
  std::vector<std::string> part_ids_;
};

SpatialIndex build_index(std::span<const MeshInstance> meshes);

/// Distance to the closest triangle and the part that owns it.
inline NearestTriangle distance_point_to_meshes(const SpatialIndex& index, const Eigen::Vector3d& p) {
  return index.nearest(p);
}

/// Index over every part mesh of the assembly posed with `joints`.
SpatialIndex build_assembly_index(const Assembly& asm_, const JointValues& joints);

/// Work-surface region below the hardware: the xy footprint of the hardware
/// bounds grown by `xy_margin`, with z in [min_z + z_min_offset, min_z + z_max_offset].
struct WorkspaceSlab {
  double z_min_offset = -20.0;
  double z_max_offset = 5.0;
  double xy_margin = 100.0;

  bool contains(const Eigen::AlignedBox3d& hardware, const Eigen::Vector3d& p) const;
};

struct MaskOptions {
  double tau = 30.0;
  std::optional<WorkspaceSlab> slab = WorkspaceSlab{};
};

/// keep[i] when gaussian i lies within `tau` of the meshes or inside the slab
/// around the index bounds. Throws Error(validation) for tau <= 0.
std::vector<bool> compute_background_mask(const SplatCloud& cloud, const SpatialIndex& index, double tau,
                                          const std::optional<WorkspaceSlab>& slab);

/// Background mask against the zero pose and, when `joints` is non-empty,
/// also the posed assembly; a gaussian near either is kept. The slab uses the
/// zero-pose bounds.
std::vector<bool> privacy_mask(const SplatCloud& cloud, const Assembly& asm_, const JointValues& joints,
                               const MaskOptions& options = {});

}  // namespace hwscene
