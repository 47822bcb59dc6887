#pragma once

#include "hwscene/geometry.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace hwscene {

struct TriangleMesh {
  Points3d vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;

  bool empty() const { return triangles.empty(); }

  /// Removes triangles whose area is at most `min_area` (mm^2).
  void drop_degenerate(double min_area = 1e-12);
  TriangleMesh transformed(const Rigid3d& xf) const;
  void append(const TriangleMesh& other);
  /// Throws Error(integrity) on out-of-range indices.
  void validate() const;
};

double triangle_area(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c);

/// Axis-aligned box mesh with 12 outward-facing triangles.
TriangleMesh make_box(const Eigen::Vector3d& min, const Eigen::Vector3d& max);

}  // namespace hwscene
