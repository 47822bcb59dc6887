#include "hwscene/triangle_mesh.hpp"

#include "hwscene/error.hpp"

#include <algorithm>

namespace hwscene {

double triangle_area(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

void TriangleMesh::drop_degenerate(double min_area) {
  std::erase_if(triangles, [&](const auto& t) {
    return !(triangle_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]) > min_area);
  });
}

TriangleMesh TriangleMesh::transformed(const Rigid3d& xf) const {
  TriangleMesh out = *this;
  for (auto& v : out.vertices) v = xf * v;
  return out;
}

void TriangleMesh::append(const TriangleMesh& other) {
  const auto base = static_cast<std::uint32_t>(vertices.size());
  vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
  for (const auto& t : other.triangles) triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
}

void TriangleMesh::validate() const {
  for (const auto& t : triangles) {
    for (auto i : t) {
      if (i >= vertices.size()) {
        throw Error(ErrorKind::integrity, "mesh_distance", "triangle index " + std::to_string(i) + " out of range");
      }
    }
  }
}

TriangleMesh make_box(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
  TriangleMesh m;
  for (int i = 0; i < 8; ++i) {
    m.vertices.emplace_back((i & 1) ? hi.x() : lo.x(), (i & 2) ? hi.y() : lo.y(), (i & 4) ? hi.z() : lo.z());
  }
  // Two triangles per face, counter-clockwise seen from outside.
  m.triangles = {{0, 2, 1}, {1, 2, 3},   // -z
                 {4, 5, 6}, {5, 7, 6},   // +z
                 {0, 1, 4}, {1, 5, 4},   // -y
                 {2, 6, 3}, {3, 6, 7},   // +y
                 {0, 4, 2}, {2, 4, 6},   // -x
                 {1, 3, 5}, {3, 7, 5}};  // +x
  return m;
}

}  // namespace hwscene
