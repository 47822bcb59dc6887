#include "hwscene/mesh_distance.hpp"

#include "hwscene/error.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <thread>

namespace hwscene {

namespace {

constexpr const char* kModule = "mesh_distance";

Eigen::AlignedBox3d triangle_box(const SpatialIndex::Triangle& t) {
  Eigen::AlignedBox3d box(t.a);
  box.extend(t.b);
  box.extend(t.c);
  return box;
}

Eigen::Vector3d triangle_centroid(const SpatialIndex::Triangle& t) { return (t.a + t.b + t.c) / 3.0; }

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, 16);
  if (n < 4096 || workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> threads;
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    threads.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
}

}  // namespace

SpatialIndex SpatialIndex::build(std::span<const MeshInstance> meshes) {
  SpatialIndex index;
  std::map<std::string, std::uint32_t> part_index;
  for (const auto& inst : meshes) {
    if (!inst.mesh) continue;
    auto [it, inserted] = part_index.emplace(inst.part_id, static_cast<std::uint32_t>(index.part_ids_.size()));
    if (inserted) index.part_ids_.push_back(inst.part_id);
    for (const auto& tri : inst.mesh->triangles) {
      index.triangles_.push_back({inst.transform * inst.mesh->vertices[tri[0]], inst.transform * inst.mesh->vertices[tri[1]],
                                  inst.transform * inst.mesh->vertices[tri[2]], it->second});
    }
  }
  if (index.triangles_.empty()) throw Error(ErrorKind::validation, kModule, "cannot build an index over zero triangles");
  index.nodes_.reserve(2 * index.triangles_.size() / kLeafSize + 1);
  index.build_node(0, static_cast<std::uint32_t>(index.triangles_.size()));
  return index;
}

std::uint32_t SpatialIndex::build_node(std::uint32_t first, std::uint32_t count) {
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.emplace_back();
  Eigen::AlignedBox3d box;
  Eigen::AlignedBox3d centroids;
  for (std::uint32_t i = first; i < first + count; ++i) {
    box.extend(triangle_box(triangles_[i]));
    centroids.extend(triangle_centroid(triangles_[i]));
  }
  nodes_[id].box = box;
  if (count <= kLeafSize) {
    nodes_[id].first = first;
    nodes_[id].count = count;
    return id;
  }

  Eigen::Index axis = 0;
  centroids.sizes().maxCoeff(&axis);
  const auto begin = triangles_.begin() + first;
  const auto mid = begin + count / 2;
  std::nth_element(begin, mid, begin + count, [axis](const Triangle& x, const Triangle& y) {
    return triangle_centroid(x)[axis] < triangle_centroid(y)[axis];
  });
  const std::uint32_t left_count = count / 2;
  const std::uint32_t left = build_node(first, left_count);
  const std::uint32_t right = build_node(first + left_count, count - left_count);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

NearestTriangle SpatialIndex::nearest(const Eigen::Vector3d& p) const {
  double best_sq = std::numeric_limits<double>::infinity();
  std::size_t best_tri = 0;
  Eigen::Vector3d best_point = Eigen::Vector3d::Zero();

  std::vector<std::uint32_t> stack;
  stack.reserve(64);
  stack.push_back(0);
  while (!stack.empty()) {
    const Node& node = nodes_[stack.back()];
    stack.pop_back();
    if (node.box.squaredExteriorDistance(p) > best_sq) continue;
    if (node.is_leaf()) {
      for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
        const auto& t = triangles_[i];
        const Eigen::Vector3d q = closest_point_on_triangle<double>(p, t.a, t.b, t.c);
        const double d = (q - p).squaredNorm();
        if (d < best_sq) {
          best_sq = d;
          best_tri = i;
          best_point = q;
        }
      }
      continue;
    }
    const double dl = nodes_[node.left].box.squaredExteriorDistance(p);
    const double dr = nodes_[node.right].box.squaredExteriorDistance(p);
    // Push the farther child first so the nearer one is searched first.
    if (dl <= dr) {
      if (dr <= best_sq) stack.push_back(node.right);
      if (dl <= best_sq) stack.push_back(node.left);
    } else {
      if (dl <= best_sq) stack.push_back(node.left);
      if (dr <= best_sq) stack.push_back(node.right);
    }
  }
  return {std::sqrt(best_sq), part_ids_[triangles_[best_tri].part], best_tri, best_point};
}

NearestTriangle SpatialIndex::nearest_linear(const Eigen::Vector3d& p) const {
  double best_sq = std::numeric_limits<double>::infinity();
  std::size_t best_tri = 0;
  Eigen::Vector3d best_point = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < triangles_.size(); ++i) {
    const auto& t = triangles_[i];
    const Eigen::Vector3d q = closest_point_on_triangle<double>(p, t.a, t.b, t.c);
    const double d = (q - p).squaredNorm();
    if (d < best_sq) {
      best_sq = d;
      best_tri = i;
      best_point = q;
    }
  }
  return {std::sqrt(best_sq), part_ids_[triangles_[best_tri].part], best_tri, best_point};
}

SpatialIndex build_index(std::span<const MeshInstance> meshes) { return SpatialIndex::build(meshes); }

SpatialIndex build_assembly_index(const Assembly& asm_, const JointValues& joints) {
  std::vector<MeshInstance> instances;
  for (const auto& [id, part] : asm_.parts) {
    if (!part.mesh || part.mesh->empty()) continue;
    instances.push_back({&*part.mesh, part_world_transform(asm_, id, joints), id});
  }
  return SpatialIndex::build(instances);
}

bool WorkspaceSlab::contains(const Eigen::AlignedBox3d& hw, const Eigen::Vector3d& p) const {
  const double z0 = hw.min().z();
  return p.x() >= hw.min().x() - xy_margin && p.x() <= hw.max().x() + xy_margin &&
         p.y() >= hw.min().y() - xy_margin && p.y() <= hw.max().y() + xy_margin && p.z() >= z0 + z_min_offset &&
         p.z() <= z0 + z_max_offset;
}

std::vector<bool> compute_background_mask(const SplatCloud& cloud, const SpatialIndex& index, double tau,
                                          const std::optional<WorkspaceSlab>& slab) {
  if (!(tau > 0)) throw Error(ErrorKind::validation, kModule, "tau must be positive, got " + format_double(tau));
  std::vector<char> keep(cloud.gaussians.size(), 0);
  parallel_for(cloud.gaussians.size(), [&](std::size_t i) {
    const Eigen::Vector3d& p = cloud.gaussians[i].position;
    keep[i] = (slab && slab->contains(index.bounds(), p)) || index.distance(p) <= tau;
  });
  return {keep.begin(), keep.end()};
}

std::vector<bool> privacy_mask(const SplatCloud& cloud, const Assembly& asm_, const JointValues& joints,
                               const MaskOptions& options) {
  const SpatialIndex zero = build_assembly_index(asm_, {});
  std::vector<bool> keep = compute_background_mask(cloud, zero, options.tau, options.slab);
  const bool moved = std::any_of(joints.begin(), joints.end(), [](const auto& kv) { return kv.second != 0.0; });
  if (!moved) return keep;
  const SpatialIndex posed = build_assembly_index(asm_, joints);
  const std::vector<bool> near_posed = compute_background_mask(cloud, posed, options.tau, std::nullopt);
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = keep[i] || near_posed[i];
  return keep;
}

}  // namespace hwscene
