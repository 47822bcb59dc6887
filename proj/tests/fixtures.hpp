#pragma once

#include "oracles.hpp"

#include "hwscene/assembly.hpp"
#include "hwscene/gltf.hpp"
#include "hwscene/registration.hpp"
#include "hwscene/sfm_model.hpp"
#include "hwscene/splat.hpp"
#include "hwscene/synth.hpp"

#include <numbers>
#include <random>

namespace fixture {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Eigen::Vector3d uniform_vec(std::mt19937_64& rng, double lo, double hi) {
  return {uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi)};
}

inline Eigen::Quaterniond random_quat(std::mt19937_64& rng) { return Eigen::Quaterniond(hwscene::random_rotation(rng)); }

inline hwscene::CameraIntrinsics random_camera(std::mt19937_64& rng, std::uint32_t id, hwscene::CameraModel model) {
  using hwscene::CameraModel;
  const double f = uniform(rng, 500, 1500), cx = uniform(rng, 300, 700), cy = uniform(rng, 200, 500);
  std::vector<double> params;
  switch (model) {
    case CameraModel::simple_pinhole: params = {f, cx, cy}; break;
    case CameraModel::pinhole: params = {f, f * uniform(rng, 0.9, 1.1), cx, cy}; break;
    case CameraModel::simple_radial: params = {f, cx, cy, uniform(rng, -0.1, 0.1)}; break;
    case CameraModel::opencv_radial:
      params = {f, f * 1.01, cx, cy, uniform(rng, -0.1, 0.1), uniform(rng, -0.02, 0.02), uniform(rng, -1e-3, 1e-3),
                uniform(rng, -1e-3, 1e-3)};
      break;
  }
  return hwscene::CameraIntrinsics::from_colmap_params(id, model, 1000, 800, params);
}

/// Model with consistent tracks: every observation that names a point appears
/// in that point's track and projects exactly.
inline hwscene::SfmModel random_model(std::mt19937_64& rng, int n_cameras, int n_images, int n_points) {
  using namespace hwscene;
  SfmModel m;
  const std::array<CameraModel, 4> models{CameraModel::simple_pinhole, CameraModel::pinhole, CameraModel::simple_radial,
                                          CameraModel::opencv_radial};
  for (int c = 1; c <= n_cameras; ++c) {
    m.cameras[static_cast<std::uint32_t>(c)] = random_camera(rng, static_cast<std::uint32_t>(c), models[c % 4]);
  }
  for (int i = 1; i <= n_images; ++i) {
    const Eigen::Vector3d center = uniform_vec(rng, -1, 1) + Eigen::Vector3d(0, 0, -8);
    ImagePose p = look_at(center, uniform_vec(rng, -0.2, 0.2));
    p.image_id = static_cast<std::uint32_t>(i);
    p.camera_id = static_cast<std::uint32_t>(1 + (i - 1) % n_cameras);
    p.name = "img_" + std::to_string(i) + ".jpg";
    m.images[p.image_id] = p;
  }
  for (int k = 1; k <= n_points; ++k) {
    TrackPoint tp;
    tp.point3d_id = static_cast<std::uint64_t>(k * 3);
    tp.position = uniform_vec(rng, -1, 1);
    tp.color = {static_cast<std::uint8_t>(k % 256), static_cast<std::uint8_t>((k * 7) % 256), 9};
    tp.reprojection_error = 0;
    for (auto& [id, img] : m.images) {
      if (std::uniform_int_distribution<int>(0, 2)(rng) == 0) continue;
      Observation o;
      o.pixel = project(tp.position, img, m.cameras.at(img.camera_id)).pixel;
      o.point3d_id = tp.point3d_id;
      tp.track.push_back({id, static_cast<std::uint32_t>(img.observations.size())});
      img.observations.push_back(o);
    }
    m.points[tp.point3d_id] = tp;
  }
  // A few observations without a 3D point.
  for (auto& [id, img] : m.images) img.observations.push_back({uniform_vec(rng, 0, 500).head<2>(), kNoPoint3d});
  return m;
}

inline hwscene::SplatCloud random_cloud(std::mt19937_64& rng, std::size_t n, int sh_degree, double extent = 1.0) {
  hwscene::SplatCloud c;
  c.sh_degree = sh_degree;
  c.source_id = "fixture";
  const int rest = hwscene::SplatCloud::rest_coefficients(sh_degree);
  for (std::size_t i = 0; i < n; ++i) {
    hwscene::Gaussian g;
    g.position = uniform_vec(rng, -extent, extent);
    g.rotation = random_quat(rng);
    g.log_scale = uniform_vec(rng, -5, 0);
    g.opacity_logit = uniform(rng, -3, 3);
    g.color_dc = uniform_vec(rng, -1, 1);
    for (int k = 0; k < rest; ++k) g.color_rest.push_back(uniform_vec(rng, -0.5, 0.5));
    c.gaussians.push_back(g);
  }
  return c;
}

struct NodeSpec {
  std::string name;
  int parent = -1;
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();  // metres
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  std::optional<hwscene::TriangleMesh> mesh;  // metres
};

inline std::string make_glb(const std::vector<NodeSpec>& specs) {
  hwscene::GltfDocument doc;
  for (const auto& s : specs) {
    hwscene::GltfNode n;
    n.name = s.name;
    n.translation = s.translation;
    n.rotation = s.rotation;
    n.mesh = s.mesh;
    doc.nodes.push_back(n);
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].parent < 0) doc.roots.push_back(static_cast<int>(i));
    else doc.nodes[static_cast<std::size_t>(specs[i].parent)].children.push_back(static_cast<int>(i));
  }
  return hwscene::write_glb(doc);
}

/// Square tag corners (counter-clockwise seen from +z) around `center` in mm.
inline hwscene::json square_tag(int id, const std::string& role, const std::string& part, const Eigen::Vector3d& c,
                                double side = 20.0) {
  const double h = side / 2;
  return {{"tag_id", id},
          {"role", role},
          {"attached_part", part},
          {"side_length", side},
          {"corners",
           {{c.x() - h, c.y() - h, c.z()}, {c.x() + h, c.y() - h, c.z()}, {c.x() + h, c.y() + h, c.z()},
            {c.x() - h, c.y() + h, c.z()}}}};
}

/// Corner detections of every tag facing the camera, optionally with
/// Gaussian pixel noise.
inline std::vector<hwscene::TagObservation> observe_tags(const hwscene::Assembly& asm_, const hwscene::JointValues& joints,
                                                         const hwscene::ImagePose& pose,
                                                         const hwscene::CameraIntrinsics& cam, double noise,
                                                         std::mt19937_64& rng) {
  std::normal_distribution<double> n(0, noise > 0 ? noise : 1);
  std::vector<hwscene::TagObservation> out;
  for (const auto& tag : asm_.tags) {
    const auto corners = hwscene::tag_corners_at(asm_, tag, joints);
    const Eigen::Vector3d normal = (corners[1] - corners[0]).cross(corners[2] - corners[1]);
    if (normal.dot(pose.center() - (corners[0] + corners[2]) / 2) <= 0) continue;
    hwscene::TagObservation o;
    o.tag_id = tag.tag_id;
    for (int c = 0; c < 4; ++c) {
      o.corners_px[c] = oracle::project(corners[c], pose, cam);
      if (noise > 0) o.corners_px[c] += Eigen::Vector2d(n(rng), n(rng));
    }
    out.push_back(o);
  }
  return out;
}

/// Camera on a ring around the synthetic rig, looking near its centre.
inline hwscene::ImagePose ring_camera(std::mt19937_64& rng) {
  const double az = uniform(rng, 0, 2 * std::numbers::pi);
  const Eigen::Vector3d c(500 * std::cos(az), 500 * std::sin(az), uniform(rng, 300, 600));
  return hwscene::look_at(c, uniform_vec(rng, -30, 30));
}

/// `n` independent random triangles of edge scale `size` in a cube of
/// half-width `extent`.
inline hwscene::TriangleMesh random_soup(std::mt19937_64& rng, int n, double extent, double size) {
  hwscene::TriangleMesh m;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d c = uniform_vec(rng, -extent, extent);
    for (int k = 0; k < 3; ++k) m.vertices.push_back(c + uniform_vec(rng, -size, size));
    const auto b = static_cast<std::uint32_t>(3 * i);
    m.triangles.push_back({b, b + 1, b + 2});
  }
  return m;
}

}  // namespace fixture
