#include "hwscene/synth.hpp"

#include "hwscene/gltf.hpp"

#include <cstdio>

namespace hwscene {

namespace {

constexpr double kTagSide = 20.0;

struct PartSpec {
  const char* name;
  int parent;
  Eigen::Vector3d translation;  // mm, in the parent frame
  Eigen::Vector3d box_min, box_max;  // mm, in the part frame
};

// frame, carriage, nozzle, fitting, rotor, pump
const std::array<PartSpec, 6> kParts{{
    {"frame", -1, {0, 0, 0}, {-200, -150, 0}, {200, 150, 20}},
    {"carriage", 0, {-100, 0, 20}, {-30, -25, 0}, {30, 25, 40}},
    {"nozzle", 1, {0, 25, 10}, {-6, 0, 0}, {6, 15, 20}},
    {"fitting", 2, {0, 15, 10}, {-3, 0, -3}, {3, 6, 3}},
    {"rotor", 0, {100, 0, 20}, {-45, -45, 0}, {45, 45, 12}},
    {"pump", 0, {0, -110, 20}, {-40, -25, 0}, {40, 25, 50}},
}};

json square_tag(int id, const char* role, const char* part, const Eigen::Vector3d& center) {
  const double h = kTagSide / 2;
  json corners = json::array();
  for (const auto& [dx, dy] : std::array<std::pair<double, double>, 4>{{{-h, -h}, {h, -h}, {h, h}, {-h, h}}}) {
    corners.push_back(to_json(Eigen::Vector3d(center + Eigen::Vector3d(dx, dy, 0))));
  }
  return {{"tag_id", id}, {"role", role}, {"attached_part", part}, {"corners", corners}, {"side_length", kTagSide}};
}

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
double normal(std::mt19937_64& rng, double sigma) {
  return sigma > 0 ? std::normal_distribution<double>(0.0, sigma)(rng) : 0.0;
}

struct WorldTriangle {
  Eigen::Vector3d a, b, c;
  double area;
};

std::vector<WorldTriangle> posed_triangles(const Assembly& asm_, const JointValues& joints) {
  std::vector<WorldTriangle> out;
  for (const auto& [id, part] : asm_.parts) {
    if (!part.mesh) continue;
    const Rigid3d w = part_world_transform(asm_, id, joints);
    for (const auto& t : part.mesh->triangles) {
      const Eigen::Vector3d a = w * part.mesh->vertices[t[0]], b = w * part.mesh->vertices[t[1]],
                            c = w * part.mesh->vertices[t[2]];
      out.push_back({a, b, c, triangle_area(a, b, c)});
    }
  }
  return out;
}

/// Area-weighted surface sample with its outward normal.
std::pair<Eigen::Vector3d, Eigen::Vector3d> sample_surface(const std::vector<WorldTriangle>& tris,
                                                           std::discrete_distribution<std::size_t>& pick,
                                                           std::mt19937_64& rng) {
  const auto& t = tris[pick(rng)];
  double u = uniform(rng, 0, 1), v = uniform(rng, 0, 1);
  if (u + v > 1) {
    u = 1 - u;
    v = 1 - v;
  }
  const Eigen::Vector3d p = t.a + u * (t.b - t.a) + v * (t.c - t.a);
  return {p, (t.b - t.a).cross(t.c - t.a).normalized()};
}

Eigen::Quaterniond random_quaternion(std::mt19937_64& rng) {
  Eigen::Vector4d v;
  do {
    for (int i = 0; i < 4; ++i) v[i] = normal(rng, 1.0);
  } while (v.norm() < 1e-6);
  v.normalize();
  return Eigen::Quaterniond(v[0], v[1], v[2], v[3]);
}

bool inside_image(const CameraIntrinsics& cam, const Eigen::Vector2d& px) {
  return px.x() >= 0 && px.y() >= 0 && px.x() <= static_cast<double>(cam.width) && px.y() <= static_cast<double>(cam.height);
}

/// Detections of every tag fully visible and facing the camera.
std::vector<Detection> detect_tags(const Assembly& asm_, const JointValues& joints, const ImagePose& pose_cad,
                                   const CameraIntrinsics& cam, double noise, std::mt19937_64& rng) {
  std::vector<Detection> out;
  for (const auto& tag : asm_.tags) {
    const auto corners = tag_corners_at(asm_, tag, joints);
    const Eigen::Vector3d center = (corners[0] + corners[1] + corners[2] + corners[3]) / 4.0;
    const Eigen::Vector3d normal_dir = (corners[1] - corners[0]).cross(corners[2] - corners[1]);
    if (normal_dir.dot(pose_cad.center() - center) <= 0) continue;
    Detection d;
    d.tag_id = tag.tag_id;
    bool visible = true;
    for (std::size_t c = 0; c < 4 && visible; ++c) {
      const Eigen::Vector3d pc = pose_cad.to_camera(corners[c]);
      if (pc.z() <= 1.0) {
        visible = false;
        break;
      }
      d.corners[c] = project_camera_point(cam, pc);
      visible = inside_image(cam, d.corners[c]);
    }
    if (!visible) continue;
    for (auto& c : d.corners) c += Eigen::Vector2d(normal(rng, noise), normal(rng, noise));
    out.push_back(d);
  }
  return out;
}

std::string frame_name(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04d.png", prefix, i);
  return buf;
}

}  // namespace

ImagePose look_at(const Eigen::Vector3d& center, const Eigen::Vector3d& target) {
  const Eigen::Vector3d f = (target - center).normalized();
  Eigen::Vector3d r = f.cross(Eigen::Vector3d::UnitZ());
  if (r.norm() < 1e-9) r = f.cross(Eigen::Vector3d::UnitY());
  r.normalize();
  const Eigen::Vector3d d = f.cross(r);
  Eigen::Matrix3d rot;
  rot.row(0) = r;
  rot.row(1) = d;
  rot.row(2) = f;
  ImagePose p;
  p.rotation = Eigen::Quaterniond(rot).normalized();
  p.translation = -(rot * center);
  return p;
}

Eigen::Matrix3d random_rotation(std::mt19937_64& rng) { return random_quaternion(rng).toRotationMatrix(); }

SynthRig make_synthetic_rig() {
  GltfDocument doc;
  for (const auto& spec : kParts) {
    GltfNode n;
    n.name = spec.name;
    n.translation = spec.translation / 1000.0;
    TriangleMesh m = make_box(spec.box_min / 1000.0, spec.box_max / 1000.0);
    n.mesh = std::move(m);
    doc.nodes.push_back(std::move(n));
  }
  for (std::size_t i = 0; i < kParts.size(); ++i) {
    if (kParts[i].parent < 0) doc.roots.push_back(static_cast<int>(i));
    else doc.nodes[static_cast<std::size_t>(kParts[i].parent)].children.push_back(static_cast<int>(i));
  }

  json manifest;
  manifest["gltf_unit"] = "m";
  manifest["tags"] = {square_tag(1, "grounding", "frame", {-160, 110, 20}),
                      square_tag(2, "grounding", "frame", {160, -110, 20}),
                      square_tag(3, "grounding", "frame", {160, 110, 20}),
                      square_tag(10, "constraint", "carriage", {-100, 0, 60}),
                      square_tag(11, "constraint", "rotor", {130, 0, 32})};
  manifest["dofs"] = {{{"dof_id", "carriage_x"},
                       {"moving_part", "carriage"},
                       {"kind", "prismatic"},
                       {"axis", {1, 0, 0}},
                       {"origin", {-100, 0, 20}},
                       {"constraint_tag", 10},
                       {"limits", {-80, 250}}},
                      {{"dof_id", "rotor_z"},
                       {"moving_part", "rotor"},
                       {"kind", "revolute"},
                       {"axis", {0, 0, 1}},
                       {"origin", {100, 0, 20}},
                       {"constraint_tag", 11},
                       {"limits", {-std::numbers::pi, std::numbers::pi}}}};
  manifest["docs"] = {
      {{"part_ids", {"frame"}}, {"title", "Assembly guide"}, {"url", "https://example.org/rig/assembly"}},
      {{"part_ids", {"nozzle"}}, {"title", "Nozzle cleaning"}, {"url", "https://example.org/rig/nozzle"}},
      {{"part_ids", {"pump"}}, {"title", "Vacuum pump service"}, {"url", "https://example.org/rig/pump"}}};
  return {write_glb(doc), manifest};
}

SynthResult synthesize(const SynthOptions& options) {
  SynthResult r;
  r.options = options;
  r.rig = make_synthetic_rig();
  r.assembly = load_assembly(r.rig.glb, r.rig.manifest.dump());
  validate_joint_values(r.assembly, options.joints);
  std::mt19937_64 rng(options.seed);

  if (options.identity) {
    r.truth = SimilarityTransformd::Identity();
  } else {
    r.truth.scale = options.scale ? *options.scale : uniform(rng, 10.0, 1000.0);
    r.truth.rotation = random_rotation(rng);
    r.truth.translation = Eigen::Vector3d(uniform(rng, -500, 500), uniform(rng, -500, 500), uniform(rng, -500, 500));
  }
  const SimilarityTransformd to_sfm = r.truth.inverse();
  const double s = r.truth.scale;
  const Eigen::Matrix3d& rg = r.truth.rotation;
  const Eigen::Vector3d& tg = r.truth.translation;

  // Capture cameras on two rings around the rig.
  CameraIntrinsics cam;
  cam.camera_id = 1;
  cam.width = 1280;
  cam.height = 960;
  cam.fx = cam.fy = 900;
  cam.cx = 640;
  cam.cy = 480;
  if (options.identity) {
    cam.model = CameraModel::pinhole;
  } else {
    cam.model = CameraModel::simple_radial;
    cam.distortion = {-0.03};
  }
  r.model.cameras[cam.camera_id] = cam;

  std::vector<ImagePose> cad_poses;
  for (int i = 0; i < options.n_cameras; ++i) {
    const double az = 2.0 * std::numbers::pi * i / options.n_cameras + uniform(rng, -0.05, 0.05);
    const double radius = 520 + uniform(rng, -20, 20);
    const double height = (i % 2 == 0 ? 380 : 520) + uniform(rng, -20, 20);
    const Eigen::Vector3d center(radius * std::cos(az), radius * std::sin(az), height);
    const Eigen::Vector3d target(uniform(rng, -20, 20), uniform(rng, -20, 20), 30);
    ImagePose cad = look_at(center, target);
    cad.image_id = static_cast<std::uint32_t>(i + 1);
    cad.camera_id = cam.camera_id;
    cad.name = frame_name("img", i);
    cad_poses.push_back(cad);

    // x_cam = Rc (s R p + t) + tc, in units of s.
    ImagePose sfm = cad;
    const Eigen::Matrix3d rc = cad.rotation.toRotationMatrix();
    sfm.rotation = Eigen::Quaterniond(rc * rg).normalized();
    sfm.translation = (rc * tg + cad.translation) / s;
    r.model.images[sfm.image_id] = sfm;

    ImageDetections det;
    det.image = cad.name;
    det.detections = detect_tags(r.assembly, options.joints, cad, cam, options.noise_px, rng);
    r.detections.push_back(std::move(det));
  }

  // Sparse points on the posed hardware.
  const auto tris = posed_triangles(r.assembly, options.joints);
  std::vector<double> weights;
  for (const auto& t : tris) weights.push_back(t.area);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  std::uint64_t next_point = 1;
  for (std::size_t k = 0; k < options.sparse_points; ++k) {
    const auto [p_cad, n] = sample_surface(tris, pick, rng);
    TrackPoint tp;
    tp.point3d_id = next_point;
    tp.position = to_sfm(p_cad);
    tp.color = {200, 200, 200};
    for (auto& [id, img] : r.model.images) {
      const ImagePose& cad = cad_poses[id - 1];
      const Eigen::Vector3d pc = cad.to_camera(p_cad);
      if (pc.z() <= 1.0 || n.dot(cad.center() - p_cad) <= 0) continue;
      const Eigen::Vector2d px = project(tp.position, img, cam).pixel;
      if (!inside_image(cam, px)) continue;
      tp.track.push_back({id, static_cast<std::uint32_t>(img.observations.size())});
      img.observations.push_back({px, tp.point3d_id});
    }
    if (tp.track.size() < 2) {
      for (const auto& te : tp.track) r.model.images[te.image_id].observations.pop_back();
      continue;
    }
    r.model.points[tp.point3d_id] = tp;
    ++next_point;
  }
  r.model.validate();

  // Splat: hardware surface, work surface and far background, in SfM units.
  r.cloud.sh_degree = options.sh_degree;
  r.cloud.source_id = "synth-" + std::to_string(options.seed);
  const int rest = SplatCloud::rest_coefficients(options.sh_degree);
  const auto add_gaussian = [&](const Eigen::Vector3d& p_cad, double size_mm) {
    Gaussian g;
    g.position = to_sfm(p_cad);
    g.rotation = random_quaternion(rng);
    g.log_scale = Eigen::Vector3d::Constant(std::log(size_mm / s)) + Eigen::Vector3d(normal(rng, 0.2), normal(rng, 0.2), normal(rng, 0.2));
    g.opacity_logit = normal(rng, 1.0);
    g.color_dc = Eigen::Vector3d(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
    for (int i = 0; i < rest; ++i) g.color_rest.emplace_back(normal(rng, 0.1), normal(rng, 0.1), normal(rng, 0.1));
    r.cloud.gaussians.push_back(std::move(g));
  };
  for (std::size_t k = 0; k < options.hardware_gaussians; ++k) {
    const auto [p, n] = sample_surface(tris, pick, rng);
    add_gaussian(p + uniform(rng, 0, 2) * n, uniform(rng, 0.5, 3));
  }
  for (std::size_t k = 0; k < options.table_gaussians; ++k) {
    add_gaussian(Eigen::Vector3d(uniform(rng, -280, 280), uniform(rng, -230, 230), uniform(rng, -3, 0)), uniform(rng, 1, 5));
  }
  for (std::size_t k = 0; k < options.background_gaussians; ++k) {
    const double az = uniform(rng, 0, 2 * std::numbers::pi);
    const double radius = uniform(rng, 900, 1500);
    add_gaussian(Eigen::Vector3d(radius * std::cos(az), radius * std::sin(az), uniform(rng, -300, 900)), uniform(rng, 5, 30));
  }

  // Video clip on an arc in front of the rig, with a different lens.
  r.video_camera.camera_id = 1;
  r.video_camera.width = 1280;
  r.video_camera.height = 720;
  r.video_camera.fx = r.video_camera.fy = 1000;
  r.video_camera.cx = 640;
  r.video_camera.cy = 360;
  if (options.identity) {
    r.video_camera.model = CameraModel::pinhole;
  } else {
    r.video_camera.model = CameraModel::opencv_radial;
    r.video_camera.distortion = {-0.05, 0.01, 0.0005, -0.0003};
  }
  for (int i = 0; i < options.video_frames; ++i) {
    const double u = options.video_frames > 1 ? static_cast<double>(i) / (options.video_frames - 1) : 0.5;
    const double az = -std::numbers::pi / 2 + (u - 0.5) * 1.2 + uniform(rng, -0.02, 0.02);
    const Eigen::Vector3d center(560 * std::cos(az), 560 * std::sin(az), 420 + uniform(rng, -15, 15));
    ImagePose pose = look_at(center, Eigen::Vector3d(uniform(rng, -15, 15), uniform(rng, -15, 15), 30));
    pose.image_id = static_cast<std::uint32_t>(i);
    pose.camera_id = 1;
    pose.name = frame_name("frame", i);
    ImageDetections det;
    det.image = pose.name;
    det.frame_index = i;
    det.detections = detect_tags(r.assembly, options.joints, pose, r.video_camera, options.noise_px, rng);
    r.video_detections.push_back(std::move(det));
    r.video_poses.push_back(pose);
  }

  json poses = json::array();
  for (const auto& p : r.video_poses) poses.push_back(to_json(p));
  r.truth_json = {{"seed", options.seed},
                  {"transform", to_json(r.truth)},
                  {"joint_values", options.joints},
                  {"noise_px", options.noise_px},
                  {"assembly_ref", r.assembly.content_hash},
                  {"video_poses", poses},
                  {"counts",
                   {{"images", r.model.images.size()},
                    {"points", r.model.points.size()},
                    {"gaussians", r.cloud.gaussians.size()},
                    {"hardware_gaussians", options.hardware_gaussians},
                    {"table_gaussians", options.table_gaussians},
                    {"background_gaussians", options.background_gaussians}}}};
  return r;
}

FileMap synth_files(const SynthResult& r) {
  json manifest = {{"kind", "splat"}, {"capture_time", 1}, {"source", "synth"}};
  FileMap files = splat_bundle_files(r.model, SfmFormat::binary, r.cloud, r.detections, manifest);
  files["assembly/model.glb"] = r.rig.glb;
  files["assembly/manifest.json"] = r.rig.manifest.dump(1);
  for (auto& [path, data] : video_bundle_files(r.video_camera, r.video_detections, {{"kind", "video"}, {"capture_time", 2}})) {
    files["video/" + path] = std::move(data);
  }
  files["truth.json"] = r.truth_json.dump(1);
  return files;
}

FileMap sub_bundle(const FileMap& files, const std::string& prefix) {
  FileMap out;
  for (const auto& [path, data] : files) {
    if (path.starts_with(prefix)) out.emplace(path.substr(prefix.size()), data);
  }
  return out;
}

}  // namespace hwscene
