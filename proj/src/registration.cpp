#include "hwscene/registration.hpp"

#include <unsupported/Eigen/AutoDiff>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace hwscene {

namespace {

constexpr const char* kModule = "registration";

Eigen::Matrix<double, 3, Eigen::Dynamic> to_matrix(const Points3d& pts) {
  Eigen::Matrix<double, 3, Eigen::Dynamic> m(3, static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = pts[i];
  return m;
}

Eigen::Matrix<double, 3, 4> pose_matrix(const ImagePose& pose) {
  Eigen::Matrix<double, 3, 4> p;
  p.leftCols<3>() = pose.rotation.toRotationMatrix();
  p.col(3) = pose.translation;
  return p;
}

double reprojection_sq(const PointView& v, const Eigen::Vector3d& x) {
  const Eigen::Vector3d pc = v.pose->to_camera(x);
  if (!(pc.z() > 0)) return std::numeric_limits<double>::infinity();
  return (project_camera_point(*v.camera, pc) - v.pixel).squaredNorm();
}

}  // namespace

RigidFit<double> fit_rigid_arun(const Points3d& source, const Points3d& target) {
  if (source.size() != target.size()) throw Error(ErrorKind::validation, kModule, "source/target sizes differ");
  if (source.size() < 3) throw Error(ErrorKind::validation, kModule, "Arun's method needs at least 3 points");
  return fit_rigid_arun(to_matrix(source), to_matrix(target));
}

// ---------------------------------------------------------------------------
// triangulation

TriangulatedPoint triangulate_point(std::span<const PointView> views, const TriangulationOptions& options) {
  if (views.size() < 2) throw Error(ErrorKind::insufficient_views, kModule, "triangulation needs at least 2 views");

  std::vector<Eigen::Vector3d> rays;
  Eigen::MatrixXd a(2 * static_cast<Eigen::Index>(views.size()), 4);
  for (std::size_t i = 0; i < views.size(); ++i) {
    const auto& v = views[i];
    const Eigen::Vector2d xn = undistort_pixel(*v.camera, v.pixel);
    const Eigen::Matrix<double, 3, 4> p = pose_matrix(*v.pose);
    const auto r = static_cast<Eigen::Index>(2 * i);
    a.row(r) = xn.x() * p.row(2) - p.row(0);
    a.row(r + 1) = xn.y() * p.row(2) - p.row(1);
    a.row(r).normalize();
    a.row(r + 1).normalize();
    rays.push_back((v.pose->rotation.conjugate() * Eigen::Vector3d(xn.x(), xn.y(), 1.0)).normalized());
  }

  double max_angle = 0;
  for (std::size_t i = 0; i < rays.size(); ++i) {
    for (std::size_t j = i + 1; j < rays.size(); ++j) {
      max_angle = std::max(max_angle, std::atan2(rays[i].cross(rays[j]).norm(), rays[i].dot(rays[j])));
    }
  }
  if (max_angle < options.min_angle_deg * std::numbers::pi / 180.0) {
    throw Error(ErrorKind::degenerate, kModule,
                "rays are near-parallel (max triangulation angle " + std::to_string(max_angle * 180.0 / std::numbers::pi) +
                    " deg)");
  }

  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::Vector4d h = svd.matrixV().col(3);
  if (std::abs(h(3)) < 1e-14 * h.head<3>().norm()) {
    throw Error(ErrorKind::degenerate, kModule, "triangulated point at infinity");
  }
  Eigen::Vector3d x = h.head<3>() / h(3);

  // Gauss-Newton on pixel residuals with the full lens model.
  using Ad = Eigen::AutoDiffScalar<Eigen::Vector3d>;
  const auto cost_of = [&](const Eigen::Vector3d& p) {
    double c = 0;
    for (const auto& v : views) c += reprojection_sq(v, p);
    return c;
  };
  double cost = cost_of(x);
  for (int iter = 0; iter < options.max_refine_iterations && std::isfinite(cost); ++iter) {
    Eigen::Matrix3d jtj = Eigen::Matrix3d::Zero();
    Eigen::Vector3d jtr = Eigen::Vector3d::Zero();
    const Vector3<Ad> xa(Ad(x.x(), 3, 0), Ad(x.y(), 3, 1), Ad(x.z(), 3, 2));
    for (const auto& v : views) {
      const Matrix3<Ad> r = v.pose->rotation.toRotationMatrix().cast<Ad>();
      const Vector3<Ad> pc = r * xa + v.pose->translation.cast<Ad>();
      const Vector2<Ad> px = project_camera_point(*v.camera, pc);
      for (int k = 0; k < 2; ++k) {
        const Eigen::Vector3d g = px[k].derivatives();
        const double res = px[k].value() - v.pixel[k];
        jtj += g * g.transpose();
        jtr += g * res;
      }
    }
    const Eigen::Vector3d step = -jtj.ldlt().solve(jtr);
    if (!step.allFinite()) break;
    const Eigen::Vector3d candidate = x + step;
    const double new_cost = cost_of(candidate);
    if (!(new_cost <= cost)) break;
    x = candidate;
    cost = new_cost;
    if (step.norm() <= options.step_tolerance * (1.0 + x.norm())) break;
  }

  TriangulatedPoint out;
  out.position = x;
  for (const auto& v : views) out.squared_errors.push_back(reprojection_sq(v, x));
  return out;
}

TriangulatedTag triangulate_tag_corners(const SfmModel& model, std::span<const TagObservation> obs, int tag_id,
                                        const TriangulationOptions& options) {
  std::map<std::uint32_t, const TagObservation*> per_image;
  for (const auto& o : obs) {
    if (o.tag_id == tag_id && model.images.contains(o.image_id)) per_image.emplace(o.image_id, &o);
  }
  if (per_image.size() < 2) {
    throw Error(ErrorKind::insufficient_views, kModule,
                "tag " + std::to_string(tag_id) + " observed in " + std::to_string(per_image.size()) +
                    " posed image(s); at least 2 are required");
  }

  TriangulatedTag out;
  out.tag_id = tag_id;
  out.n_views = static_cast<int>(per_image.size());
  double sq_sum = 0;
  std::size_t count = 0;
  for (std::size_t c = 0; c < 4; ++c) {
    std::vector<PointView> views;
    for (const auto& [image_id, o] : per_image) {
      const ImagePose& pose = model.images.at(image_id);
      views.push_back({&pose, &model.cameras.at(pose.camera_id), o->corners_px[c]});
    }
    const auto tp = triangulate_point(views, options);
    out.corners_sfm[c] = tp.position;
    for (double e : tp.squared_errors) sq_sum += e;
    count += tp.squared_errors.size();
  }
  out.rms_reprojection = std::sqrt(sq_sum / static_cast<double>(count));
  if (!std::isfinite(out.rms_reprojection)) {
    throw Error(ErrorKind::degenerate, kModule, "tag " + std::to_string(tag_id) + " triangulated behind a camera");
  }
  return out;
}

// ---------------------------------------------------------------------------
// alignment

double estimate_scale(std::span<const TriangulatedTag> tags, std::span<const TagAnchor> anchors) {
  double sum = 0;
  int n = 0;
  for (const auto& tag : tags) {
    const auto anchor = std::find_if(anchors.begin(), anchors.end(), [&](const auto& a) { return a.tag_id == tag.tag_id; });
    if (anchor == anchors.end()) continue;
    for (std::size_t i = 0; i < 4; ++i) {
      const double measured = (tag.corners_sfm[(i + 1) % 4] - tag.corners_sfm[i]).norm();
      if (measured < 1e-12) {
        throw Error(ErrorKind::degenerate, kModule, "tag " + std::to_string(tag.tag_id) + " has a collapsed side");
      }
      sum += anchor->side_length / measured;
      ++n;
    }
  }
  if (n == 0) throw Error(ErrorKind::validation, kModule, "no triangulated tag matches a tag anchor");
  return sum / n;
}

Alignment align_splat_to_cad(const SfmModel& model, std::span<const TagObservation> obs, const Assembly& asm_,
                             const AlignmentOptions& options) {
  Alignment out;
  std::vector<TagAnchor> anchors;
  std::optional<Error> first_error;
  for (const auto& tag : asm_.tags) {
    if (tag.role != TagRole::grounding) continue;
    try {
      out.grounding_tags.push_back(triangulate_tag_corners(model, obs, tag.tag_id, options.triangulation));
      anchors.push_back(tag);
    } catch (const Error& e) {
      if (!first_error) first_error = e;
    }
  }
  if (out.grounding_tags.empty()) {
    if (first_error) throw *first_error;
    throw Error(ErrorKind::insufficient_views, kModule, "no grounding tag observed");
  }

  const double scale = estimate_scale(out.grounding_tags, anchors);
  Points3d src, dst;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    for (std::size_t c = 0; c < 4; ++c) {
      src.push_back(scale * out.grounding_tags[i].corners_sfm[c]);
      dst.push_back(anchors[i].corners_cad[c]);
    }
  }
  const auto fit = fit_rigid_arun(src, dst);
  out.transform.scale = scale;
  out.transform.rotation = fit.rotation;
  out.transform.translation = fit.translation;
  out.rms_mm = fit.rms;
  if (out.rms_mm > options.rms_threshold_mm) {
    out.warning = "alignment rms " + format_double(out.rms_mm) + " mm exceeds threshold " +
                  format_double(options.rms_threshold_mm) + " mm";
  }
  return out;
}

JointEstimate joint_from_tag_center(const DofSpec& dof, const Eigen::Vector3d& observed) {
  JointEstimate est;
  est.dof_id = dof.dof_id;
  est.status = JointStatus::resolved;
  if (dof.kind == DofKind::prismatic) {
    est.value = dof.axis.dot(observed - dof.nominal_tag_center);
    est.residual = (observed - (dof.nominal_tag_center + est.value * dof.axis)).norm();
  } else {
    const Eigen::Vector3d a = dof.nominal_tag_center - dof.origin;
    const Eigen::Vector3d b = observed - dof.origin;
    const Eigen::Vector3d a_perp = a - dof.axis.dot(a) * dof.axis;
    const Eigen::Vector3d b_perp = b - dof.axis.dot(b) * dof.axis;
    if (a_perp.norm() < 1.0) {
      throw Error(ErrorKind::degenerate, kModule,
                  "dof " + dof.dof_id + ": constraint tag lies within 1 mm of the rotation axis");
    }
    est.value = std::atan2(dof.axis.dot(a_perp.cross(b_perp)), a_perp.dot(b_perp));
    est.residual = (observed - dof.motion(est.value) * dof.nominal_tag_center).norm();
  }
  est.out_of_limits = est.value < dof.limit_min || est.value > dof.limit_max;
  return est;
}

std::vector<JointEstimate> resolve_constraints(const SfmModel& model, std::span<const TagObservation> obs,
                                               const Assembly& asm_, const SimilarityTransformd& base,
                                               const TriangulationOptions& options) {
  std::vector<JointEstimate> out;
  for (const auto& dof : asm_.dofs) {
    TriangulatedTag tag;
    try {
      tag = triangulate_tag_corners(model, obs, dof.constraint_tag, options);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::insufficient_views && e.kind() != ErrorKind::degenerate) throw;
      JointEstimate est;
      est.dof_id = dof.dof_id;
      est.status = JointStatus::unresolved;
      est.message = e.what();
      out.push_back(std::move(est));
      continue;
    }
    out.push_back(joint_from_tag_center(dof, base(tag.center())));
  }
  return out;
}

JointValues joint_values_from(std::span<const JointEstimate> estimates) {
  JointValues out;
  for (const auto& e : estimates) {
    if (e.status == JointStatus::resolved && !e.out_of_limits) out[e.dof_id] = e.value;
  }
  return out;
}

// ---------------------------------------------------------------------------
// localization

namespace {

struct PoseGuess {
  Eigen::Matrix3d rotation;
  Eigen::Vector3d translation;
};

double pose_rms(std::span<const Correspondence> corr, const CameraIntrinsics& cam, const PoseGuess& pose) {
  double sum = 0;
  for (const auto& c : corr) {
    const Eigen::Vector3d pc = pose.rotation * c.world + pose.translation;
    if (!(pc.z() > 0)) return std::numeric_limits<double>::infinity();
    sum += (project_camera_point(cam, pc) - c.pixel).squaredNorm();
  }
  return std::sqrt(sum / static_cast<double>(corr.size()));
}

Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& m) {
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1 : 1;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

/// Full 3D DLT on normalized image coordinates; needs >= 6 non-coplanar points.
std::optional<PoseGuess> dlt_pose(const Points3d& world, const Points2d& xn) {
  const auto n = world.size();
  if (n < 6) return std::nullopt;
  const Eigen::Vector3d c = centroid(world);
  double spread = 0;
  for (const auto& p : world) spread += (p - c).norm();
  spread = spread / static_cast<double>(n) / std::sqrt(3.0);
  if (!(spread > 0)) return std::nullopt;

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * static_cast<Eigen::Index>(n), 12);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::Vector4d xh;
    xh << (world[i] - c) / spread, 1.0;
    const auto r = static_cast<Eigen::Index>(2 * i);
    a.block<1, 4>(r, 0) = xh.transpose();
    a.block<1, 4>(r, 8) = -xn[i].x() * xh.transpose();
    a.block<1, 4>(r + 1, 4) = xh.transpose();
    a.block<1, 4>(r + 1, 8) = -xn[i].y() * xh.transpose();
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd m = svd.matrixV().col(11);
  Eigen::Matrix<double, 3, 4> mn;
  mn << m.segment<4>(0).transpose(), m.segment<4>(4).transpose(), m.segment<4>(8).transpose();
  // Undo the point normalization: X' = (X - c) / spread.
  Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
  t.topLeftCorner<3, 3>() /= spread;
  t.topRightCorner<3, 1>() = -c / spread;
  Eigen::Matrix<double, 3, 4> full = mn * t;
  if (full.leftCols<3>().determinant() < 0) full = -full;
  const Eigen::JacobiSVD<Eigen::Matrix3d> s3(full.leftCols<3>(), Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double lambda = s3.singularValues().mean();
  if (!(lambda > 0)) return std::nullopt;
  PoseGuess g;
  g.rotation = nearest_rotation(full.leftCols<3>());
  g.translation = full.col(3) / lambda;
  return g;
}

/// Homography DLT on the best-fit plane of the points; exact for coplanar
/// input and a starting guess otherwise.
std::optional<PoseGuess> planar_pose(const Points3d& world, const Points2d& xn) {
  const auto n = world.size();
  if (n < 4) return std::nullopt;
  const Eigen::Vector3d c = centroid(world);
  Eigen::Matrix<double, 3, Eigen::Dynamic> centered(3, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) centered.col(static_cast<Eigen::Index>(i)) = world[i] - c;
  const Eigen::JacobiSVD<Eigen::Matrix<double, 3, Eigen::Dynamic>> plane(centered, Eigen::ComputeFullU);
  Eigen::Matrix3d basis = plane.matrixU();
  if (basis.determinant() < 0) basis.col(2) = -basis.col(2);
  const double spread = plane.singularValues()(0) / std::sqrt(static_cast<double>(n));
  if (!(spread > 0)) return std::nullopt;

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * static_cast<Eigen::Index>(n), 9);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d local = basis.transpose() * centered.col(static_cast<Eigen::Index>(i)) / spread;
    const Eigen::Vector3d ph(local.x(), local.y(), 1.0);
    const auto r = static_cast<Eigen::Index>(2 * i);
    a.block<1, 3>(r, 0) = ph.transpose();
    a.block<1, 3>(r, 6) = -xn[i].x() * ph.transpose();
    a.block<1, 3>(r + 1, 3) = ph.transpose();
    a.block<1, 3>(r + 1, 6) = -xn[i].y() * ph.transpose();
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hm;
  hm << h.segment<3>(0).transpose(), h.segment<3>(3).transpose(), h.segment<3>(6).transpose();
  double lambda = 0.5 * (hm.col(0).norm() + hm.col(1).norm());
  if (!(lambda > 0)) return std::nullopt;
  if (hm(2, 2) < 0) lambda = -lambda;  // plane centroid must lie in front
  const Eigen::Vector3d r1 = hm.col(0) / lambda, r2 = hm.col(1) / lambda, tp = hm.col(2) / lambda;
  Eigen::Matrix3d rp;
  rp << r1, r2, r1.cross(r2);
  rp = nearest_rotation(rp);
  PoseGuess g;
  g.rotation = rp * basis.transpose();
  g.translation = spread * tp - g.rotation * c;
  return g;
}

}  // namespace

LocalizationResult localize_from_correspondences(std::span<const Correspondence> corr, const CameraIntrinsics& cam,
                                                 const LocalizeOptions& options) {
  if (corr.size() < 4) {
    throw Error(ErrorKind::validation, kModule,
                "localization needs at least 4 correspondences, got " + std::to_string(corr.size()));
  }
  Points3d world;
  Points2d xn;
  for (const auto& c : corr) {
    world.push_back(c.world);
    xn.push_back(undistort_pixel(cam, c.pixel));
  }
  {
    Eigen::Matrix<double, 3, Eigen::Dynamic> centered = to_matrix(world);
    centered.colwise() -= centroid(world);
    const Eigen::JacobiSVD<Eigen::Matrix<double, 3, Eigen::Dynamic>> svd(centered);
    const Eigen::Vector3d sv = svd.singularValues();
    if (!(sv(0) > 0) || sv(1) < 1e-12 * sv(0)) {
      throw Error(ErrorKind::degenerate, kModule, "localization correspondences are collinear");
    }
  }

  std::optional<PoseGuess> best;
  double best_rms = std::numeric_limits<double>::infinity();
  for (const auto& guess : {dlt_pose(world, xn), planar_pose(world, xn)}) {
    if (!guess) continue;
    const double r = pose_rms(corr, cam, *guess);
    if (r < best_rms) {
      best_rms = r;
      best = guess;
    }
  }
  if (!best) throw Error(ErrorKind::degenerate, kModule, "no valid DLT initialization");

  // Levenberg-Marquardt over a rotation increment (axis-angle) and translation.
  using Jet = Eigen::AutoDiffScalar<Eigen::Matrix<double, 6, 1>>;
  PoseGuess pose = *best;
  double cost = best_rms * best_rms * static_cast<double>(corr.size());
  double lambda = options.lambda_init;

  LocalizationResult result;
  result.rms_history.push_back(best_rms);
  bool converged = !std::isfinite(cost) ? false : cost == 0.0;
  int iter = 0;
  for (; iter < options.max_iterations && !converged; ++iter) {
    Eigen::Matrix<double, 6, 6> jtj = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> jtr = Eigen::Matrix<double, 6, 1>::Zero();
    Vector3<Jet> w, dt;
    for (int k = 0; k < 3; ++k) {
      w[k] = Jet(0.0, 6, k);
      dt[k] = Jet(0.0, 6, 3 + k);
    }
    const Matrix3<Jet> r = so3_exp(w) * pose.rotation.cast<Jet>();
    const Vector3<Jet> t = pose.translation.cast<Jet>() + dt;
    for (const auto& c : corr) {
      const Vector3<Jet> pc = r * c.world.cast<Jet>() + t;
      const Vector2<Jet> px = project_camera_point(cam, pc);
      for (int k = 0; k < 2; ++k) {
        const Eigen::Matrix<double, 6, 1> g = px[k].derivatives();
        jtj += g * g.transpose();
        jtr += g * (px[k].value() - c.pixel[k]);
      }
    }

    // Inner loop: raise damping until a step lowers the cost.
    bool accepted = false;
    while (!accepted) {
      Eigen::Matrix<double, 6, 6> damped = jtj;
      damped.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
      const Eigen::Matrix<double, 6, 1> step = -damped.ldlt().solve(jtr);
      PoseGuess candidate;
      candidate.rotation = so3_exp(Eigen::Vector3d(step.head<3>())) * pose.rotation;
      candidate.translation = pose.translation + step.tail<3>();
      const double cand_rms = pose_rms(corr, cam, candidate);
      const double cand_cost = cand_rms * cand_rms * static_cast<double>(corr.size());
      if (step.allFinite() && cand_cost < cost) {
        const double decrease = cost - cand_cost;
        pose = candidate;
        cost = cand_cost;
        lambda /= 10.0;
        accepted = true;
        result.rms_history.push_back(cand_rms);
        const double scale = 1.0 + pose.translation.norm();
        if (decrease <= 1e-14 * cost || step.norm() <= 1e-12 * scale || cost == 0.0) converged = true;
      } else {
        lambda *= 10.0;
        if (lambda > 1e12) {
          // No damped step improves the cost: at a minimum to machine precision.
          converged = true;
          break;
        }
      }
    }
  }

  result.iterations = iter;
  result.rms = std::sqrt(cost / static_cast<double>(corr.size()));
  result.pose.camera_id = cam.camera_id;
  result.pose.rotation = Eigen::Quaterniond(pose.rotation).normalized();
  result.pose.translation = pose.translation;
  if (!converged) {
    throw Error(ErrorKind::not_converged, kModule,
                "Levenberg-Marquardt did not converge in " + std::to_string(options.max_iterations) +
                    " iterations (last rms " + format_double(result.rms) + " px)");
  }
  return result;
}

LocalizationResult localize_frame(std::span<const TagObservation> obs, const Assembly& asm_, const CameraIntrinsics& cam,
                                  const JointValues& joints, const LocalizeOptions& options) {
  std::vector<Correspondence> corr;
  for (const auto& o : obs) {
    const TagAnchor* tag = asm_.find_tag(o.tag_id);
    if (!tag) continue;
    const auto corners = tag_corners_at(asm_, *tag, joints);
    for (std::size_t c = 0; c < 4; ++c) corr.push_back({corners[c], o.corners_px[c]});
  }
  auto result = localize_from_correspondences(corr, cam, options);
  if (!obs.empty()) result.pose.image_id = obs.front().image_id;
  return result;
}

std::vector<FrameLocalization> localize_video(std::span<const FrameObservations> frames, const Assembly& asm_,
                                              const CameraIntrinsics& cam, const JointValues& joints,
                                              const LocalizeOptions& options) {
  std::vector<FrameLocalization> out;
  out.reserve(frames.size());
  for (const auto& f : frames) {
    FrameLocalization fl;
    fl.frame_index = f.frame_index;
    try {
      fl.result = localize_frame(f.detections, asm_, cam, joints, options);
      fl.result->pose.image_id = static_cast<std::uint32_t>(f.frame_index);
    } catch (const Error& e) {
      fl.error = e.what();
    }
    out.push_back(std::move(fl));
  }
  return out;
}

// ---------------------------------------------------------------------------
// interchange

std::vector<ImageDetections> parse_detections(std::string_view json_text) {
  const json doc = parse_json(json_text, kModule, "detections");
  std::vector<ImageDetections> out;
  try {
    const json& list = doc.is_object() && doc.contains("images") ? doc.at("images") : doc;
    if (!list.is_array()) throw Error(ErrorKind::schema, kModule, "detections: expected an array of images");
    for (const auto& img : list) {
      ImageDetections d;
      d.image = img.at("image").get<std::string>();
      if (img.contains("frame_index")) d.frame_index = img.at("frame_index").get<std::int64_t>();
      for (const auto& det : img.at("detections")) {
        Detection t;
        t.tag_id = det.at("tag_id").get<int>();
        const auto& corners = det.at("corners");
        if (!corners.is_array() || corners.size() != 4) {
          throw Error(ErrorKind::schema, kModule, "detections: tag " + std::to_string(t.tag_id) + " in '" + d.image +
                                                      "' must have 4 corners");
        }
        for (std::size_t c = 0; c < 4; ++c) t.corners[c] = vec2_from_json(corners[c]);
        d.detections.push_back(t);
      }
      out.push_back(std::move(d));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::schema, kModule, std::string("detections: ") + e.what());
  }
  return out;
}

json detections_to_json(std::span<const ImageDetections> images) {
  json out = json::array();
  for (const auto& img : images) {
    json dets = json::array();
    for (const auto& d : img.detections) {
      json corners = json::array();
      for (const auto& c : d.corners) corners.push_back(to_json(c));
      dets.push_back({{"tag_id", d.tag_id}, {"corners", corners}});
    }
    json j = {{"image", img.image}, {"detections", dets}};
    if (img.frame_index) j["frame_index"] = *img.frame_index;
    out.push_back(std::move(j));
  }
  return out;
}

std::vector<TagObservation> bind_detections(const SfmModel& model, std::span<const ImageDetections> images) {
  std::map<std::string, std::uint32_t> by_name;
  for (const auto& [id, img] : model.images) by_name.emplace(img.name, id);
  std::vector<TagObservation> out;
  for (const auto& img : images) {
    const auto it = by_name.find(img.image);
    if (it == by_name.end()) continue;
    for (const auto& d : img.detections) out.push_back({it->second, d.tag_id, d.corners});
  }
  return out;
}

std::vector<FrameObservations> frames_from_detections(std::span<const ImageDetections> images) {
  std::vector<FrameObservations> out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    FrameObservations f;
    f.frame_index = images[i].frame_index.value_or(static_cast<std::int64_t>(i));
    for (const auto& d : images[i].detections) {
      f.detections.push_back({static_cast<std::uint32_t>(f.frame_index), d.tag_id, d.corners});
    }
    out.push_back(std::move(f));
  }
  return out;
}

json to_json(const TriangulatedTag& tag) {
  json corners = json::array();
  for (const auto& c : tag.corners_sfm) corners.push_back(to_json(c));
  return {{"tag_id", tag.tag_id}, {"corners_sfm", corners}, {"rms_reprojection", tag.rms_reprojection}, {"n_views", tag.n_views}};
}

json to_json(const JointEstimate& e) {
  json j = {{"dof_id", e.dof_id}, {"status", e.status == JointStatus::resolved ? "resolved" : "unresolved"}};
  if (e.status == JointStatus::resolved) {
    j["value"] = e.value;
    j["residual"] = e.residual;
    j["out_of_limits"] = e.out_of_limits;
  } else {
    j["message"] = e.message;
  }
  return j;
}

json to_json(const ImagePose& pose) {
  return {{"image_id", pose.image_id},
          {"camera_id", pose.camera_id},
          {"rotation", to_json(pose.rotation)},
          {"translation", to_json(pose.translation)},
          {"name", pose.name}};
}

ImagePose image_pose_from_json(const json& j) {
  ImagePose p;
  p.image_id = j.value("image_id", 0u);
  p.camera_id = j.value("camera_id", 0u);
  p.rotation = quat_from_json(j.at("rotation"));
  p.translation = vec3_from_json(j.at("translation"));
  p.name = j.value("name", "");
  return p;
}

json to_json(const LocalizationResult& r) {
  return {{"pose", to_json(r.pose)}, {"rms", r.rms}, {"iterations", r.iterations}};
}

json to_json(const CameraIntrinsics& cam) {
  return {{"camera_id", cam.camera_id},
          {"model", colmap_name(cam.model)},
          {"width", cam.width},
          {"height", cam.height},
          {"params", cam.colmap_params()}};
}

CameraIntrinsics camera_from_json(const json& j) {
  try {
    const auto model = camera_model_from_name(j.at("model").get<std::string>());
    if (!model) throw Error(ErrorKind::unsupported, "sfm_model", "unsupported camera model " + j.at("model").dump());
    auto cam = CameraIntrinsics::from_colmap_params(j.value("camera_id", 1u), *model, j.at("width").get<std::uint64_t>(),
                                                    j.at("height").get<std::uint64_t>(),
                                                    j.at("params").get<std::vector<double>>());
    cam.validate();
    return cam;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::schema, "sfm_model", std::string("camera: ") + e.what());
  }
}

}  // namespace hwscene
