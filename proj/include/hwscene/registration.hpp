#pragma once

#include "hwscene/assembly.hpp"
#include "hwscene/error.hpp"
#include "hwscene/geometry.hpp"
#include "hwscene/sfm_model.hpp"

#include <Eigen/SVD>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hwscene {

/// Four tag corners detected in one image, in detector corner order.
struct TagObservation {
  std::uint32_t image_id = 0;
  int tag_id = 0;
  std::array<Eigen::Vector2d, 4> corners_px;
};

struct TriangulatedTag {
  int tag_id = 0;
  std::array<Eigen::Vector3d, 4> corners_sfm;
  double rms_reprojection = 0;
  int n_views = 0;

  Eigen::Vector3d center() const {
    return (corners_sfm[0] + corners_sfm[1] + corners_sfm[2] + corners_sfm[3]) / 4.0;
  }
};

// ---------------------------------------------------------------------------
// Arun's method

template <typename Scalar>
struct RigidFit {
  Matrix3<Scalar> rotation = Matrix3<Scalar>::Identity();
  Vector3<Scalar> translation = Vector3<Scalar>::Zero();
  Scalar rms{0};
};

/// Least-squares rotation and translation with R * source + t ≈ target, for
/// 3xN point matrices (one point per column). Throws Error(degenerate) on
/// collinear input and Error(validation) for fewer than three points.
template <typename DerivedSrc, typename DerivedDst>
RigidFit<typename DerivedSrc::Scalar> fit_rigid_arun(const Eigen::MatrixBase<DerivedSrc>& source,
                                                     const Eigen::MatrixBase<DerivedDst>& target) {
  using Scalar = typename DerivedSrc::Scalar;
  static_assert(std::is_same_v<Scalar, typename DerivedDst::Scalar>, "source and target scalar types differ");
  static_assert(DerivedSrc::RowsAtCompileTime == 3 && DerivedDst::RowsAtCompileTime == 3, "expected 3xN inputs");
  using std::sqrt;

  const Eigen::Index n = source.cols();
  if (n != target.cols()) throw Error(ErrorKind::validation, "registration", "source/target sizes differ");
  if (n < 3) throw Error(ErrorKind::validation, "registration", "Arun's method needs at least 3 points");

  const Vector3<Scalar> src_mean = source.rowwise().mean();
  const Vector3<Scalar> dst_mean = target.rowwise().mean();
  const Eigen::Matrix<Scalar, 3, Eigen::Dynamic> p = source.colwise() - src_mean;
  const Eigen::Matrix<Scalar, 3, Eigen::Dynamic> q = target.colwise() - dst_mean;
  const Matrix3<Scalar> h = p * q.transpose();

  const Eigen::JacobiSVD<Matrix3<Scalar>> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector3<Scalar> sv = svd.singularValues();
  if (!(sv(0) > Scalar(0)) || sv(1) < Scalar(1e-12) * sv(0)) {
    throw Error(ErrorKind::degenerate, "registration",
                "collinear or coincident points: the rotation about the common line (and a reflection) "
                "cannot be resolved from this correspondence set");
  }
  const Matrix3<Scalar>& u = svd.matrixU();
  const Matrix3<Scalar>& v = svd.matrixV();
  Vector3<Scalar> d(Scalar(1), Scalar(1), (v * u.transpose()).determinant() < Scalar(0) ? Scalar(-1) : Scalar(1));

  RigidFit<Scalar> fit;
  fit.rotation = v * d.asDiagonal() * u.transpose();
  fit.translation = dst_mean - fit.rotation * src_mean;
  const Eigen::Matrix<Scalar, 3, Eigen::Dynamic> resid = (fit.rotation * source).colwise() + fit.translation - target;
  fit.rms = sqrt(resid.colwise().squaredNorm().sum() / Scalar(n));
  return fit;
}

RigidFit<double> fit_rigid_arun(const Points3d& source, const Points3d& target);

// ---------------------------------------------------------------------------
// triangulation

struct PointView {
  const ImagePose* pose = nullptr;
  const CameraIntrinsics* camera = nullptr;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
};

struct TriangulatedPoint {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  /// Squared pixel residual per view.
  std::vector<double> squared_errors;
};

struct TriangulationOptions {
  int max_refine_iterations = 10;
  double step_tolerance = 1e-12;
  double min_angle_deg = 0.5;
};

/// Linear (DLT) triangulation over undistorted rays refined by Gauss-Newton
/// on the full reprojection error.
TriangulatedPoint triangulate_point(std::span<const PointView> views, const TriangulationOptions& options = {});

TriangulatedTag triangulate_tag_corners(const SfmModel& model, std::span<const TagObservation> obs, int tag_id,
                                        const TriangulationOptions& options = {});

// ---------------------------------------------------------------------------
// alignment

/// mm per SfM unit: mean over tags and sides of physical / measured length.
double estimate_scale(std::span<const TriangulatedTag> tags, std::span<const TagAnchor> anchors);

struct AlignmentOptions {
  double rms_threshold_mm = 5.0;
  TriangulationOptions triangulation;
};

struct Alignment {
  /// CAD point = scale * R * p_sfm + t.
  SimilarityTransformd transform;
  double rms_mm = 0;
  std::vector<TriangulatedTag> grounding_tags;
  std::optional<std::string> warning;
};

Alignment align_splat_to_cad(const SfmModel& model, std::span<const TagObservation> obs, const Assembly& asm_,
                             const AlignmentOptions& options = {});

enum class JointStatus { resolved, unresolved };

struct JointEstimate {
  std::string dof_id;
  JointStatus status = JointStatus::unresolved;
  double value = 0;
  double residual = 0;
  bool out_of_limits = false;
  std::string message;
};

std::vector<JointEstimate> resolve_constraints(const SfmModel& model, std::span<const TagObservation> obs,
                                               const Assembly& asm_, const SimilarityTransformd& base,
                                               const TriangulationOptions& options = {});

/// Joint value and residual for one DOF from a constraint-tag centre already
/// expressed in CAD space.
JointEstimate joint_from_tag_center(const DofSpec& dof, const Eigen::Vector3d& observed_center);

/// Resolved, in-limit estimates as joint values.
JointValues joint_values_from(std::span<const JointEstimate> estimates);

// ---------------------------------------------------------------------------
// localization

struct Correspondence {
  Eigen::Vector3d world = Eigen::Vector3d::Zero();
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
};

struct LocalizeOptions {
  int max_iterations = 100;
  double lambda_init = 1e-3;
};

struct LocalizationResult {
  ImagePose pose;
  double rms = 0;
  int iterations = 0;
  /// RMS after initialization and after every accepted step.
  std::vector<double> rms_history;
};

/// DLT initialization (full or planar) refined with Levenberg-Marquardt.
LocalizationResult localize_from_correspondences(std::span<const Correspondence> corr, const CameraIntrinsics& cam,
                                                 const LocalizeOptions& options = {});

/// Pose of one frame in CAD space from its tag detections. Tag corners are
/// placed with the given joint values.
LocalizationResult localize_frame(std::span<const TagObservation> obs, const Assembly& asm_,
                                  const CameraIntrinsics& cam, const JointValues& joints,
                                  const LocalizeOptions& options = {});

struct FrameObservations {
  std::int64_t frame_index = 0;
  std::vector<TagObservation> detections;
};

struct FrameLocalization {
  std::int64_t frame_index = 0;
  std::optional<LocalizationResult> result;
  std::string error;
};

std::vector<FrameLocalization> localize_video(std::span<const FrameObservations> frames, const Assembly& asm_,
                                              const CameraIntrinsics& cam, const JointValues& joints,
                                              const LocalizeOptions& options = {});

// ---------------------------------------------------------------------------
// detection interchange

struct Detection {
  int tag_id = 0;
  std::array<Eigen::Vector2d, 4> corners;
};

struct ImageDetections {
  std::string image;
  std::optional<std::int64_t> frame_index;
  std::vector<Detection> detections;
};

/// `[{image, frame_index?, detections: [{tag_id, corners: [[u, v] x 4]}]}]`.
std::vector<ImageDetections> parse_detections(std::string_view json_text);
json detections_to_json(std::span<const ImageDetections> images);

/// Binds detections to model images by name; unknown names are skipped.
std::vector<TagObservation> bind_detections(const SfmModel& model, std::span<const ImageDetections> images);
/// Per-frame groups for video localization; frame_index falls back to position.
std::vector<FrameObservations> frames_from_detections(std::span<const ImageDetections> images);

json to_json(const TriangulatedTag& tag);
json to_json(const JointEstimate& estimate);
json to_json(const LocalizationResult& result);
json to_json(const ImagePose& pose);
ImagePose image_pose_from_json(const json& j);
json to_json(const CameraIntrinsics& cam);
CameraIntrinsics camera_from_json(const json& j);

}  // namespace hwscene
