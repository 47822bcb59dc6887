#pragma once

#include "hwscene/camera.hpp"
#include "hwscene/geometry.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hwscene {

inline constexpr std::uint64_t kNoPoint3d = std::numeric_limits<std::uint64_t>::max();

struct Observation {
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  std::uint64_t point3d_id = kNoPoint3d;

  bool has_point() const { return point3d_id != kNoPoint3d; }
  friend bool operator==(const Observation&, const Observation&) = default;
};

/// World -> camera pose of one registered image.
struct ImagePose {
  std::uint32_t image_id = 0;
  std::uint32_t camera_id = 0;
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  std::string name;
  std::vector<Observation> observations;

  Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const {
    return rotation * world + translation;
  }
  /// Camera centre in world coordinates.
  Eigen::Vector3d center() const { return -(rotation.conjugate() * translation); }

  friend bool operator==(const ImagePose& a, const ImagePose& b) {
    return a.image_id == b.image_id && a.camera_id == b.camera_id &&
           a.rotation.coeffs() == b.rotation.coeffs() && a.translation == b.translation &&
           a.name == b.name && a.observations == b.observations;
  }
};

struct TrackElement {
  std::uint32_t image_id = 0;
  std::uint32_t point2d_idx = 0;
  friend bool operator==(const TrackElement&, const TrackElement&) = default;
};

struct TrackPoint {
  std::uint64_t point3d_id = 0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  std::array<std::uint8_t, 3> color{0, 0, 0};
  double reprojection_error = 0;
  std::vector<TrackElement> track;
  friend bool operator==(const TrackPoint&, const TrackPoint&) = default;
};

struct SfmModel {
  std::map<std::uint32_t, CameraIntrinsics> cameras;
  std::map<std::uint32_t, ImagePose> images;
  std::map<std::uint64_t, TrackPoint> points;

  /// Referential integrity and per-record invariants. Throws Error.
  void validate() const;

  const ImagePose* find_image_by_name(const std::string& name) const;

  friend bool operator==(const SfmModel&, const SfmModel&) = default;
};

enum class SfmFormat { text, binary };

/// The three COLMAP tables as raw bytes.
struct SfmTables {
  std::string cameras;
  std::string images;
  std::string points3d;
};

SfmModel parse_sfm_model(const SfmTables& tables, SfmFormat format);
SfmTables write_sfm_model(const SfmModel& model, SfmFormat format);

/// Reads `cameras`, `images`, `points3D` (.bin preferred, else .txt) from `dir`.
SfmModel read_sfm_model(const std::filesystem::path& dir);
void write_sfm_model(const SfmModel& model, const std::filesystem::path& dir, SfmFormat format);
/// Picks the format present in `dir`; binary wins if both exist.
std::optional<SfmFormat> detect_sfm_format(const std::filesystem::path& dir);

struct Projection {
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  bool in_front = false;
};

/// pixel = distort(K * normalize(R p + t)). Throws on a point at the camera
/// centre or on the camera plane.
Projection project(const Eigen::Vector3d& point, const ImagePose& pose, const CameraIntrinsics& cam);

/// Re-expresses the model in the frame x' = g(x). Camera poses follow so that
/// every pixel observation stays valid.
SfmModel transform_sfm_model(const SfmModel& model, const SimilarityTransformd& g);

// ---------------------------------------------------------------------------
// Frame manifests and two-pass sampling

struct FrameEntry {
  std::int64_t frame_index = 0;
  double timestamp = 0;
  bool has_tag = false;
  friend bool operator==(const FrameEntry&, const FrameEntry&) = default;
};

struct FrameManifest {
  std::vector<FrameEntry> entries;
  void validate() const;
};

/// Newline-delimited `frame_index timestamp has_tag` records, or a JSON
/// document `{"entries": [{frame_index, timestamp, has_tag}]}`.
FrameManifest parse_frame_manifest(const std::string& text);

/// Nominal source rate: (n - 1) / duration. Zero for fewer than two frames.
double source_frame_rate(const FrameManifest& manifest);
/// Source frame rate capped at 10 Hz.
double default_tag_rate(const FrameManifest& manifest);

/// Union of the frames nearest each 1/base_rate tick and the tagged frames
/// nearest each 1/tag_rate tick, sorted and unique.
std::vector<std::int64_t> sample_frames(const FrameManifest& manifest, double base_rate, double tag_rate);

}  // namespace hwscene
