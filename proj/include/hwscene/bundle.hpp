#pragma once

#include "hwscene/json_io.hpp"
#include "hwscene/registration.hpp"
#include "hwscene/sfm_model.hpp"
#include "hwscene/splat.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace hwscene {

/// Archive members by path. Directories are implied by member paths.
using FileMap = std::map<std::string, std::string>;

/// POSIX ustar reader. Regular files only; other entry types are skipped.
FileMap read_tar(std::string_view bytes);
/// Deterministic ustar writer (mtime 0, mode 0644, members in path order).
std::string write_tar(const FileMap& files);

enum class CaptureKind { splat, video };

std::string_view to_string(CaptureKind kind);
std::optional<CaptureKind> capture_kind_from_string(std::string_view s);

/// Pre-trained splat capture: `sfm/{cameras,images,points3D}.{bin,txt}`,
/// `splat.ply`, `detections.json`, `manifest.json`, optional `frames.txt`.
struct SplatBundle {
  SfmModel model;
  SplatCloud cloud;
  std::vector<ImageDetections> detections;
  json manifest;
  std::optional<FrameManifest> frames;
  std::string content_hash;
};

/// Video clip capture: `detections.json` (one entry per frame),
/// `manifest.json` carrying the `camera`, and an optional clip file
/// named by `manifest.clip`.
struct VideoBundle {
  CameraIntrinsics camera;
  std::vector<ImageDetections> detections;
  json manifest;
  std::string clip_ref;
  std::string content_hash;
};

/// SHA-256 of the archive re-encoded by write_tar, after dropping a single
/// shared top-level directory. Identical member sets hash identically.
std::string canonical_bundle_hash(std::string_view tar_bytes);

/// Throws Error(schema) naming the missing or malformed member.
SplatBundle parse_splat_bundle(std::string_view tar_bytes);
VideoBundle parse_video_bundle(std::string_view tar_bytes);

FileMap splat_bundle_files(const SfmModel& model, SfmFormat format, const SplatCloud& cloud,
                           const std::vector<ImageDetections>& detections, const json& manifest);
FileMap video_bundle_files(const CameraIntrinsics& camera, const std::vector<ImageDetections>& detections,
                           const json& manifest);

/// Capture time from `manifest.capture_time`, else 0.
std::int64_t manifest_capture_time(const json& manifest);

}  // namespace hwscene
