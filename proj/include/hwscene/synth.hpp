#pragma once

#include "hwscene/assembly.hpp"
#include "hwscene/bundle.hpp"
#include "hwscene/registration.hpp"
#include "hwscene/sfm_model.hpp"
#include "hwscene/splat.hpp"

#include <cstdint>
#include <optional>
#include <numbers>
#include <random>
#include <string>

namespace hwscene {

/// The default synthetic rig: a base frame with a sliding carriage (carrying
/// a nozzle and fitting), a rotor and a pump. Three 20 mm grounding tags sit
/// on the frame; the carriage and rotor each carry a constraint tag.
struct SynthRig {
  std::string glb;
  json manifest;
};

SynthRig make_synthetic_rig();

struct SynthOptions {
  std::uint64_t seed = 7;
  /// mm per SfM unit; drawn uniformly from [10, 1000] when empty.
  std::optional<double> scale;
  /// s = 1, R = I, t = 0 and a pinhole lens.
  bool identity = false;
  /// Gaussian pixel noise on tag corners.
  double noise_px = 0;
  int n_cameras = 24;
  /// Joint values in effect during the capture.
  JointValues joints = {{"carriage_x", 42.0}, {"rotor_z", 30.0 * std::numbers::pi / 180.0}};
  int sh_degree = 1;
  std::size_t hardware_gaussians = 3000;
  std::size_t table_gaussians = 800;
  std::size_t background_gaussians = 1500;
  std::size_t sparse_points = 300;
  int video_frames = 30;
};

struct SynthResult {
  SynthOptions options;
  SynthRig rig;
  Assembly assembly;
  /// CAD point = truth(SfM point).
  SimilarityTransformd truth;
  SfmModel model;
  SplatCloud cloud;
  std::vector<ImageDetections> detections;
  CameraIntrinsics video_camera;
  std::vector<ImageDetections> video_detections;
  /// World (CAD mm) to camera pose of every video frame.
  std::vector<ImagePose> video_poses;
  json truth_json;
};

SynthResult synthesize(const SynthOptions& options);

/// Single archive layout: the splat capture bundle at the top level plus
/// `assembly/model.glb`, `assembly/manifest.json`, `video/` (a video bundle)
/// and `truth.json`.
FileMap synth_files(const SynthResult& result);

/// Members under `prefix` with the prefix removed.
FileMap sub_bundle(const FileMap& files, const std::string& prefix);

/// Camera looking from `center` at `target` with +z up in the world.
ImagePose look_at(const Eigen::Vector3d& center, const Eigen::Vector3d& target);

/// Uniformly distributed rotation.
Eigen::Matrix3d random_rotation(std::mt19937_64& rng);

}  // namespace hwscene
