#include "hwscene/pipeline.hpp"

namespace hwscene {

RegisteredSplat register_splat_bundle(const SplatBundle& bundle, const Assembly& asm_, const RegistrationOptions& options) {
  const auto obs = bind_detections(bundle.model, bundle.detections);
  RegisteredSplat out;
  out.alignment = align_splat_to_cad(bundle.model, obs, asm_, options.alignment);
  out.joints = resolve_constraints(bundle.model, obs, asm_, out.alignment.transform, options.alignment.triangulation);
  out.joint_values = joint_values_from(out.joints);
  out.gaussians_total = bundle.cloud.gaussians.size();
  out.cloud = transform_splat(bundle.cloud, out.alignment.transform, options.transform);
  if (options.privacy) out.cloud = prune_by_mask(out.cloud, privacy_mask(out.cloud, asm_, out.joint_values, options.mask));
  return out;
}

SplatEntry make_splat_entry(const RegisteredSplat& reg, const std::string& splat_ref, const SplatBundle& bundle) {
  SplatEntry e;
  e.splat_ref = splat_ref;
  e.bundle_ref = bundle.content_hash;
  e.transform = reg.alignment.transform;
  e.rms_mm = reg.alignment.rms_mm;
  e.warning = reg.alignment.warning;
  e.capture_time = manifest_capture_time(bundle.manifest);
  e.joint_values = reg.joint_values;
  e.joints = reg.joints;
  e.gaussians_total = reg.gaussians_total;
  e.gaussians_kept = reg.cloud.gaussians.size();
  return e;
}

json registration_report(const RegisteredSplat& reg) {
  json tags = json::array();
  for (const auto& t : reg.alignment.grounding_tags) tags.push_back(to_json(t));
  json joints = json::array();
  for (const auto& j : reg.joints) joints.push_back(to_json(j));
  return {{"transform", to_json(reg.alignment.transform)},
          {"rms_mm", reg.alignment.rms_mm},
          {"warning", reg.alignment.warning ? json(*reg.alignment.warning) : json(nullptr)},
          {"grounding_tags", tags},
          {"joints", joints},
          {"joint_values", reg.joint_values},
          {"gaussians_total", reg.gaussians_total},
          {"gaussians_kept", reg.cloud.gaussians.size()}};
}

VideoAnnotation localize_video_bundle(const VideoBundle& bundle, const Assembly& asm_, const JointValues& joints,
                                      const LocalizeOptions& options) {
  const auto frames = frames_from_detections(bundle.detections);
  const auto results = localize_video(frames, asm_, bundle.camera, joints, options);
  VideoAnnotation v;
  v.clip_ref = bundle.clip_ref;
  v.bundle_ref = bundle.content_hash;
  v.camera = bundle.camera;
  v.capture_time = manifest_capture_time(bundle.manifest);
  for (std::size_t i = 0; i < results.size(); ++i) {
    LocalizedFrame f;
    f.frame_index = results[i].frame_index;
    f.error = results[i].error;
    if (results[i].result) {
      f.pose = results[i].result->pose;
      f.pose->name = bundle.detections[i].image;
      f.rms = results[i].result->rms;
      if (!v.placement_pose) v.placement_pose = f.pose;
    }
    v.frames.push_back(std::move(f));
  }
  return v;
}

}  // namespace hwscene
