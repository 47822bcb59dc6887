#pragma once

#include "hwscene/bundle.hpp"
#include "hwscene/mesh_distance.hpp"
#include "hwscene/registration.hpp"
#include "hwscene/scene.hpp"

namespace hwscene {

struct RegistrationOptions {
  AlignmentOptions alignment;
  /// Prune background gaussians after transforming into CAD space.
  bool privacy = true;
  MaskOptions mask;
  SplatTransformOptions transform;
};

struct RegisteredSplat {
  Alignment alignment;
  std::vector<JointEstimate> joints;
  JointValues joint_values;
  /// Transformed into CAD space and, with privacy on, pruned.
  SplatCloud cloud;
  std::size_t gaussians_total = 0;
};

/// Aligns the capture to the assembly, resolves its joints and moves the
/// splat into CAD space.
RegisteredSplat register_splat_bundle(const SplatBundle& bundle, const Assembly& asm_,
                                      const RegistrationOptions& options = {});

SplatEntry make_splat_entry(const RegisteredSplat& reg, const std::string& splat_ref, const SplatBundle& bundle);

/// Registration report: transform, rms, warning, joints and gaussian counts.
json registration_report(const RegisteredSplat& reg);

/// Localizes every frame of the clip against the assembly posed by `joints`.
VideoAnnotation localize_video_bundle(const VideoBundle& bundle, const Assembly& asm_, const JointValues& joints,
                                      const LocalizeOptions& options = {});

}  // namespace hwscene
