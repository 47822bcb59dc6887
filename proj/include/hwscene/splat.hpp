#pragma once

#include "hwscene/geometry.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace hwscene {

/// One 3D Gaussian. Rotation is stored (w, x, y, z); the PLY rot_0..3
/// properties map onto that order.
struct Gaussian {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
  double opacity_logit = 0;
  Eigen::Vector3d color_dc = Eigen::Vector3d::Zero();
  /// Higher-band SH coefficients, one RGB triple per coefficient.
  std::vector<Eigen::Vector3d> color_rest;

  friend bool operator==(const Gaussian& a, const Gaussian& b) {
    return a.position == b.position && a.rotation.coeffs() == b.rotation.coeffs() &&
           a.log_scale == b.log_scale && a.opacity_logit == b.opacity_logit && a.color_dc == b.color_dc &&
           a.color_rest == b.color_rest;
  }
};

struct SplatCloud {
  std::vector<Gaussian> gaussians;
  int sh_degree = 0;
  std::string source_id;

  /// Coefficients per colour channel beyond the DC band: (d + 1)^2 - 1.
  static int rest_coefficients(int sh_degree) { return (sh_degree + 1) * (sh_degree + 1) - 1; }

  void validate() const;
  friend bool operator==(const SplatCloud&, const SplatCloud&) = default;
};

/// Parses a binary little-endian 3DGS PLY. When the header carries no
/// `comment source_id` line, `fallback_source_id` is used (defaults to the
/// SHA-256 of the bytes).
SplatCloud parse_splat_ply(std::string_view bytes, std::string fallback_source_id = {});
std::string write_splat_ply(const SplatCloud& cloud);

struct SplatTransformOptions {
  /// Keep higher SH bands (unrotated) under a non-identity rotation instead
  /// of dropping them.
  bool keep_unrotated_sh = false;
};

/// position' = s R p + t, rotation' = q(R) ⊗ q, log_scale' = log_scale + log s.
SplatCloud transform_splat(const SplatCloud& cloud, const SimilarityTransformd& xf,
                           SplatTransformOptions options = {});

SplatCloud prune_by_mask(const SplatCloud& cloud, const std::vector<bool>& keep);

}  // namespace hwscene
