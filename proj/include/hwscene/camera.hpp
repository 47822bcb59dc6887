#pragma once

#include "hwscene/error.hpp"
#include "hwscene/geometry.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hwscene {

/// Supported lens models. The numeric values are the COLMAP model ids.
enum class CameraModel : int {
  simple_pinhole = 0,
  pinhole = 1,
  simple_radial = 2,
  opencv_radial = 4,  // COLMAP "OPENCV": k1, k2, p1, p2
};

std::string_view colmap_name(CameraModel model);
std::optional<CameraModel> camera_model_from_name(std::string_view name);
std::optional<CameraModel> camera_model_from_id(int id);
/// Number of distortion coefficients carried by `model`.
int distortion_count(CameraModel model);
/// Number of COLMAP parameters (focal, principal point, distortion).
int colmap_param_count(CameraModel model);

struct CameraIntrinsics {
  std::uint32_t camera_id = 0;
  CameraModel model = CameraModel::pinhole;
  std::uint64_t width = 0;
  std::uint64_t height = 0;
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  std::vector<double> distortion;

  /// Builds from a COLMAP parameter list (model-specific layout).
  static CameraIntrinsics from_colmap_params(std::uint32_t id, CameraModel model, std::uint64_t width,
                                             std::uint64_t height, const std::vector<double>& params);
  std::vector<double> colmap_params() const;

  /// Throws Error(validation) when an invariant does not hold.
  void validate() const;

  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

/// Applies the lens distortion to normalized image coordinates and maps them
/// to pixels.
template <typename Scalar>
Vector2<Scalar> distort_to_pixel(const CameraIntrinsics& cam, const Vector2<Scalar>& uv) {
  Scalar u = uv.x();
  Scalar v = uv.y();
  switch (cam.model) {
    case CameraModel::simple_pinhole:
    case CameraModel::pinhole:
      break;
    case CameraModel::simple_radial: {
      const Scalar r2 = u * u + v * v;
      const Scalar radial = Scalar(cam.distortion[0]) * r2;
      u += u * radial;
      v += v * radial;
      break;
    }
    case CameraModel::opencv_radial: {
      const Scalar k1(cam.distortion[0]), k2(cam.distortion[1]);
      const Scalar p1(cam.distortion[2]), p2(cam.distortion[3]);
      const Scalar uu = u * u, vv = v * v, uv2 = u * v, r2 = uu + vv;
      const Scalar radial = k1 * r2 + k2 * r2 * r2;
      const Scalar du = u * radial + Scalar(2) * p1 * uv2 + p2 * (r2 + Scalar(2) * uu);
      const Scalar dv = v * radial + Scalar(2) * p2 * uv2 + p1 * (r2 + Scalar(2) * vv);
      u += du;
      v += dv;
      break;
    }
  }
  return Vector2<Scalar>(Scalar(cam.fx) * u + Scalar(cam.cx), Scalar(cam.fy) * v + Scalar(cam.cy));
}

/// Projects a point already expressed in the camera frame. Throws on z = 0.
template <typename Scalar>
Vector2<Scalar> project_camera_point(const CameraIntrinsics& cam, const Vector3<Scalar>& pc) {
  if (pc.z() == Scalar(0)) {
    throw Error(ErrorKind::degenerate, "sfm_model", "degenerate projection: point on the camera plane");
  }
  return distort_to_pixel(cam, Vector2<Scalar>(pc.x() / pc.z(), pc.y() / pc.z()));
}

/// Inverts distort_to_pixel: pixel -> normalized coordinates (x/z, y/z).
Eigen::Vector2d undistort_pixel(const CameraIntrinsics& cam, const Eigen::Vector2d& pixel);

}  // namespace hwscene
