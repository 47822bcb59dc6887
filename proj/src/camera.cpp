#include "hwscene/camera.hpp"

#include <unsupported/Eigen/AutoDiff>

#include <cmath>

namespace hwscene {

std::string_view colmap_name(CameraModel model) {
  switch (model) {
    case CameraModel::simple_pinhole: return "SIMPLE_PINHOLE";
    case CameraModel::pinhole: return "PINHOLE";
    case CameraModel::simple_radial: return "SIMPLE_RADIAL";
    case CameraModel::opencv_radial: return "OPENCV";
  }
  return "UNKNOWN";
}

std::optional<CameraModel> camera_model_from_name(std::string_view name) {
  if (name == "SIMPLE_PINHOLE") return CameraModel::simple_pinhole;
  if (name == "PINHOLE") return CameraModel::pinhole;
  if (name == "SIMPLE_RADIAL") return CameraModel::simple_radial;
  if (name == "OPENCV") return CameraModel::opencv_radial;
  return std::nullopt;
}

std::optional<CameraModel> camera_model_from_id(int id) {
  switch (id) {
    case 0: return CameraModel::simple_pinhole;
    case 1: return CameraModel::pinhole;
    case 2: return CameraModel::simple_radial;
    case 4: return CameraModel::opencv_radial;
    default: return std::nullopt;
  }
}

int distortion_count(CameraModel model) {
  switch (model) {
    case CameraModel::simple_pinhole:
    case CameraModel::pinhole: return 0;
    case CameraModel::simple_radial: return 1;
    case CameraModel::opencv_radial: return 4;
  }
  return 0;
}

int colmap_param_count(CameraModel model) {
  switch (model) {
    case CameraModel::simple_pinhole: return 3;
    case CameraModel::pinhole: return 4;
    case CameraModel::simple_radial: return 4;
    case CameraModel::opencv_radial: return 8;
  }
  return 0;
}

namespace {
bool single_focal(CameraModel m) {
  return m == CameraModel::simple_pinhole || m == CameraModel::simple_radial;
}
}  // namespace

CameraIntrinsics CameraIntrinsics::from_colmap_params(std::uint32_t id, CameraModel model,
                                                      std::uint64_t width, std::uint64_t height,
                                                      const std::vector<double>& params) {
  if (static_cast<int>(params.size()) != colmap_param_count(model)) {
    throw Error(ErrorKind::validation, "sfm_model",
                "camera " + std::to_string(id) + ": " + std::string(colmap_name(model)) + " expects " +
                    std::to_string(colmap_param_count(model)) + " params, got " +
                    std::to_string(params.size()));
  }
  CameraIntrinsics cam;
  cam.camera_id = id;
  cam.model = model;
  cam.width = width;
  cam.height = height;
  std::size_t i = 0;
  if (single_focal(model)) {
    cam.fx = cam.fy = params[i++];
  } else {
    cam.fx = params[i++];
    cam.fy = params[i++];
  }
  cam.cx = params[i++];
  cam.cy = params[i++];
  cam.distortion.assign(params.begin() + static_cast<std::ptrdiff_t>(i), params.end());
  return cam;
}

std::vector<double> CameraIntrinsics::colmap_params() const {
  std::vector<double> p;
  if (single_focal(model)) {
    p.push_back(fx);
  } else {
    p.push_back(fx);
    p.push_back(fy);
  }
  p.push_back(cx);
  p.push_back(cy);
  p.insert(p.end(), distortion.begin(), distortion.end());
  return p;
}

void CameraIntrinsics::validate() const {
  const auto fail = [this](const std::string& what) {
    throw Error(ErrorKind::validation, "sfm_model", "camera " + std::to_string(camera_id) + ": " + what);
  };
  if (!(fx > 0) || !(fy > 0)) fail("focal lengths must be positive");
  if (single_focal(model) && fx != fy) fail("single-focal model with fx != fy");
  if (!(cx >= 0 && cx <= static_cast<double>(width))) fail("cx outside [0, width]");
  if (!(cy >= 0 && cy <= static_cast<double>(height))) fail("cy outside [0, height]");
  if (static_cast<int>(distortion.size()) != distortion_count(model)) fail("distortion count does not match model");
  for (double d : distortion) {
    if (!std::isfinite(d)) fail("non-finite distortion coefficient");
  }
}

Eigen::Vector2d undistort_pixel(const CameraIntrinsics& cam, const Eigen::Vector2d& pixel) {
  Eigen::Vector2d uv((pixel.x() - cam.cx) / cam.fx, (pixel.y() - cam.cy) / cam.fy);
  if (distortion_count(cam.model) == 0) return uv;

  using Ad = Eigen::AutoDiffScalar<Eigen::Vector2d>;
  for (int iter = 0; iter < 50; ++iter) {
    const Vector2<Ad> x(Ad(uv.x(), 2, 0), Ad(uv.y(), 2, 1));
    const Vector2<Ad> px = distort_to_pixel(cam, x);
    const Eigen::Vector2d r(px.x().value() - pixel.x(), px.y().value() - pixel.y());
    Eigen::Matrix2d jac;
    jac.row(0) = px.x().derivatives().transpose();
    jac.row(1) = px.y().derivatives().transpose();
    const Eigen::Vector2d step = jac.partialPivLu().solve(r);
    uv -= step;
    if (step.norm() < 1e-15 * (1.0 + uv.norm())) break;
  }
  return uv;
}

}  // namespace hwscene
