#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <vector>

namespace hwscene {

template <typename Scalar>
using Vector2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;

using Points3d = std::vector<Eigen::Vector3d>;
using Points2d = std::vector<Eigen::Vector2d>;

/// Skew-symmetric cross-product matrix.
template <typename Scalar>
Matrix3<Scalar> hat(const Vector3<Scalar>& w) {
  Matrix3<Scalar> m;
  m << Scalar(0), -w.z(), w.y(),
       w.z(), Scalar(0), -w.x(),
       -w.y(), w.x(), Scalar(0);
  return m;
}

/// Rotation matrix of the axis-angle vector `w` (Rodrigues). The small-angle
/// branch keeps automatic derivatives well defined at w = 0.
template <typename Scalar>
Matrix3<Scalar> so3_exp(const Vector3<Scalar>& w) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const Scalar theta2 = w.squaredNorm();
  const Matrix3<Scalar> k = hat(w);
  if (theta2 < Scalar(1e-20)) {
    return Matrix3<Scalar>::Identity() + k + Scalar(0.5) * k * k;
  }
  const Scalar theta = sqrt(theta2);
  const Scalar a = sin(theta) / theta;
  const Scalar b = (Scalar(1) - cos(theta)) / theta2;
  return Matrix3<Scalar>::Identity() + a * k + b * k * k;
}

/// Geodesic angle between two rotations, in radians.
inline double rotation_angle_between(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  // acos loses precision near 0; atan2 of the antisymmetric part does not.
  const Eigen::Matrix3d d = a.transpose() * b;
  const double c = (d.trace() - 1.0) / 2.0;
  const Eigen::Vector3d s(d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1));
  return std::atan2(0.5 * s.norm(), c);
}

/// Scale + rotation + translation: x' = scale * R * x + t.
template <typename Scalar>
struct SimilarityTransform {
  Scalar scale{1};
  Matrix3<Scalar> rotation = Matrix3<Scalar>::Identity();
  Vector3<Scalar> translation = Vector3<Scalar>::Zero();

  static SimilarityTransform Identity() { return {}; }

  Vector3<Scalar> operator()(const Vector3<Scalar>& p) const {
    return scale * (rotation * p) + translation;
  }

  /// this ∘ other: apply `other` first.
  SimilarityTransform operator*(const SimilarityTransform& other) const {
    SimilarityTransform out;
    out.scale = scale * other.scale;
    out.rotation = rotation * other.rotation;
    out.translation = scale * (rotation * other.translation) + translation;
    return out;
  }

  SimilarityTransform inverse() const {
    SimilarityTransform out;
    out.scale = Scalar(1) / scale;
    out.rotation = rotation.transpose();
    out.translation = -(out.scale * (out.rotation * translation));
    return out;
  }

  bool is_finite() const {
    using std::isfinite;
    return isfinite(scale) && rotation.allFinite() && translation.allFinite();
  }

  /// Checks s > 0, R orthonormal and proper within `tol`.
  bool is_valid(Scalar tol = Scalar(1e-9)) const {
    using std::abs;
    if (!is_finite() || !(scale > Scalar(0))) return false;
    if (abs(rotation.determinant() - Scalar(1)) >= tol) return false;
    return ((rotation.transpose() * rotation - Matrix3<Scalar>::Identity()).cwiseAbs().maxCoeff() <= tol);
  }

  bool is_identity() const {
    return scale == Scalar(1) && rotation == Matrix3<Scalar>::Identity() && translation.isZero(0);
  }

  Eigen::Matrix<Scalar, 4, 4> matrix() const {
    Eigen::Matrix<Scalar, 4, 4> m = Eigen::Matrix<Scalar, 4, 4>::Identity();
    m.template topLeftCorner<3, 3>() = scale * rotation;
    m.template topRightCorner<3, 1>() = translation;
    return m;
  }

  template <typename Other>
  SimilarityTransform<Other> cast() const {
    SimilarityTransform<Other> out;
    out.scale = Other(scale);
    out.rotation = rotation.template cast<Other>();
    out.translation = translation.template cast<Other>();
    return out;
  }
};

using SimilarityTransformd = SimilarityTransform<double>;

/// Rigid transforms in CAD millimetres.
using Rigid3d = Eigen::Isometry3d;

/// Rotation of angle `theta` about the line through `origin` along unit `axis`.
inline Rigid3d rotation_about_line(const Eigen::Vector3d& axis, const Eigen::Vector3d& origin,
                                   double theta) {
  Rigid3d r = Rigid3d::Identity();
  r.linear() = Eigen::AngleAxisd(theta, axis).toRotationMatrix();
  r.translation() = origin - r.linear() * origin;
  return r;
}

inline Eigen::Vector3d centroid(const Points3d& pts) {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (const auto& p : pts) c += p;
  return pts.empty() ? c : Eigen::Vector3d(c / static_cast<double>(pts.size()));
}

}  // namespace hwscene
