#pragma once

#include <cmath>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace nanoloc {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;

/// World frame: x lateral (left side of the body at -x), y toward the head,
/// z out of the body surface. Gravity points along -z.
inline const Vec3 kGravity{0.0, 0.0, -9.81};

inline double horizontal_distance(const Vec3& a, const Vec3& b) {
  return std::hypot(a.x() - b.x(), a.y() - b.y());
}

/// Rotation vector (axis * angle) of a unit quaternion.
inline Vec3 quat_log(const Quat& q_in) {
  Quat q = q_in.w() < 0.0 ? Quat(-q_in.coeffs()) : q_in;
  const Vec3 v = q.vec();
  const double s = v.norm();
  if (s < 1e-12) return 2.0 * v;
  return 2.0 * std::atan2(s, q.w()) / s * v;
}

inline Quat quat_exp(const Vec3& rotvec) {
  const double angle = rotvec.norm();
  if (angle < 1e-12) {
    Quat q(1.0, 0.5 * rotvec.x(), 0.5 * rotvec.y(), 0.5 * rotvec.z());
    return q.normalized();
  }
  return Quat(Eigen::AngleAxisd(angle, rotvec / angle));
}

inline Eigen::Matrix3d skew(const Vec3& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

}  // namespace nanoloc
