#pragma once

#include <Eigen/Dense>

namespace ctxmhe {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec9 = Eigen::Matrix<double, 9, 1>;

/// Skew-symmetric matrix such that hat(a) * b == a x b.
inline Mat3 hat(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

inline Vec3 vee(const Mat3& m) {
  return Vec3(m(2, 1), m(0, 2), m(1, 0));
}

/// Rodrigues formula; series expansion below the sqrt(eps) angle threshold.
inline Mat3 so3_exp(const Vec3& phi) {
  const double angle = phi.norm();
  const Mat3 k = hat(phi);
  if (angle < 1e-8) {
    return Mat3::Identity() + k + 0.5 * k * k;
  }
  const double s = std::sin(angle) / angle;
  const double c = (1.0 - std::cos(angle)) / (angle * angle);
  return Mat3::Identity() + s * k + c * k * k;
}

/// Re-projects a near-rotation matrix onto SO(3) by Gram-Schmidt on
/// the first two columns.
inline Mat3 orthonormalize(const Mat3& r) {
  Vec3 b1 = r.col(0).normalized();
  Vec3 b2 = (r.col(1) - b1.dot(r.col(1)) * b1).normalized();
  Vec3 b3 = b1.cross(b2);
  Mat3 out;
  out.col(0) = b1;
  out.col(1) = b2;
  out.col(2) = b3;
  return out;
}

inline bool is_rotation(const Mat3& r, double tol = 1e-9) {
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(r.determinant() - 1.0) <= tol;
}

}  // namespace ctxmhe
