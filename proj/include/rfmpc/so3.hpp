#pragma once

// Rotation-group math used throughout the controller: hat/vee maps,
// exponential/logarithm, geodesic error functions and the vectorization
// constants that turn skew-symmetric matrix equations into 3-vector ones.

#include <Eigen/Dense>

#include <cmath>

#include "rfmpc/errors.hpp"

namespace rfmpc {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline Mat3 hat(const Vec3& v) {
  Mat3 m;
  // clang-format off
  m <<     0, -v.z(),  v.y(),
       v.z(),      0, -v.x(),
      -v.y(),  v.x(),      0;
  // clang-format on
  return m;
}

inline Vec3 vee(const Mat3& m, double tol = 1e-8) {
  if ((m + m.transpose()).cwiseAbs().maxCoeff() > tol) {
    throw NotSkewSymmetric("vee: asymmetry exceeds tolerance");
  }
  return Vec3(m(2, 1), m(0, 2), m(1, 0));
}

// vee without the symmetry check, for internal use on the antisymmetric
// part of a general matrix.
inline Vec3 vee_unchecked(const Mat3& m) {
  return Vec3(m(2, 1), m(0, 2), m(1, 0));
}

inline bool is_rotation(const Mat3& r, double tol = 1e-9) {
  return (r.transpose() * r - Mat3::Identity()).norm() <= tol &&
         std::abs(r.determinant() - 1.0) <= tol;
}

// Rodrigues formula; second-order series below 1e-8 to keep the
// sin(t)/t and (1-cos(t))/t^2 factors well conditioned.
inline Mat3 exp_so3(const Vec3& v) {
  const double t = v.norm();
  const Mat3 vh = hat(v);
  double a, b;
  if (t < 1e-8) {
    a = 1.0 - t * t / 6.0;
    b = 0.5 - t * t / 24.0;
  } else {
    a = std::sin(t) / t;
    b = (1.0 - std::cos(t)) / (t * t);
  }
  return Mat3::Identity() + a * vh + b * vh * vh;
}

// Principal logarithm, ||result|| <= pi.  Near angle pi the usual
// asin-based formula loses the axis, so it is recovered from the largest
// diagonal element of (R + I)/2 = u u^T + O(pi - t).
inline Vec3 log_so3(const Mat3& r) {
  if (!is_rotation(r, 1e-6)) {
    throw InvalidRotation("log_so3: input is not a rotation matrix");
  }
  // Quaternion extraction (Shepperd branch selection inside Eigen) is
  // accurate across the full angle range, including near pi where the
  // direct matrix formulas lose precision.
  Eigen::Quaterniond q(r);
  if (q.w() < 0) q.coeffs() = -q.coeffs();  // principal branch
  const Vec3 v = q.vec();
  const double n = v.norm();
  if (n < 1e-12) return 2.0 * v;  // q.w() ~ 1
  const double angle = 2.0 * std::atan2(n, q.w());
  return (angle / n) * v;
}

inline Vec3 rotation_error(const Mat3& r_d, const Mat3& r) {
  return log_so3(r_d.transpose() * r);
}

inline Vec3 angular_velocity_error(const Mat3& r_d, const Vec3& w_d,
                                   const Mat3& r, const Vec3& w) {
  return w - r.transpose() * r_d * w_d;
}

// Orthogonal polar factor via SVD: the closest rotation in Frobenius norm.
inline Mat3 project_to_so3(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.singularValues().minCoeff() < 1e-10) {
    throw DegenerateMatrix("project_to_so3: singular value below 1e-10");
  }
  const Mat3 uvt = svd.matrixU() * svd.matrixV().transpose();
  Vec3 diag(1.0, 1.0, uvt.determinant());
  return svd.matrixU() * diag.asDiagonal() * svd.matrixV().transpose();
}

// Constant matrix N with vec(hat(v)) = N v (column-major vec), and its
// left pseudo-inverse N* = N^T / 2.  N^T N = 2 I.
struct VecHatBasis {
  Eigen::Matrix<double, 9, 3> N;
  Eigen::Matrix<double, 3, 9> Nstar;

  VecHatBasis() {
    N.setZero();
    for (int i = 0; i < 3; ++i) {
      const Mat3 h = hat(Vec3::Unit(i));
      N.col(i) = Eigen::Map<const Eigen::Matrix<double, 9, 1>>(h.data());
    }
    Nstar = 0.5 * N.transpose();
  }

  static const VecHatBasis& instance() {
    static const VecHatBasis b;
    return b;
  }
};

inline Eigen::Matrix<double, 9, 1> vec3x3(const Mat3& m) {
  return Eigen::Map<const Eigen::Matrix<double, 9, 1>>(m.data());
}

}  // namespace rfmpc
