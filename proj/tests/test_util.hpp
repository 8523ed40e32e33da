#pragma once

// Shared helpers for the test suites: deterministic random rotations,
// vectors and SPD matrices.

#include <Eigen/Dense>

#include <random>

#include "rfmpc/so3.hpp"

namespace rfmpc::test {

inline Vec3 random_vec3(std::mt19937& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  return Vec3(d(rng), d(rng), d(rng));
}

inline Mat3 random_rotation(std::mt19937& rng, double max_angle = M_PI - 0.1) {
  std::uniform_real_distribution<double> ang(0.0, max_angle);
  Vec3 axis = random_vec3(rng);
  while (axis.norm() < 1e-6) axis = random_vec3(rng);
  return exp_so3(ang(rng) * axis.normalized());
}

inline Eigen::MatrixXd random_spd(std::mt19937& rng, int n,
                                  double min_eig = 0.1) {
  std::normal_distribution<double> d(0.0, 1.0);
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = d(rng);
  return m * m.transpose() + min_eig * Eigen::MatrixXd::Identity(n, n);
}

}  // namespace rfmpc::test
