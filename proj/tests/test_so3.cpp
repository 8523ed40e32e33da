#include <doctest.h>

#include <Eigen/Dense>

#include <random>

#include "rfmpc/so3.hpp"
#include "test_util.hpp"

using namespace rfmpc;

TEST_CASE("hat basics") {
  CHECK(hat(Vec3::Zero()).isZero(0.0));
  CHECK((hat(Vec3(1, 0, 0)) * Vec3(0, 1, 0) - Vec3(0, 0, 1)).norm() ==
        doctest::Approx(0.0));
  // hat(a) b = a x b for random pairs
  std::mt19937 rng(7);
  for (int i = 0; i < 20; ++i) {
    const Vec3 a = test::random_vec3(rng, 2.0);
    const Vec3 b = test::random_vec3(rng, 2.0);
    CHECK((hat(a) * b - a.cross(b)).norm() < 1e-15);
    CHECK((hat(a) + hat(a).transpose()).norm() == 0.0);
  }
}

TEST_CASE("vee inverts hat") {
  CHECK(vee(Mat3::Zero()).isZero(0.0));
  const Vec3 v(0.3, -1.2, 2.5);
  CHECK((vee(hat(v)) - v).norm() == 0.0);
  std::mt19937 rng(11);
  for (int i = 0; i < 100; ++i) {
    const Vec3 a = test::random_vec3(rng, 5.0);
    CHECK((vee(hat(a)) - a).norm() == 0.0);
    CHECK((hat(vee(hat(a))) - hat(a)).norm() == 0.0);
  }
}

TEST_CASE("vee rejects symmetric input") {
  Mat3 m = Mat3::Zero();
  m(0, 1) = m(1, 0) = 0.5;
  CHECK_THROWS_AS(vee(m), NotSkewSymmetric);
}

TEST_CASE("exp_so3 basics") {
  CHECK((exp_so3(Vec3::Zero()) - Mat3::Identity()).norm() == 0.0);
  // quarter turn about z maps x to y
  const Mat3 r = exp_so3(Vec3(0, 0, M_PI / 2));
  CHECK((r * Vec3(1, 0, 0) - Vec3(0, 1, 0)).norm() < 1e-15);
  std::mt19937 rng(3);
  for (int i = 0; i < 200; ++i) {
    const Mat3 q = exp_so3(test::random_vec3(rng, 4.0));
    CHECK((q.transpose() * q - Mat3::Identity()).norm() < 1e-12);
    CHECK(q.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("exp/log round trip") {
  CHECK(log_so3(Mat3::Identity()).isZero(0.0));
  CHECK((log_so3(exp_so3(Vec3(0.1, 0, 0))) - Vec3(0.1, 0, 0)).norm() < 1e-12);
  std::mt19937 rng(5);
  for (int i = 0; i < 500; ++i) {
    Vec3 v = test::random_vec3(rng);
    if (v.norm() < 1e-9) continue;
    std::uniform_real_distribution<double> mag(0.0, 3.0);
    v = mag(rng) * v.normalized();
    CHECK((log_so3(exp_so3(v)) - v).norm() < 1e-7);
  }
  // very small angles go through the series branch
  const Vec3 tiny(1e-10, -2e-10, 3e-11);
  CHECK((log_so3(exp_so3(tiny)) - tiny).norm() < 1e-15);
}

TEST_CASE("log_so3 angle-pi branch") {
  // diag(1,-1,-1) is a pi rotation about x
  Mat3 r = Vec3(1, -1, -1).asDiagonal();
  Vec3 v = log_so3(r);
  CHECK(v.norm() == doctest::Approx(M_PI).epsilon(1e-9));
  CHECK(std::abs(v.x()) == doctest::Approx(M_PI).epsilon(1e-9));
  // Rodrigues oracle: exp of the result reproduces the input
  CHECK((exp_so3(v) - r).norm() < 1e-7);

  // rotations close to angle pi about random axes
  std::mt19937 rng(17);
  for (int i = 0; i < 100; ++i) {
    Vec3 axis = test::random_vec3(rng).normalized();
    const double ang = M_PI - 1e-6;
    const Mat3 q = exp_so3(ang * axis);
    const Vec3 l = log_so3(q);
    CHECK((exp_so3(l) - q).norm() < 1e-6);
    CHECK(l.norm() <= M_PI + 1e-12);
  }
}

TEST_CASE("log_so3 rejects invalid rotations") {
  Mat3 m = 1.5 * Mat3::Identity();
  CHECK_THROWS_AS(log_so3(m), InvalidRotation);
}

TEST_CASE("rotation_error") {
  std::mt19937 rng(23);
  const Mat3 r = test::random_rotation(rng);
  CHECK(rotation_error(r, r).isZero(1e-12));
  CHECK((rotation_error(Mat3::Identity(), exp_so3(Vec3(0, 0.2, 0))) -
         Vec3(0, 0.2, 0))
            .norm() < 1e-12);
  // geodesic angle matches the quaternion-dot oracle
  for (int i = 0; i < 100; ++i) {
    const Mat3 a = test::random_rotation(rng);
    const Mat3 b = test::random_rotation(rng);
    const double geo = rotation_error(a, b).norm();
    const Eigen::Quaterniond qa(a), qb(b);
    const double dot = std::min(1.0, std::abs(qa.dot(qb)));
    const double oracle = 2.0 * std::acos(dot);
    CHECK(geo == doctest::Approx(oracle).epsilon(1e-6));
  }
}

TEST_CASE("angular_velocity_error") {
  CHECK(angular_velocity_error(Mat3::Identity(), Vec3(0, 0, 1),
                               Mat3::Identity(), Vec3(0, 0, 1))
            .isZero(0.0));
  std::mt19937 rng(29);
  const Mat3 r = test::random_rotation(rng);
  const Vec3 w = test::random_vec3(rng, 3.0);
  CHECK((angular_velocity_error(Mat3::Identity(), Vec3::Zero(), r, w) - w)
            .norm() == 0.0);
  for (int i = 0; i < 50; ++i) {
    const Mat3 rd = test::random_rotation(rng);
    const Mat3 rr = test::random_rotation(rng);
    const Vec3 wd = test::random_vec3(rng, 2.0);
    const Vec3 ww = test::random_vec3(rng, 2.0);
    const Vec3 direct = ww - rr.transpose() * rd * wd;
    CHECK((angular_velocity_error(rd, wd, rr, ww) - direct).norm() < 1e-14);
  }
}

TEST_CASE("project_to_so3") {
  std::mt19937 rng(31);
  const Mat3 r = test::random_rotation(rng);
  CHECK((project_to_so3(r) - r).norm() < 1e-12);
  CHECK((project_to_so3(1.5 * r) - r).norm() < 1e-12);

  // sampling oracle: projection is Frobenius-closest among random rotations
  std::normal_distribution<double> d(0.0, 1.0);
  Mat3 m;
  do {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m(i, j) = d(rng);
  } while (m.determinant() <= 0.1);
  const Mat3 proj = project_to_so3(m);
  const double best = (proj - m).norm();
  for (int i = 0; i < 1000; ++i) {
    const Mat3 q = test::random_rotation(rng);
    CHECK(best <= (q - m).norm() + 1e-12);
  }
  CHECK(is_rotation(proj, 1e-12));

  CHECK_THROWS_AS(project_to_so3(Mat3::Zero()), DegenerateMatrix);
}

TEST_CASE("vectorization constants") {
  const auto& basis = VecHatBasis::instance();
  // N' N = 2 I, N* N = I
  CHECK((basis.N.transpose() * basis.N - 2.0 * Mat3::Identity()).norm() ==
        0.0);
  CHECK((basis.Nstar * basis.N - Mat3::Identity()).norm() == 0.0);
  // vec(hat(v)) = N v for basis vectors and random v
  for (int i = 0; i < 3; ++i) {
    const Vec3 e = Vec3::Unit(i);
    CHECK((vec3x3(hat(e)) - basis.N * e).norm() == 0.0);
  }
  std::mt19937 rng(37);
  for (int i = 0; i < 20; ++i) {
    const Vec3 v = test::random_vec3(rng, 10.0);
    CHECK((vec3x3(hat(v)) - basis.N * v).norm() == 0.0);
  }
}
