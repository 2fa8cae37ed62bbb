#include <doctest.h>

#include <numbers>

#include "flap/error.hpp"
#include "flap/rotation.hpp"
#include "test_util.hpp"

using namespace flap;

TEST_CASE("Rodrigues agrees with Eigen AngleAxis and quaternions") {
  std::mt19937_64 rng(10);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Vec3 r = test::random_axis_angle(rng, std::numbers::pi - 1e-6);
    const double angle = r.norm();
    const Mat3 R = axis_angle_to_matrix(r);
    const Mat3 E = Eigen::AngleAxisd(angle, r / angle).toRotationMatrix();
    const Eigen::Quaterniond q(Eigen::AngleAxisd(angle, r / angle));
    worst = std::max(worst, (R - E).cwiseAbs().maxCoeff());
    worst = std::max(worst, (R - q.toRotationMatrix()).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-10);
  CHECK(axis_angle_to_matrix(Vec3::Zero()) == Mat3::Identity());
  CHECK((axis_angle_to_matrix(Vec3(1e-12, 0, 0)) - Mat3::Identity()).norm() < 1e-11);
}

TEST_CASE("axis-angle round trip") {
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Vec3 r = test::random_axis_angle(rng, std::numbers::pi - 1e-3);
    worst = std::max(worst, (matrix_to_axis_angle(axis_angle_to_matrix(r)) - r).norm());
  }
  CHECK(worst < 1e-10);
  // Angle pi: either sign of the axis is correct.
  const Vec3 half(0.0, std::numbers::pi, 0.0);
  CHECK((axis_angle_to_matrix(matrix_to_axis_angle(axis_angle_to_matrix(half))) - axis_angle_to_matrix(half)).norm() <
        1e-10);
}

TEST_CASE("6D round trips") {
  std::mt19937_64 rng(12);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Mat3 R = axis_angle_to_matrix(test::random_axis_angle(rng, std::numbers::pi));
    worst = std::max(worst, (rot6d_to_matrix(rot6d_from_matrix(R)) - R).cwiseAbs().maxCoeff());
    // Gram-Schmidt absorbs scaling and skew of the second column.
    Rot6 v = rot6d_from_matrix(R);
    for (int k = 0; k < 3; ++k) {
      v[k] *= 2.5;
      v[3 + k] = 0.7 * v[3 + k] + 0.2 * v[k];
    }
    worst = std::max(worst, (rot6d_to_matrix(v) - R).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-10);
  CHECK_THROWS_AS(rot6d_to_matrix({1, 0, 0, 2, 0, 0}), DegenerateInputError);
  CHECK_THROWS_AS(rot6d_to_matrix({0, 0, 0, 0, 1, 0}), DegenerateInputError);
}

TEST_CASE("quaternion conversion and slerp") {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 200; ++i) {
    const Vec3 a = test::random_axis_angle(rng, 2.0);
    const Vec3 b = test::random_axis_angle(rng, 2.0);
    const Mat3 R = axis_angle_to_matrix(a);
    const Quat q = matrix_to_quat(R);
    CHECK(q.w >= 0.0);
    CHECK((quat_to_matrix(q) - R).norm() < 1e-12);
    CHECK((axis_angle_to_matrix(slerp_axis_angle(a, b, 0.0)) - R).norm() < 1e-10);
    CHECK((axis_angle_to_matrix(slerp_axis_angle(a, b, 1.0)) - axis_angle_to_matrix(b)).norm() < 1e-10);
    // Midpoint is equidistant and halves the geodesic.
    const Mat3 M = axis_angle_to_matrix(slerp_axis_angle(a, b, 0.5));
    const double d = geodesic_distance(R, axis_angle_to_matrix(b));
    CHECK(geodesic_distance(R, M) == doctest::Approx(d / 2).epsilon(1e-8));
    CHECK(geodesic_distance(M, axis_angle_to_matrix(b)) == doctest::Approx(d / 2).epsilon(1e-8));
  }
}

TEST_CASE("geodesic distance") {
  std::mt19937_64 rng(14);
  for (int i = 0; i < 200; ++i) {
    const Vec3 r = test::random_axis_angle(rng, std::numbers::pi - 1e-3);
    CHECK(geodesic_distance(Mat3::Identity(), axis_angle_to_matrix(r)) == doctest::Approx(r.norm()).epsilon(1e-9));
  }
  const Mat3 R = axis_angle_to_matrix(Vec3(0.3, -0.2, 0.1));
  CHECK(geodesic_distance(R, R) < 1e-7);
  CHECK(geodesic_distance(Mat3::Identity(), axis_angle_to_matrix(Vec3(0, 0, std::numbers::pi))) ==
        doctest::Approx(std::numbers::pi));
}

TEST_CASE("canonical axis-angle keeps the rotation") {
  const Vec3 r(0.0, 0.0, 1.5 * std::numbers::pi);
  const Vec3 c = canonical_axis_angle(r);
  CHECK(c.norm() < std::numbers::pi);
  CHECK((axis_angle_to_matrix(c) - axis_angle_to_matrix(r)).norm() < 1e-12);
}
