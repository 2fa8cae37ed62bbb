#pragma once

// SO(3) helpers shared by the head model, the condition algebra and the
// metrics: axis-angle (Rodrigues), the continuous 6D encoding (first two
// matrix columns), quaternions for interpolation, and geodesic distance.

#include <array>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace flap {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Rot6 = std::array<double, 6>;

// Rodrigues' formula. The zero vector maps to the identity.
Mat3 axis_angle_to_matrix(const Vec3& r);

// Inverse of axis_angle_to_matrix with the angle in [0, pi].
// Input is assumed orthonormal with det +1.
Vec3 matrix_to_axis_angle(const Mat3& R);

// [R(:,0); R(:,1)] as a flat 6-vector.
Rot6 rot6d_from_matrix(const Mat3& R);
Rot6 rot6d_from_axis_angle(const Vec3& r);

// Gram-Schmidt on the two columns, third column by cross product.
// Throws DegenerateInputError if either column is ~zero or they are ~parallel.
Mat3 rot6d_to_matrix(const Rot6& v);

// Unit quaternion (w, x, y, z) with w >= 0.
struct Quat {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;
};
Quat matrix_to_quat(const Mat3& R);
Mat3 quat_to_matrix(const Quat& q);
// Shortest-arc spherical interpolation; weight in [0, 1].
Quat slerp(const Quat& a, const Quat& b, double weight);

// Spherical interpolation between two axis-angle rotations.
Vec3 slerp_axis_angle(const Vec3& a, const Vec3& b, double weight);

// Angle of R_a^T R_b, in [0, pi].
double geodesic_distance(const Mat3& Ra, const Mat3& Rb);

// Rescales an axis-angle vector so its norm lies in [0, pi) (same rotation).
Vec3 canonical_axis_angle(const Vec3& r);

}  // namespace flap
