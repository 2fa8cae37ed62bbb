#include "flap/rotation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "flap/error.hpp"

namespace flap {

namespace {

Mat3 skew(const Vec3& k) {
  Mat3 K;
  K << 0.0, -k.z(), k.y(),
       k.z(), 0.0, -k.x(),
       -k.y(), k.x(), 0.0;
  return K;
}

}  // namespace

Mat3 axis_angle_to_matrix(const Vec3& r) {
  const double theta = r.norm();
  if (theta < 1e-14) {
    // Second-order expansion keeps the map smooth for finite differences.
    const Mat3 K = skew(r);
    return Mat3::Identity() + K + 0.5 * K * K;
  }
  const Mat3 K = skew(r / theta);
  return Mat3::Identity() + std::sin(theta) * K + (1.0 - std::cos(theta)) * K * K;
}

Quat matrix_to_quat(const Mat3& R) {
  // Shepperd: pivot on the largest of w, x, y, z.
  Quat q;
  const double tr = R.trace();
  if (tr >= R(0, 0) && tr >= R(1, 1) && tr >= R(2, 2)) {
    const double s = std::sqrt(1.0 + tr) * 2.0;
    q.w = 0.25 * s;
    q.x = (R(2, 1) - R(1, 2)) / s;
    q.y = (R(0, 2) - R(2, 0)) / s;
    q.z = (R(1, 0) - R(0, 1)) / s;
  } else if (R(0, 0) >= R(1, 1) && R(0, 0) >= R(2, 2)) {
    const double s = std::sqrt(1.0 + R(0, 0) - R(1, 1) - R(2, 2)) * 2.0;
    q.w = (R(2, 1) - R(1, 2)) / s;
    q.x = 0.25 * s;
    q.y = (R(0, 1) + R(1, 0)) / s;
    q.z = (R(0, 2) + R(2, 0)) / s;
  } else if (R(1, 1) >= R(2, 2)) {
    const double s = std::sqrt(1.0 + R(1, 1) - R(0, 0) - R(2, 2)) * 2.0;
    q.w = (R(0, 2) - R(2, 0)) / s;
    q.x = (R(0, 1) + R(1, 0)) / s;
    q.y = 0.25 * s;
    q.z = (R(1, 2) + R(2, 1)) / s;
  } else {
    const double s = std::sqrt(1.0 + R(2, 2) - R(0, 0) - R(1, 1)) * 2.0;
    q.w = (R(1, 0) - R(0, 1)) / s;
    q.x = (R(0, 2) + R(2, 0)) / s;
    q.y = (R(1, 2) + R(2, 1)) / s;
    q.z = 0.25 * s;
  }
  const double n = std::sqrt(q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z);
  q.w /= n;
  q.x /= n;
  q.y /= n;
  q.z /= n;
  if (q.w < 0.0) {
    q.w = -q.w;
    q.x = -q.x;
    q.y = -q.y;
    q.z = -q.z;
  }
  return q;
}

Mat3 quat_to_matrix(const Quat& q) {
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  Mat3 R;
  R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return R;
}

Vec3 matrix_to_axis_angle(const Mat3& R) {
  const Quat q = matrix_to_quat(R);
  const double s = std::sqrt(q.x * q.x + q.y * q.y + q.z * q.z);
  if (s < 1e-300) return Vec3::Zero();
  const double angle = 2.0 * std::atan2(s, q.w);
  return Vec3(q.x, q.y, q.z) * (angle / s);
}

Rot6 rot6d_from_matrix(const Mat3& R) {
  return {R(0, 0), R(1, 0), R(2, 0), R(0, 1), R(1, 1), R(2, 1)};
}

Rot6 rot6d_from_axis_angle(const Vec3& r) { return rot6d_from_matrix(axis_angle_to_matrix(r)); }

Mat3 rot6d_to_matrix(const Rot6& v) {
  const Vec3 a(v[0], v[1], v[2]);
  const Vec3 b(v[3], v[4], v[5]);
  const double na = a.norm();
  if (!(na > 1e-9)) throw DegenerateInputError("6D rotation: first column has zero length");
  const Vec3 c0 = a / na;
  const Vec3 bp = b - c0.dot(b) * c0;
  const double nb = bp.norm();
  if (!(nb > 1e-9 * std::max(1.0, b.norm()))) {
    throw DegenerateInputError("6D rotation: columns are parallel");
  }
  const Vec3 c1 = bp / nb;
  Mat3 R;
  R.col(0) = c0;
  R.col(1) = c1;
  R.col(2) = c0.cross(c1);
  return R;
}

Quat slerp(const Quat& a, const Quat& b_in, double weight) {
  Quat b = b_in;
  double cosang = a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
  if (cosang < 0.0) {
    cosang = -cosang;
    b.w = -b.w;
    b.x = -b.x;
    b.y = -b.y;
    b.z = -b.z;
  }
  double wa, wb;
  if (cosang > 1.0 - 1e-12) {
    wa = 1.0 - weight;
    wb = weight;
  } else {
    const double ang = std::acos(std::clamp(cosang, -1.0, 1.0));
    const double s = std::sin(ang);
    wa = std::sin((1.0 - weight) * ang) / s;
    wb = std::sin(weight * ang) / s;
  }
  Quat q{wa * a.w + wb * b.w, wa * a.x + wb * b.x, wa * a.y + wb * b.y, wa * a.z + wb * b.z};
  const double n = std::sqrt(q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z);
  q.w /= n;
  q.x /= n;
  q.y /= n;
  q.z /= n;
  return q;
}

Vec3 slerp_axis_angle(const Vec3& a, const Vec3& b, double weight) {
  const Quat q = slerp(matrix_to_quat(axis_angle_to_matrix(a)), matrix_to_quat(axis_angle_to_matrix(b)), weight);
  return matrix_to_axis_angle(quat_to_matrix(q));
}

double geodesic_distance(const Mat3& Ra, const Mat3& Rb) {
  const Mat3 D = Ra.transpose() * Rb;
  // atan2 form is accurate for small angles where acos loses precision.
  const Vec3 v(D(2, 1) - D(1, 2), D(0, 2) - D(2, 0), D(1, 0) - D(0, 1));
  return std::atan2(0.5 * v.norm(), 0.5 * (D.trace() - 1.0));
}

Vec3 canonical_axis_angle(const Vec3& r) { return matrix_to_axis_angle(axis_angle_to_matrix(r)); }

}  // namespace flap
