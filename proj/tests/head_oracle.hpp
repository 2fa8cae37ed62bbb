#pragma once

// Independent restatement of the head model for oracle comparisons.

#include "flap/head_model.hpp"

namespace flap::test {

using Mat4 = Eigen::Matrix4d;

inline Mat4 rigid(const Mat3& R, const Vec3& t) {
  Mat4 M = Mat4::Identity();
  M.topLeftCorner<3, 3>() = R;
  M.topRightCorner<3, 1>() = t;
  return M;
}

inline Mat3 eigen_rot(const Vec3& r) {
  const double a = r.norm();
  return a == 0.0 ? Mat3::Identity() : Eigen::AngleAxisd(a, r / a).toRotationMatrix();
}

// Per-vertex brute force: plain loops for the blendshapes, a homogeneous
// kinematic chain walked from the root for every joint.
inline Points3 brute_force(const ModelAsset& a, const HeadCoefficients& c) {
  const std::array<Vec3, 4> theta{c.theta_neck, c.theta_jaw, c.theta_eye_l, c.theta_eye_r};
  std::array<Mat4, 5> world;
  world[0] = rigid(eigen_rot(c.theta_global), Vec3::Zero());
  for (std::size_t j = 0; j < 4; ++j) {
    std::vector<std::size_t> chain;
    for (int k = static_cast<int>(j); k >= 0; k = a.parent[static_cast<std::size_t>(k)]) chain.push_back(k);
    Mat4 G = world[0];
    Vec3 parent_rest = Vec3::Zero();
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
      G = G * rigid(eigen_rot(theta[*it]), a.joints_rest[*it] - parent_rest);
      parent_rest = a.joints_rest[*it];
    }
    world[j + 1] = G;
  }
  std::array<Mat4, 5> skin;
  skin[0] = world[0];
  for (std::size_t j = 0; j < 4; ++j) skin[j + 1] = world[j + 1] * rigid(Mat3::Identity(), -a.joints_rest[j]);

  Points3 out(static_cast<Eigen::Index>(a.n_vertices()), 3);
  for (std::size_t v = 0; v < a.n_vertices(); ++v) {
    Eigen::Vector4d p(0, 0, 0, 1);
    for (std::size_t ax = 0; ax < 3; ++ax) {
      const std::size_t row = v * 3 + ax;
      double s = a.template_vertices(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(ax));
      for (std::size_t k = 0; k < a.n_shape; ++k) s += a.shape_basis[row * a.n_shape + k] * c.beta[static_cast<Eigen::Index>(k)];
      for (std::size_t k = 0; k < a.n_expr; ++k) s += a.expr_basis[row * a.n_expr + k] * c.psi_exp[static_cast<Eigen::Index>(k)];
      for (std::size_t k = 0; k < 2; ++k) s += a.eyelid_basis[row * 2 + k] * c.psi_eyelids[static_cast<Eigen::Index>(k)];
      p[static_cast<Eigen::Index>(ax)] = s;
    }
    Eigen::Vector4d q = Eigen::Vector4d::Zero();
    for (std::size_t s = 0; s < 5; ++s) q += a.skin_weights[v * 5 + s] * (skin[s] * p);
    out.row(static_cast<Eigen::Index>(v)) = q.head<3>().transpose();
  }
  return out;
}

}  // namespace flap::test
