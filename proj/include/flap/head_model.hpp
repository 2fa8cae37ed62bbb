#pragma once

// Parametric head: blendshapes (identity, expression, eyelids) followed by
// linear blend skinning over a global rotation and four joints (neck, jaw,
// left eye, right eye), plus weak-perspective projection to 2D landmarks.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "flap/rotation.hpp"

namespace flap {

using Points3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
// K x 2 image-space points, row-major so data() is (x0, y0, x1, y1, ...).
using LandmarkFrame = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;
using Facet = std::array<std::uint32_t, 3>;

inline constexpr std::size_t kNumJoints = 4;      // neck, jaw, eye_l, eye_r
inline constexpr std::size_t kNumSkinSlots = 5;   // global + the four joints
inline constexpr std::size_t kNumEyelids = 2;
enum JointIndex : std::size_t { kJointNeck = 0, kJointJaw = 1, kJointEyeL = 2, kJointEyeR = 3 };

struct ModelAsset {
  Points3 template_vertices;
  // Bases are stored as (N_v*3) x D row-major: entry ((v*3 + axis) * D + k).
  std::vector<double> shape_basis;
  std::vector<double> expr_basis;
  std::vector<double> eyelid_basis;
  std::size_t n_shape = 0;
  std::size_t n_expr = 0;
  std::array<Vec3, kNumJoints> joints_rest{};
  // Parent joint of each joint; -1 means the global root.
  std::array<int, kNumJoints> parent{-1, 0, 0, 0};
  // N_v x 5 row-major: global, neck, jaw, eye_l, eye_r.
  std::vector<double> skin_weights;
  std::vector<Facet> facets;
  std::vector<std::uint32_t> landmark_idx;

  std::size_t n_vertices() const { return static_cast<std::size_t>(template_vertices.rows()); }
  std::size_t n_landmarks() const { return landmark_idx.size(); }

  // Throws DimensionError / FormatError when an invariant is broken.
  void validate() const;
};

struct HeadCoefficients {
  Eigen::VectorXd beta;
  Eigen::VectorXd psi_exp;
  Eigen::Vector2d psi_eyelids = Eigen::Vector2d::Zero();
  Vec3 theta_global = Vec3::Zero();
  Vec3 theta_neck = Vec3::Zero();
  Vec3 theta_jaw = Vec3::Zero();
  Vec3 theta_eye_l = Vec3::Zero();
  Vec3 theta_eye_r = Vec3::Zero();

  static HeadCoefficients zeros(const ModelAsset& asset);
};

struct Mesh {
  Points3 vertices;
  std::vector<Facet> facets;
};

struct Camera {
  double scale = 1.0;
  Eigen::Vector2d translation = Eigen::Vector2d::Zero();
};

// Skinning transforms (3x4, [R | t]) for the five skin slots.
using SkinTransforms = std::array<Eigen::Matrix<double, 3, 4>, kNumSkinSlots>;
SkinTransforms skin_transforms(const ModelAsset& asset, const HeadCoefficients& coeffs);

Mesh evaluate(const ModelAsset& asset, const HeadCoefficients& coeffs);

// Posed positions of a subset of vertices only; equals the matching rows of
// evaluate() but costs O(|subset|).
Points3 evaluate_vertices(const ModelAsset& asset, const HeadCoefficients& coeffs,
                          std::span<const std::uint32_t> subset);

LandmarkFrame project(const Mesh& mesh, const Camera& camera, std::span<const std::uint32_t> landmark_idx);
LandmarkFrame project_points(const Points3& points, const Camera& camera);

// Projected landmarks of the posed head.
LandmarkFrame evaluate_landmarks(const ModelAsset& asset, const HeadCoefficients& coeffs, const Camera& camera);

// Procedural stand-in for a licensed head asset: an ellipsoidal head with a
// nose bump, two eyeballs, localized blendshapes and a 68-point landmark set.
struct DeskAssetConfig {
  std::size_t n_vertices = 300;
  std::size_t n_landmarks = 68;
  std::size_t n_shape = 10;
  std::size_t n_expr = 20;
  std::uint64_t seed = 0;
};
ModelAsset make_desk_asset(const DeskAssetConfig& cfg = {});

// The camera used for synthetic renders: 100 px per model unit, centred in a
// 512 px frame.
Camera default_camera();

// Binary container ("FLAPASSET") plus a text manifest at `path + ".manifest"`.
void save_asset(const ModelAsset& asset, const std::string& path);
ModelAsset load_asset(const std::string& path);

}  // namespace flap
