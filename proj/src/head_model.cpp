#include "flap/head_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include <Eigen/QR>

#include "flap/error.hpp"
#include "flap/kernels.hpp"

namespace flap {

namespace {

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw FormatError(std::string("asset: non-finite value in ") + what);
  }
}

}  // namespace

void ModelAsset::validate() const {
  const std::size_t nv = n_vertices();
  if (nv == 0) throw DimensionError("asset: no vertices");
  if (shape_basis.size() != nv * 3 * n_shape) throw DimensionError("asset: shape_basis size mismatch");
  if (expr_basis.size() != nv * 3 * n_expr) throw DimensionError("asset: expr_basis size mismatch");
  if (eyelid_basis.size() != nv * 3 * kNumEyelids) throw DimensionError("asset: eyelid_basis size mismatch");
  if (skin_weights.size() != nv * kNumSkinSlots) throw DimensionError("asset: skin_weights size mismatch");
  check_finite({template_vertices.data(), nv * 3}, "template");
  check_finite(shape_basis, "shape_basis");
  check_finite(expr_basis, "expr_basis");
  check_finite(eyelid_basis, "eyelid_basis");
  for (const auto& j : joints_rest) check_finite({j.data(), 3}, "joints_rest");
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    if (parent[j] < -1 || parent[j] >= static_cast<int>(j)) {
      throw FormatError("asset: parent indices must point to an earlier joint or -1");
    }
  }
  for (std::size_t v = 0; v < nv; ++v) {
    double sum = 0.0;
    for (std::size_t s = 0; s < kNumSkinSlots; ++s) {
      const double w = skin_weights[v * kNumSkinSlots + s];
      if (!(w >= 0.0)) throw FormatError("asset: negative or non-finite skin weight");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw FormatError("asset: skin weights do not sum to 1");
  }
  for (const auto& f : facets) {
    for (auto i : f) {
      if (i >= nv) throw FormatError("asset: facet index out of range");
    }
  }
  for (auto i : landmark_idx) {
    if (i >= nv) throw FormatError("asset: landmark index out of range");
  }
}

HeadCoefficients HeadCoefficients::zeros(const ModelAsset& asset) {
  HeadCoefficients c;
  c.beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(asset.n_shape));
  c.psi_exp = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(asset.n_expr));
  return c;
}

SkinTransforms skin_transforms(const ModelAsset& asset, const HeadCoefficients& coeffs) {
  // Global transforms G_s of each slot, then A_s = G_s * [I | -rest_s].
  const std::array<const Vec3*, kNumJoints> theta{&coeffs.theta_neck, &coeffs.theta_jaw, &coeffs.theta_eye_l,
                                                  &coeffs.theta_eye_r};
  std::array<Mat3, kNumSkinSlots> R;
  std::array<Vec3, kNumSkinSlots> t;
  std::array<Vec3, kNumSkinSlots> rest;
  R[0] = axis_angle_to_matrix(coeffs.theta_global);
  t[0] = Vec3::Zero();
  rest[0] = Vec3::Zero();
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    const std::size_t s = j + 1;
    const std::size_t p = static_cast<std::size_t>(asset.parent[j] + 1);
    rest[s] = asset.joints_rest[j];
    R[s] = R[p] * axis_angle_to_matrix(*theta[j]);
    t[s] = R[p] * (rest[s] - rest[p]) + t[p];
  }
  SkinTransforms A;
  for (std::size_t s = 0; s < kNumSkinSlots; ++s) {
    A[s].leftCols<3>() = R[s];
    A[s].col(3) = t[s] - R[s] * rest[s];
  }
  return A;
}

namespace {

void check_coeff_dims(const ModelAsset& asset, const HeadCoefficients& c) {
  if (static_cast<std::size_t>(c.beta.size()) != asset.n_shape) {
    throw DimensionError("evaluate: beta has " + std::to_string(c.beta.size()) + " entries, asset expects " +
                         std::to_string(asset.n_shape));
  }
  if (static_cast<std::size_t>(c.psi_exp.size()) != asset.n_expr) {
    throw DimensionError("evaluate: psi_exp has " + std::to_string(c.psi_exp.size()) + " entries, asset expects " +
                         std::to_string(asset.n_expr));
  }
}

// Shaped (pre-skinning) position of one vertex.
Vec3 shaped_vertex(const ModelAsset& asset, const HeadCoefficients& c, std::size_t v) {
  const auto& k = kernels::active();
  const double lids[2] = {c.psi_eyelids[0], c.psi_eyelids[1]};
  Vec3 p = asset.template_vertices.row(static_cast<Eigen::Index>(v)).transpose();
  for (std::size_t a = 0; a < 3; ++a) {
    const std::size_t row = v * 3 + a;
    p[static_cast<Eigen::Index>(a)] +=
        k.dot(asset.shape_basis.data() + row * asset.n_shape, c.beta.data(), asset.n_shape) +
        k.dot(asset.expr_basis.data() + row * asset.n_expr, c.psi_exp.data(), asset.n_expr) +
        k.dot(asset.eyelid_basis.data() + row * kNumEyelids, lids, kNumEyelids);
  }
  return p;
}

Vec3 skin_vertex(const ModelAsset& asset, const SkinTransforms& A, std::size_t v, const Vec3& p) {
  Eigen::Matrix<double, 3, 4> M = Eigen::Matrix<double, 3, 4>::Zero();
  const double* w = asset.skin_weights.data() + v * kNumSkinSlots;
  for (std::size_t s = 0; s < kNumSkinSlots; ++s) {
    if (w[s] != 0.0) M += w[s] * A[s];
  }
  return M.leftCols<3>() * p + M.col(3);
}

}  // namespace

Mesh evaluate(const ModelAsset& asset, const HeadCoefficients& coeffs) {
  check_coeff_dims(asset, coeffs);
  const std::size_t nv = asset.n_vertices();
  const auto& k = kernels::active();

  // Blendshapes over all vertices at once: one gemv per basis.
  Points3 shaped = asset.template_vertices;
  double* out = shaped.data();
  k.gemv_acc(asset.shape_basis.data(), nv * 3, asset.n_shape, coeffs.beta.data(), out);
  k.gemv_acc(asset.expr_basis.data(), nv * 3, asset.n_expr, coeffs.psi_exp.data(), out);
  const double lids[2] = {coeffs.psi_eyelids[0], coeffs.psi_eyelids[1]};
  k.gemv_acc(asset.eyelid_basis.data(), nv * 3, kNumEyelids, lids, out);

  const SkinTransforms A = skin_transforms(asset, coeffs);
  Mesh mesh;
  mesh.vertices.resize(static_cast<Eigen::Index>(nv), 3);
  for (std::size_t v = 0; v < nv; ++v) {
    const Vec3 p = shaped.row(static_cast<Eigen::Index>(v)).transpose();
    mesh.vertices.row(static_cast<Eigen::Index>(v)) = skin_vertex(asset, A, v, p).transpose();
  }
  mesh.facets = asset.facets;
  return mesh;
}

Points3 evaluate_vertices(const ModelAsset& asset, const HeadCoefficients& coeffs,
                          std::span<const std::uint32_t> subset) {
  check_coeff_dims(asset, coeffs);
  const SkinTransforms A = skin_transforms(asset, coeffs);
  Points3 out(static_cast<Eigen::Index>(subset.size()), 3);
  for (std::size_t i = 0; i < subset.size(); ++i) {
    const std::size_t v = subset[i];
    if (v >= asset.n_vertices()) throw DimensionError("evaluate_vertices: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = skin_vertex(asset, A, v, shaped_vertex(asset, coeffs, v)).transpose();
  }
  return out;
}

LandmarkFrame project_points(const Points3& points, const Camera& camera) {
  LandmarkFrame out(points.rows(), 2);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    out(i, 0) = camera.scale * points(i, 0) + camera.translation.x();
    out(i, 1) = camera.scale * points(i, 1) + camera.translation.y();
  }
  return out;
}

LandmarkFrame project(const Mesh& mesh, const Camera& camera, std::span<const std::uint32_t> landmark_idx) {
  LandmarkFrame out(static_cast<Eigen::Index>(landmark_idx.size()), 2);
  for (std::size_t i = 0; i < landmark_idx.size(); ++i) {
    const auto v = static_cast<Eigen::Index>(landmark_idx[i]);
    if (v >= mesh.vertices.rows()) throw DimensionError("project: landmark index out of range");
    out(static_cast<Eigen::Index>(i), 0) = camera.scale * mesh.vertices(v, 0) + camera.translation.x();
    out(static_cast<Eigen::Index>(i), 1) = camera.scale * mesh.vertices(v, 1) + camera.translation.y();
  }
  return out;
}

LandmarkFrame evaluate_landmarks(const ModelAsset& asset, const HeadCoefficients& coeffs, const Camera& camera) {
  return project_points(evaluate_vertices(asset, coeffs, asset.landmark_idx), camera);
}

Camera default_camera() {
  Camera c;
  c.scale = 100.0;
  c.translation = Eigen::Vector2d(256.0, 256.0);
  return c;
}

// ---------------------------------------------------------------------------
// Procedural desk asset.

namespace {

constexpr std::size_t kEyeVerts = 12;

// Fibonacci lattice on the unit sphere.
std::vector<Vec3> fibonacci_sphere(std::size_t n, bool y_up) {
  std::vector<Vec3> pts(n);
  const double golden = std::numbers::pi * (1.0 + std::sqrt(5.0));
  for (std::size_t i = 0; i < n; ++i) {
    const double u = static_cast<double>(i) + 0.5;
    const double phi = std::acos(1.0 - 2.0 * u / static_cast<double>(n));
    const double th = golden * u;
    if (y_up) {
      pts[i] = Vec3(std::cos(th) * std::sin(phi), std::cos(phi), std::sin(th) * std::sin(phi));
    } else {
      pts[i] = Vec3(std::cos(th) * std::sin(phi), std::sin(th) * std::sin(phi), std::cos(phi));
    }
  }
  return pts;
}

// Convex-hull triangulation of points on a sphere. Candidate triangles come
// from each point's nearest neighbours; a triangle is kept when every other
// point lies behind its plane.
std::vector<Facet> sphere_hull(const std::vector<Vec3>& pts, std::uint32_t offset) {
  const std::size_t n = pts.size();
  const std::size_t m = std::min<std::size_t>(n - 1, 10);
  std::set<std::array<std::uint32_t, 3>> seen;
  std::vector<Facet> out;
  std::vector<std::pair<double, std::uint32_t>> dist(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < n; ++j) dist[j] = {(pts[j] - pts[i]).squaredNorm(), j};
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(m + 1), dist.end());
    for (std::size_t a = 1; a <= m; ++a) {
      for (std::size_t b = a + 1; b <= m; ++b) {
        std::array<std::uint32_t, 3> key{i, dist[a].second, dist[b].second};
        std::sort(key.begin(), key.end());
        if (seen.count(key)) continue;
        seen.insert(key);
        const Vec3& p0 = pts[key[0]];
        Vec3 nrm = (pts[key[1]] - p0).cross(pts[key[2]] - p0);
        const double len = nrm.norm();
        if (len < 1e-12) continue;
        bool flip = nrm.dot(p0) < 0.0;
        if (flip) nrm = -nrm;
        bool hull = true;
        for (std::size_t q = 0; q < n && hull; ++q) {
          if (q == key[0] || q == key[1] || q == key[2]) continue;
          if (nrm.dot(pts[q] - p0) > 1e-12 * len) hull = false;
        }
        if (!hull) continue;
        Facet f{key[0] + offset, key[1] + offset, key[2] + offset};
        if (flip) std::swap(f[1], f[2]);
        out.push_back(f);
      }
    }
  }
  if (out.size() != 2 * n - 4) throw Error("desk asset: sphere triangulation is degenerate");
  return out;
}

// Removes from every basis column its component along rigid motions of the
// template (translations, infinitesimal rotations, uniform scale) and along
// the two image-plane shears (z, 0, 0) and (0, z, 0) that mimic small
// out-of-plane rotations under weak perspective.
void project_out_rigid(const Points3& V, Eigen::MatrixXd& B) {
  const Eigen::Index n = V.rows();
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(3 * n, 9);
  for (Eigen::Index v = 0; v < n; ++v) {
    const Vec3 p = V.row(v).transpose();
    for (int a = 0; a < 3; ++a) {
      G(3 * v + a, a) = 1.0;
      Vec3 e = Vec3::Zero();
      e[a] = 1.0;
      const Vec3 r = e.cross(p);
      for (int c = 0; c < 3; ++c) G(3 * v + c, 3 + a) = r[c];
      G(3 * v + a, 6) = p[a];
    }
    G(3 * v + 0, 7) = p.z();
    G(3 * v + 1, 8) = p.z();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
  const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(3 * n, 9);
  B -= Q * (Q.transpose() * B);
}

// Localized displacement fields: a Gaussian bump around a random masked
// vertex, pushing along a random direction, scaled to the given rms.
Eigen::MatrixXd bump_basis(const Points3& V, std::size_t n_cols, double amp, const std::vector<double>& mask,
                           double radius, std::mt19937_64& rng) {
  const Eigen::Index nv = V.rows();
  std::vector<std::size_t> support;
  for (std::size_t v = 0; v < mask.size(); ++v) {
    if (mask[v] > 0.5) support.push_back(v);
  }
  if (support.empty()) throw ConfigError("desk asset: empty basis support");
  std::uniform_int_distribution<std::size_t> pick(0, support.size() - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(3 * nv, static_cast<Eigen::Index>(n_cols));
  for (std::size_t c = 0; c < n_cols; ++c) {
    const Vec3 ctr = V.row(static_cast<Eigen::Index>(support[pick(rng)])).transpose();
    Vec3 d;
    for (int a = 0; a < 3; ++a) d[a] = normal(rng);
    double ss = 0.0;
    for (Eigen::Index v = 0; v < nv; ++v) {
      const double w = std::exp(-(V.row(v).transpose() - ctr).squaredNorm() / (2.0 * radius * radius)) *
                       mask[static_cast<std::size_t>(v)];
      for (int a = 0; a < 3; ++a) {
        B(3 * v + a, static_cast<Eigen::Index>(c)) = w * d[a];
        ss += w * w * d[a] * d[a];
      }
    }
    const double rms = std::sqrt(ss / static_cast<double>(3 * nv));
    B.col(static_cast<Eigen::Index>(c)) *= amp / rms;
  }
  project_out_rigid(V, B);
  return B;
}

std::vector<double> to_row_major(const Eigen::MatrixXd& B) {
  std::vector<double> out(static_cast<std::size_t>(B.size()));
  for (Eigen::Index r = 0; r < B.rows(); ++r) {
    for (Eigen::Index c = 0; c < B.cols(); ++c) out[static_cast<std::size_t>(r * B.cols() + c)] = B(r, c);
  }
  return out;
}

}  // namespace

ModelAsset make_desk_asset(const DeskAssetConfig& cfg) {
  constexpr std::size_t kContour = 17;
  constexpr std::size_t kEyeLandmarks = 3;
  if (cfg.n_vertices < 2 * kEyeVerts + 64) throw ConfigError("desk asset: n_vertices too small");
  if (cfg.n_landmarks < kContour + 2 * kEyeLandmarks) throw ConfigError("desk asset: n_landmarks too small");
  if (cfg.n_shape == 0 || cfg.n_expr == 0) throw ConfigError("desk asset: basis sizes must be positive");

  std::mt19937_64 rng(cfg.seed);
  const std::size_t nv = cfg.n_vertices;
  const std::size_t n_head = nv - 2 * kEyeVerts;

  ModelAsset A;
  A.n_shape = cfg.n_shape;
  A.n_expr = cfg.n_expr;
  A.joints_rest = {Vec3(0.0, -0.6, 0.0), Vec3(0.0, -0.15, 0.1), Vec3(0.3, 0.28, 0.62), Vec3(-0.3, 0.28, 0.62)};
  A.parent = {-1, 0, 0, 0};

  const auto head_unit = fibonacci_sphere(n_head, true);
  const auto eye_unit = fibonacci_sphere(kEyeVerts, false);
  A.template_vertices.resize(static_cast<Eigen::Index>(nv), 3);
  std::vector<double> front(n_head);
  for (std::size_t v = 0; v < n_head; ++v) {
    Vec3 p = head_unit[v].cwiseProduct(Vec3(0.75, 1.0, 0.85));
    front[v] = std::clamp(p.z() / 0.85, 0.0, 1.0);
    if (p.z() > 0.0) p.z() += 0.25 * std::exp(-(p.x() * p.x() + (p.y() + 0.05) * (p.y() + 0.05)) / 0.03);
    A.template_vertices.row(static_cast<Eigen::Index>(v)) = p.transpose();
  }
  for (std::size_t e = 0; e < 2; ++e) {
    for (std::size_t i = 0; i < kEyeVerts; ++i) {
      const Vec3 p = A.joints_rest[kJointEyeL + e] + 0.12 * eye_unit[i];
      A.template_vertices.row(static_cast<Eigen::Index>(n_head + e * kEyeVerts + i)) = p.transpose();
    }
  }
  const auto& V = A.template_vertices;

  A.facets = sphere_hull(head_unit, 0);
  for (std::uint32_t e = 0; e < 2; ++e) {
    auto eye = sphere_hull(eye_unit, static_cast<std::uint32_t>(n_head + e * kEyeVerts));
    A.facets.insert(A.facets.end(), eye.begin(), eye.end());
  }

  A.skin_weights.assign(nv * kNumSkinSlots, 0.0);
  for (std::size_t v = 0; v < n_head; ++v) {
    const double y = V(static_cast<Eigen::Index>(v), 1);
    const double jaw =
        std::clamp((-0.1 - y) / 0.35, 0.0, 1.0) * std::sqrt(front[v]) * (y > -0.85 ? 1.0 : 0.0);
    const double neck = std::clamp((-0.6 - y) / 0.3, 0.0, 1.0);
    double* w = A.skin_weights.data() + v * kNumSkinSlots;
    w[2] = jaw * (1.0 - neck);
    w[1] = neck;
    w[0] = 1.0 - w[1] - w[2];
  }
  for (std::size_t e = 0; e < 2; ++e) {
    for (std::size_t i = 0; i < kEyeVerts; ++i) {
      A.skin_weights[(n_head + e * kEyeVerts + i) * kNumSkinSlots + 3 + e] = 1.0;
    }
  }

  std::vector<double> head_mask(nv, 0.0), face_mask(nv, 0.0);
  for (std::size_t v = 0; v < n_head; ++v) {
    head_mask[v] = 1.0;
    face_mask[v] = std::clamp((V(static_cast<Eigen::Index>(v), 2) - 0.35) / 0.2, 0.0, 1.0);
  }
  A.shape_basis = to_row_major(bump_basis(V, cfg.n_shape, 0.03, head_mask, 0.4, rng));
  A.expr_basis = to_row_major(bump_basis(V, cfg.n_expr, 0.03, face_mask, 0.2, rng));

  // Eyelids: a downward pull on the skin around each eye.
  A.eyelid_basis.assign(nv * 3 * kNumEyelids, 0.0);
  for (std::size_t k = 0; k < kNumEyelids; ++k) {
    const Vec3& eye = A.joints_rest[kJointEyeL + k];
    for (std::size_t v = 0; v < n_head; ++v) {
      const double d2 = (V.row(static_cast<Eigen::Index>(v)).transpose() - eye).squaredNorm();
      A.eyelid_basis[(v * 3 + 1) * kNumEyelids + k] = -0.05 * std::exp(-d2 / 0.02);
    }
  }

  // Landmarks: jaw/cheek contour, inner face, and the front of each eyeball.
  std::vector<std::uint32_t> contour, inner;
  for (std::uint32_t v = 0; v < n_head; ++v) {
    const double y = V(v, 1), z = V(v, 2);
    if (z > -0.05 && z < 0.3 && y < 0.5) contour.push_back(v);
    if (z > 0.45) inner.push_back(v);
  }
  const std::size_t n_inner = cfg.n_landmarks - kContour - 2 * kEyeLandmarks;
  if (contour.size() < kContour || inner.size() < n_inner) {
    throw ConfigError("desk asset: not enough landmark candidates for the requested count");
  }
  std::shuffle(contour.begin(), contour.end(), rng);
  std::shuffle(inner.begin(), inner.end(), rng);
  A.landmark_idx.assign(contour.begin(), contour.begin() + kContour);
  A.landmark_idx.insert(A.landmark_idx.end(), inner.begin(), inner.begin() + static_cast<std::ptrdiff_t>(n_inner));
  for (std::size_t e = 0; e < 2; ++e) {
    std::vector<std::uint32_t> ev(kEyeVerts);
    for (std::size_t i = 0; i < kEyeVerts; ++i) ev[i] = static_cast<std::uint32_t>(n_head + e * kEyeVerts + i);
    std::stable_sort(ev.begin(), ev.end(), [&](auto a, auto b) { return V(a, 2) > V(b, 2); });
    A.landmark_idx.insert(A.landmark_idx.end(), ev.begin(), ev.begin() + kEyeLandmarks);
  }

  A.validate();
  return A;
}

}  // namespace flap
