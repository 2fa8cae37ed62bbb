#include <fstream>
#include <sstream>

#include "flap/binary_io.hpp"
#include "flap/error.hpp"
#include "flap/head_model.hpp"

namespace flap {

namespace {

constexpr std::string_view kMagic = "FLAPASSET";
constexpr std::uint64_t kVersion = 1;

std::string manifest_text(const ModelAsset& a) {
  const std::size_t nv = a.n_vertices();
  std::ostringstream m;
  m << "FLAPASSET version " << kVersion << "\n"
    << "encoding little-endian; u64 header fields; f64 arrays; i64 index arrays\n"
    << "N_v " << nv << "\nN_f " << a.facets.size() << "\nK " << a.n_landmarks() << "\nD_beta " << a.n_shape
    << "\nD_psi " << a.n_expr << "\n"
    << "arrays in order:\n"
    << "  template        f64 " << nv << "x3\n"
    << "  shape_basis     f64 " << nv << "x3x" << a.n_shape << "\n"
    << "  expr_basis      f64 " << nv << "x3x" << a.n_expr << "\n"
    << "  eyelid_basis    f64 " << nv << "x3x2\n"
    << "  joints_rest     f64 4x3 (neck, jaw, eye_l, eye_r)\n"
    << "  parent          i64 4 (-1 = global)\n"
    << "  skin_weights    f64 " << nv << "x5 (global, neck, jaw, eye_l, eye_r)\n"
    << "  facets          i64 " << a.facets.size() << "x3\n"
    << "  landmark_idx    i64 " << a.n_landmarks() << "\n";
  return m.str();
}

}  // namespace

void save_asset(const ModelAsset& asset, const std::string& path) {
  asset.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  io::BinaryWriter w(out);
  w.magic(kMagic);
  w.u64(kVersion);
  w.u64(asset.n_vertices());
  w.u64(asset.facets.size());
  w.u64(asset.n_landmarks());
  w.u64(asset.n_shape);
  w.u64(asset.n_expr);
  w.f64s({asset.template_vertices.data(), asset.n_vertices() * 3});
  w.f64s(asset.shape_basis);
  w.f64s(asset.expr_basis);
  w.f64s(asset.eyelid_basis);
  for (const auto& j : asset.joints_rest) w.f64s({j.data(), 3});
  for (int p : asset.parent) w.i64(p);
  w.f64s(asset.skin_weights);
  for (const auto& f : asset.facets) {
    for (auto i : f) w.i64(i);
  }
  for (auto i : asset.landmark_idx) w.i64(i);
  if (!out) throw Error("write failed: " + path);
  out.close();
  io::write_text_file(path + ".manifest", manifest_text(asset));
}

ModelAsset load_asset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  io::BinaryReader r(in, "asset " + path);
  r.expect_magic(kMagic);
  const auto version = r.u64();
  if (version != kVersion) throw FormatError("asset: unsupported version " + std::to_string(version));
  const auto nv = r.u64(), nf = r.u64(), k = r.u64(), db = r.u64(), dp = r.u64();
  constexpr std::uint64_t kLimit = std::uint64_t{1} << 24;
  if (nv == 0 || nv > kLimit || nf > kLimit || k > kLimit || db > 4096 || dp > 4096) {
    throw FormatError("asset: implausible dimensions");
  }
  auto index = [&](std::uint64_t bound) {
    const auto v = r.i64();
    if (v < 0 || static_cast<std::uint64_t>(v) >= bound) throw FormatError("asset: index out of range");
    return static_cast<std::uint32_t>(v);
  };

  ModelAsset a;
  a.n_shape = db;
  a.n_expr = dp;
  const auto tmpl = r.f64s(nv * 3);
  a.template_vertices = Eigen::Map<const Points3>(tmpl.data(), static_cast<Eigen::Index>(nv), 3);
  a.shape_basis = r.f64s(nv * 3 * db);
  a.expr_basis = r.f64s(nv * 3 * dp);
  a.eyelid_basis = r.f64s(nv * 3 * kNumEyelids);
  for (auto& j : a.joints_rest) {
    const auto v = r.f64s(3);
    j = Vec3(v[0], v[1], v[2]);
  }
  for (auto& p : a.parent) {
    const auto v = r.i64();
    if (v < -1 || v >= static_cast<std::int64_t>(kNumJoints)) throw FormatError("asset: bad parent index");
    p = static_cast<int>(v);
  }
  a.skin_weights = r.f64s(nv * kNumSkinSlots);
  a.facets.resize(nf);
  for (auto& f : a.facets) {
    for (auto& i : f) i = index(nv);
  }
  a.landmark_idx.resize(k);
  for (auto& i : a.landmark_idx) i = index(nv);
  r.expect_end();
  a.validate();
  return a;
}

}  // namespace flap
