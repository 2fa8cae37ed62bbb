#include <doctest.h>

#include <cstring>

#include "flap/condition.hpp"
#include "flap/error.hpp"
#include "test_util.hpp"

using namespace flap;

namespace {

HeadCoefficients random_coeffs(std::size_t n_expr, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  HeadCoefficients c;
  c.beta = Eigen::VectorXd::Zero(3);
  c.psi_exp = Eigen::VectorXd(static_cast<Eigen::Index>(n_expr));
  for (auto& v : c.psi_exp) v = n(rng);
  c.psi_eyelids = Eigen::Vector2d(n(rng), n(rng));
  c.theta_global = test::random_axis_angle(rng, 1.0);
  c.theta_jaw = test::random_axis_angle(rng, 0.4);
  c.theta_eye_l = test::random_axis_angle(rng, 0.5);
  c.theta_eye_r = test::random_axis_angle(rng, 0.5);
  return c;
}

ConditionSequence random_sequence(std::size_t n, std::mt19937_64& rng) {
  ConditionSequence s;
  s.fps = 25.0;
  for (std::size_t t = 0; t < n; ++t) s.frames.push_back(encode(random_coeffs(20, rng)));
  return s;
}

bool same_bytes(const double* a, const double* b, std::size_t n) { return std::memcmp(a, b, n * sizeof(double)) == 0; }

}  // namespace

TEST_CASE("encode layout") {
  static_assert(std::tuple_size_v<HeadCondition> == 120);
  CHECK(cond_slice::kGlobal.begin == 0);
  CHECK(cond_slice::kGlobal.end == 3);
  CHECK(cond_slice::kEyes.end == 15);
  CHECK(cond_slice::kJaw.end == 18);
  CHECK(cond_slice::kEyelids.end == 20);
  CHECK(cond_slice::kExpr.end == 120);

  std::mt19937_64 rng(30);
  for (std::size_t n_expr : {0u, 1u, 20u, 100u}) {
    const auto c = random_coeffs(n_expr, rng);
    const HeadCondition e = encode(c);
    CHECK(e.size() == 120);
    for (int k = 0; k < 3; ++k) CHECK(e[k] == c.theta_global[k]);
    const Rot6 l = rot6d_from_axis_angle(c.theta_eye_l), r = rot6d_from_axis_angle(c.theta_eye_r);
    for (int k = 0; k < 6; ++k) {
      CHECK(e[3 + k] == l[k]);
      CHECK(e[9 + k] == r[k]);
    }
    for (int k = 0; k < 3; ++k) CHECK(e[15 + k] == c.theta_jaw[k]);
    CHECK(e[18] == c.psi_eyelids[0]);
    CHECK(e[19] == c.psi_eyelids[1]);
    for (std::size_t k = 0; k < 100; ++k) CHECK(e[20 + k] == (k < n_expr ? c.psi_exp[static_cast<Eigen::Index>(k)] : 0.0));
  }
  HeadCoefficients big = random_coeffs(101, rng);
  CHECK_THROWS_AS(encode(big), DimensionError);
}

TEST_CASE("decode inverts encode") {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 100; ++i) {
    const auto c = random_coeffs(20, rng);
    const auto d = decode(encode(c), c.beta, 20);
    CHECK(d.psi_exp == c.psi_exp);
    CHECK(d.theta_global == c.theta_global);
    CHECK(d.theta_jaw == c.theta_jaw);
    CHECK((d.theta_eye_l - c.theta_eye_l).norm() < 1e-10);
    CHECK((d.theta_eye_r - c.theta_eye_r).norm() < 1e-10);
    CHECK(d.theta_neck == Vec3::Zero());
  }
  CHECK_THROWS_AS(decode(idle_condition(), Eigen::VectorXd(), 101), DimensionError);
}

TEST_CASE("idle condition") {
  const HeadCondition c = idle_condition();
  for (std::size_t k = 0; k < 120; ++k) {
    const bool eye_diag = k == 3 || k == 7 || k == 9 || k == 13;
    CHECK(c[k] == (eye_diag ? 1.0 : 0.0));
  }
}

TEST_CASE("pose edits leave slices [3:120] bit-identical") {
  std::mt19937_64 rng(32);
  const auto seq = random_sequence(12, rng);
  std::vector<Vec3> per_frame;
  for (int t = 0; t < 12; ++t) per_frame.push_back(test::random_axis_angle(rng, 0.6));
  for (auto mode : {PoseEditMode::Overlay, PoseEditMode::Absolute, PoseEditMode::Fixed}) {
    PoseEdit e{mode, mode == PoseEditMode::Fixed ? std::vector<Vec3>{Vec3(0.1, 0.2, -0.3)} : per_frame};
    const auto out = apply_pose_edit(seq, e);
    REQUIRE(out.size() == seq.size());
    for (std::size_t t = 0; t < seq.size(); ++t) {
      CHECK(same_bytes(out.frames[t].data() + 3, seq.frames[t].data() + 3, 117));
      const Vec3 g(out.frames[t][0], out.frames[t][1], out.frames[t][2]);
      const Vec3 g0(seq.frames[t][0], seq.frames[t][1], seq.frames[t][2]);
      if (mode == PoseEditMode::Fixed) CHECK(g == Vec3(0.1, 0.2, -0.3));
      if (mode == PoseEditMode::Absolute) CHECK(g == per_frame[t]);
      if (mode == PoseEditMode::Overlay) {
        const Mat3 want = axis_angle_to_matrix(per_frame[t]) * axis_angle_to_matrix(g0);
        CHECK((axis_angle_to_matrix(g) - want).norm() < 1e-10);
      }
    }
  }
  CHECK_THROWS_AS(apply_pose_edit(seq, {PoseEditMode::Overlay, {Vec3::Zero()}}), DimensionError);
  CHECK_THROWS_AS(apply_pose_edit(seq, {PoseEditMode::Fixed, per_frame}), DimensionError);
}

TEST_CASE("expression swaps leave the global slice bit-identical") {
  std::mt19937_64 rng(33);
  const auto target = random_sequence(9, rng);
  const auto source = random_sequence(9, rng);
  const auto one = random_sequence(1, rng);
  for (const auto& out : {swap_expression(target, source), swap_expression(target, one), swap_expression_idle(target)}) {
    REQUIRE(out.size() == target.size());
    for (std::size_t t = 0; t < target.size(); ++t) CHECK(same_bytes(out.frames[t].data(), target.frames[t].data(), 3));
  }
  const auto s = swap_expression(target, source);
  for (std::size_t t = 0; t < 9; ++t) CHECK(same_bytes(s.frames[t].data() + 3, source.frames[t].data() + 3, 117));
  const auto idle = swap_expression_idle(target);
  for (std::size_t t = 0; t < 9; ++t) CHECK(same_bytes(idle.frames[t].data() + 3, idle_condition().data() + 3, 117));
  CHECK_THROWS_AS(swap_expression(target, random_sequence(4, rng)), DimensionError);
}

TEST_CASE("resample") {
  std::mt19937_64 rng(34);
  const auto seq = random_sequence(11, rng);
  const auto same = resample(seq, 25.0);
  CHECK(same.frames == seq.frames);

  // 25 -> 50 fps: even frames are the originals, odd frames are midpoints.
  const auto up = resample(seq, 50.0);
  REQUIRE(up.size() == 21);
  CHECK(up.fps == 50.0);
  for (std::size_t i = 0; i < 11; ++i) CHECK(up.frames[2 * i] == seq.frames[i]);
  for (std::size_t i = 0; i + 1 < 11; ++i) {
    const auto& m = up.frames[2 * i + 1];
    const auto& a = seq.frames[i];
    const auto& b = seq.frames[i + 1];
    for (std::size_t k = 18; k < 120; ++k) CHECK(m[k] == doctest::Approx(0.5 * (a[k] + b[k])));
    const Mat3 Ra = axis_angle_to_matrix(Vec3(a[0], a[1], a[2]));
    const Mat3 Rb = axis_angle_to_matrix(Vec3(b[0], b[1], b[2]));
    const Mat3 Rm = axis_angle_to_matrix(Vec3(m[0], m[1], m[2]));
    CHECK(geodesic_distance(Ra, Rm) == doctest::Approx(geodesic_distance(Rm, Rb)).epsilon(1e-8));
    // Eye slots stay valid 6D rotations.
    Rot6 e;
    std::copy(m.begin() + 3, m.begin() + 9, e.begin());
    const Mat3 E = rot6d_to_matrix(e);
    CHECK((E.col(0) - Eigen::Vector3d(e[0], e[1], e[2])).norm() < 1e-12);
  }
  const auto down = resample(seq, 12.5);
  REQUIRE(down.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(down.frames[i] == seq.frames[2 * i]);
  CHECK_THROWS_AS(resample(seq, 0.0), Error);
}

TEST_CASE("validation") {
  ConditionSequence s;
  CHECK_THROWS_AS(s.validate(), Error);
  s.frames.push_back(idle_condition());
  CHECK_NOTHROW(s.validate());
  s.fps = 0.0;
  CHECK_THROWS_AS(s.validate(), Error);
  s.fps = 25.0;
  s.frames[0][50] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(s.validate(), Error);
}

TEST_CASE("text and binary round trips are exact") {
  std::mt19937_64 rng(35);
  auto seq = random_sequence(7, rng);
  seq.fps = 29.97;
  seq.frames[2][100] = 1e-300;
  seq.frames[3][101] = -0.0;
  const auto t = deserialize_text(serialize_text(seq));
  const auto b = deserialize_binary(serialize_binary(seq));
  CHECK(t.fps == seq.fps);
  CHECK(b.fps == seq.fps);
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(same_bytes(t.frames[i].data(), seq.frames[i].data(), 120));
    CHECK(same_bytes(b.frames[i].data(), seq.frames[i].data(), 120));
  }
  const auto jp = test::temp_path("cond_rt.json"), bp = test::temp_path("cond_rt.bin");
  save_conditions(seq, jp);
  save_conditions(seq, bp);
  CHECK(load_conditions(jp).frames == seq.frames);
  CHECK(load_conditions(bp).frames == seq.frames);
  CHECK(serialize_binary(load_conditions(bp)) == serialize_binary(seq));

  CHECK_THROWS_AS(deserialize_text("{\"version\": 1}"), FormatError);
  CHECK_THROWS_AS(deserialize_text("not json"), FormatError);
  const std::string bin = serialize_binary(seq);
  CHECK_THROWS_AS(deserialize_binary(bin.substr(0, bin.size() - 5)), FormatError);
  CHECK_THROWS_AS(deserialize_binary("FLAPCONX" + bin.substr(8)), FormatError);
}
