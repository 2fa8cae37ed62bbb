#include <doctest.h>

#include <filesystem>

#include "flap/error.hpp"
#include "flap/parallel.hpp"
#include "flap/synth_data.hpp"
#include "test_util.hpp"

using namespace flap;

TEST_CASE("yaw variance matches its closed form") {
  const ModelAsset a = make_desk_asset();
  TrajectoryConfig tc;
  tc.n_frames = 40;
  double sum = 0.0, sq = 0.0, n = 0.0;
  for (std::uint64_t s = 0; s < 3000; ++s) {
    tc.seed = derive_seed(77, s);
    for (const auto& f : sample_trajectory(a, tc).frames) {
      sum += f.theta_global[1];
      sq += f.theta_global[1] * f.theta_global[1];
      n += 1.0;
    }
  }
  const double var = sq / n - (sum / n) * (sum / n);
  // 0.2^2 + (0.6)^2 / 2
  CHECK(yaw_stationary_variance(tc) == doctest::Approx(0.22));
  CHECK(var == doctest::Approx(yaw_stationary_variance(tc)).epsilon(0.05));
}

TEST_CASE("trajectory shape and determinism") {
  const ModelAsset a = make_desk_asset();
  TrajectoryConfig tc;
  tc.n_frames = 12;
  tc.seed = 9;
  const auto s1 = sample_trajectory(a, tc);
  const auto s2 = sample_trajectory(a, tc);
  REQUIRE(s1.frames.size() == 12);
  for (std::size_t t = 0; t < 12; ++t) {
    CHECK(s1.frames[t].theta_global == s2.frames[t].theta_global);
    CHECK(s1.frames[t].psi_exp == s2.frames[t].psi_exp);
    CHECK(s1.frames[t].theta_jaw[0] >= 0.0);
    CHECK(s1.frames[t].beta == s1.frames[0].beta);
    CHECK(s1.frames[t].theta_neck == Vec3::Zero());
  }
  tc.n_frames = 0;
  CHECK_THROWS_AS(sample_trajectory(a, tc), ConfigError);
}

TEST_CASE("leakage formula") {
  const ModelAsset a = make_desk_asset();
  const LeakageConfig leak = default_leakage(a.n_expr, 5);
  CHECK(leak.gain == 0.5);
  CHECK(leak.yaw_threshold == 0.35);
  CHECK(leak.direction.norm() == doctest::Approx(1.0));
  CoefficientSequence seq;
  for (double yaw : {-0.9, -0.35, -0.1, 0.0, 0.2, 0.35, 0.5, 1.2}) {
    auto c = HeadCoefficients::zeros(a);
    c.theta_global[1] = yaw;
    c.psi_exp.setConstant(0.25);
    seq.frames.push_back(c);
  }
  const auto out = apply_leakage(seq, leak);
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const double yaw = seq.frames[i].theta_global[1];
    const double mag = std::max(0.0, std::abs(yaw) - 0.35) * (yaw > 0 ? 1.0 : -1.0) * 0.5;
    const Eigen::VectorXd want = seq.frames[i].psi_exp + mag * leak.direction;
    CHECK((out.frames[i].psi_exp - want).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(out.frames[i].theta_global == seq.frames[i].theta_global);
  }
  LeakageConfig bad = leak;
  bad.direction *= 2.0;
  CHECK_THROWS_AS(bad.validate(a.n_expr), ConfigError);
  CHECK_THROWS_AS(leak.validate(a.n_expr + 1), Error);
}

TEST_CASE("dataset conditions carry leakage, targets do not") {
  const ModelAsset a = make_desk_asset();
  TrajectoryConfig tc;
  tc.n_frames = 30;
  tc.seed = 2;
  tc.pose_amplitude = 0.3;
  const auto leak = default_leakage(a.n_expr, 1);
  const Dataset d = build_dataset(a, 4, tc, leak, default_camera());
  std::size_t leaked = 0;
  for (const auto& s : d) {
    REQUIRE(s.target_frames.size() == 30);
    for (std::size_t t = 0; t < 30; ++t) {
      const auto& c = s.clean_conditions.frames[t];
      const auto& l = s.conditions.frames[t];
      for (std::size_t k = 0; k < 20; ++k) CHECK(c[k] == l[k]);
      if (std::abs(c[1]) > 0.35) {
        ++leaked;
        CHECK(c[20] != l[20]);
      } else {
        CHECK(c == l);
      }
    }
    bool ref_found = false;
    for (const auto& f : s.target_frames) ref_found |= (f == s.ref_frame);
    CHECK(ref_found);
  }
  CHECK(leaked > 0);
}

TEST_CASE("dataset is independent of the thread count") {
  const ModelAsset a = make_desk_asset();
  TrajectoryConfig tc;
  tc.n_frames = 10;
  tc.seed = 8;
  const auto leak = default_leakage(a.n_expr, 1);
  set_max_threads(1);
  const Dataset d1 = build_dataset(a, 6, tc, leak, default_camera());
  set_max_threads(4);
  const Dataset d4 = build_dataset(a, 6, tc, leak, default_camera());
  set_max_threads(1);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(d1[i].conditions.frames == d4[i].conditions.frames);
    CHECK(d1[i].ref_frame == d4[i].ref_frame);
    for (std::size_t t = 0; t < 10; ++t) CHECK(d1[i].target_frames[t] == d4[i].target_frames[t]);
  }
}

TEST_CASE("top-variance selection") {
  const ModelAsset a = make_desk_asset();
  TrajectoryConfig tc;
  tc.n_frames = 10;
  tc.seed = 4;
  const Dataset d = build_dataset(a, 10, tc, default_leakage(a.n_expr, 1), default_camera());
  std::vector<double> mv;
  for (const auto& s : d) mv.push_back(motion_variance(s.clean_conditions));
  const auto idx = select_top_variance_indices(d, 0.2);
  REQUIRE(idx.size() == 2);
  CHECK(idx[0] < idx[1]);
  for (std::size_t i = 0; i < 10; ++i) {
    if (i == idx[0] || i == idx[1]) continue;
    CHECK(mv[i] <= std::min(mv[idx[0]], mv[idx[1]]));
  }
  CHECK(select_top_variance_indices(d, 0.25).size() == 3);  // ceil(2.5)
  CHECK(select_top_variance_indices(d, 1.0).size() == 10);
  CHECK(select_top_variance(d, 0.2)[0].conditions.frames == d[idx[0]].conditions.frames);
  CHECK_THROWS_AS(select_top_variance_indices(d, 0.0), ConfigError);

  // Ties resolve to the lower index.
  Dataset tie(3, d[0]);
  CHECK(select_top_variance_indices(tie, 0.3) == std::vector<std::size_t>{0});
}

TEST_CASE("motion variance by hand") {
  ConditionSequence s;
  HeadCondition f{};
  f[0] = 1.0;
  s.frames.push_back(f);
  f[0] = -1.0;
  f[2] = 2.0;
  s.frames.push_back(f);
  CHECK(motion_variance(s) == doctest::Approx(1.0 + 1.0));
}

TEST_CASE("dataset directory round trip") {
  const ModelAsset a = make_desk_asset();
  TrajectoryConfig tc;
  tc.n_frames = 5;
  tc.seed = 6;
  const Dataset d = build_dataset(a, 3, tc, default_leakage(a.n_expr, 1), default_camera());
  const auto dir = test::temp_path("dataset_rt");
  std::filesystem::remove_all(dir);
  save_dataset(d, dir);
  const Dataset b = load_dataset(dir);
  REQUIRE(b.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(b[i].conditions.frames == d[i].conditions.frames);
    CHECK(b[i].clean_conditions.frames == d[i].clean_conditions.frames);
    CHECK(b[i].ref_frame == d[i].ref_frame);
    for (std::size_t t = 0; t < 5; ++t) CHECK(b[i].target_frames[t] == d[i].target_frames[t]);
  }
  CHECK_THROWS_AS(load_dataset(test::temp_path("no_such_dataset")), Error);
}

TEST_CASE("derive_seed separates streams") {
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
  CHECK(derive_seed(5, 7) == derive_seed(5, 7));
}
