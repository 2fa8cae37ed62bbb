#include <doctest.h>

#include <json.hpp>

#include "flap/error.hpp"
#include "flap/eval_metrics.hpp"
#include "flap/pft_trainer.hpp"
#include "test_util.hpp"

using namespace flap;

namespace {

Sample one_sample(const ModelAsset& a, std::size_t frames, std::uint64_t seed) {
  TrajectoryConfig tc;
  tc.n_frames = frames;
  tc.seed = seed;
  return build_dataset(a, 1, tc, default_leakage(a.n_expr, 1), default_camera())[0];
}

}  // namespace

TEST_CASE("landmark rmse by hand") {
  LandmarkFrame a(2, 2), b(2, 2);
  a << 0, 0, 1, 1;
  b << 3, 4, 1, 1;
  // Squared errors 9 + 16 over 4 coordinates.
  CHECK(landmark_rmse(a, b) == doctest::Approx(2.5));
  CHECK(landmark_rmse(std::vector<LandmarkFrame>{a, a}, std::vector<LandmarkFrame>{b, a}) ==
        doctest::Approx(std::sqrt(25.0 / 8.0)));
  CHECK(landmark_rmse(a, a) == 0.0);
  CHECK_THROWS_AS(landmark_rmse(a, LandmarkFrame(3, 2)), DimensionError);
  CHECK_THROWS_AS(landmark_rmse(std::vector<LandmarkFrame>{}, std::vector<LandmarkFrame>{}), DimensionError);
}

TEST_CASE("pearson") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  CHECK(pearson(x, {2, 4, 6, 8, 10}) == doctest::Approx(1.0));
  CHECK(pearson(x, {5, 4, 3, 2, 1}) == doctest::Approx(-1.0));
  // numpy.corrcoef([1,2,3,4,5], [2,1,4,3,7])[0,1]
  CHECK(pearson(x, {2, 1, 4, 3, 7}) == doctest::Approx(0.8241633836921342));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> u(20000), v(20000);
  for (auto& e : u) e = n(rng);
  for (auto& e : v) e = n(rng);
  CHECK(std::abs(pearson(u, v)) < 0.03);
  CHECK_THROWS_AS(pearson(x, {1, 1, 1, 1, 1}), DegenerateInputError);
  CHECK_THROWS_AS(pearson(x, {1, 2}), DimensionError);
}

TEST_CASE("jaw sync") {
  ConditionSequence c;
  AudioFeatureSequence a;
  a.frames.resize(10, 2);
  for (int t = 0; t < 10; ++t) {
    HeadCondition f{};
    f[15] = 0.03 * t;
    f[16] = 0.04 * t;  // norm 0.05 t
    c.frames.push_back(f);
    a.frames(t, 0) = 2.0 * t + 1.0;
    a.frames(t, 1) = 0.0;
  }
  CHECK(jaw_sync(c, a) == doctest::Approx(1.0));
  for (int t = 0; t < 10; ++t) a.frames(t, 0) = -a.frames(t, 0);
  CHECK(jaw_sync(c, a) == doctest::Approx(-1.0));
  a.frames.conservativeResize(9, 2);
  CHECK_THROWS_AS(jaw_sync(c, a), DimensionError);
}

TEST_CASE("pose error on clean renders and with a known offset") {
  const ModelAsset asset = make_desk_asset();
  const Sample s = one_sample(asset, 6, 21);
  const auto r = pose_error(s.target_frames, asset, s.clean_conditions);
  REQUIRE(r.per_frame.size() == 6);
  CHECK(r.mean < 1e-3);
  for (bool failed : r.fit_failed) CHECK(!failed);

  // Commanding a yaw 0.1 rad away from what was rendered.
  ConditionSequence off = s.clean_conditions;
  for (auto& f : off.frames) {
    const Mat3 R = axis_angle_to_matrix(Vec3(0.0, 0.1, 0.0)) * axis_angle_to_matrix(Vec3(f[0], f[1], f[2]));
    const Vec3 v = matrix_to_axis_angle(R);
    f[0] = v[0];
    f[1] = v[1];
    f[2] = v[2];
  }
  const auto r2 = pose_error(s.target_frames, asset, off);
  CHECK(r2.mean == doctest::Approx(0.1).epsilon(0.01));

  const auto j = nlohmann::json::parse(to_json(r2));
  CHECK(j.at("per_frame").size() == 6);
  CHECK(j.at("mean").get<double>() == r2.mean);
  CHECK_THROWS_AS(pose_error({s.target_frames[0]}, asset, s.clean_conditions), DimensionError);
}

TEST_CASE("decoupling is zero when the model cannot see expressions") {
  const ModelAsset asset = make_desk_asset();
  const Sample s = one_sample(asset, 4, 22);
  std::vector<DecouplingItem> items{{s.ref_frame, s.conditions}};

  PipelineConfig pc;
  pc.hidden = 8;
  pc.cond_hidden = 4;
  pc.diffusion_steps = 10;
  DenoiserParams zero = zero_params(initial_params(asset, pc).config);
  const auto rz = decoupling_score(zero, asset, items, 3);
  CHECK(rz.n_frames == 4);
  CHECK(rz.mean_pose_shift == 0.0);

  DenoiserParams masked = initial_params(asset, pc);
  masked.condition_mask = ConditionMask::motion_only();
  CHECK(decoupling_score(masked, asset, items, 3).mean_pose_shift == 0.0);

  // A model that does read expressions generally moves.
  DenoiserParams open = initial_params(asset, pc);
  for (double& v : open.view("expr.w2")) v *= 30.0;
  for (double& v : open.view("trunk.out.w")) v *= 30.0;
  const auto ro = decoupling_score(open, asset, items, 3);
  CHECK(ro.mean_pose_shift > 0.0);
  CHECK(decoupling_score(open, asset, items, 3).per_frame == ro.per_frame);

  const auto j = nlohmann::json::parse(to_json(ro));
  CHECK(j.at("n_frames").get<std::size_t>() == 4);
  CHECK(!j.at("swap_spec").get<std::string>().empty());
  CHECK_THROWS_AS(decoupling_score(zero, asset, {}, 3), DimensionError);
}
