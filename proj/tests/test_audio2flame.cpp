#include <doctest.h>

#include <type_traits>

#include "flap/audio2flame.hpp"
#include "flap/error.hpp"
#include "flap/eval_metrics.hpp"
#include "flap/synth_data.hpp"
#include "test_util.hpp"

using namespace flap;

// Inference takes the trained weights and audio features, nothing else.
static_assert(std::is_same_v<decltype(&infer_a2f), ConditionSequence (*)(const A2FParams&, const AudioFeatureSequence&)>);

namespace {

AudioFeatureSequence random_audio(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  AudioFeatureSequence a;
  a.frames.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < a.frames.size(); ++i) a.frames.data()[i] = g(rng);
  return a;
}

double r_squared(const std::vector<double>& pred, const std::vector<double>& truth) {
  double mean = 0.0;
  for (double v : truth) mean += v;
  mean /= double(truth.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_res += (pred[i] - truth[i]) * (pred[i] - truth[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  return 1.0 - ss_res / ss_tot;
}

// Condition slot 15 is a fixed linear function of the audio window.
ConditionSequence linear_target(const AudioFeatureSequence& a) {
  ConditionSequence c;
  c.fps = a.fps;
  const auto n = a.frames.rows();
  for (Eigen::Index t = 0; t < n; ++t) {
    HeadCondition f{};
    const auto prev = std::max<Eigen::Index>(t - 1, 0);
    f[15] = 0.7 * a.frames(t, 0) - 0.2 * a.frames(prev, 1) + 0.1;
    f[18] = 0.5 * a.frames(t, 2);
    c.frames.push_back(f);
  }
  return c;
}

}  // namespace

TEST_CASE("synthetic audio tracks the jaw before noise") {
  const ModelAsset asset = make_desk_asset();
  TrajectoryConfig tc;
  tc.n_frames = 200;
  tc.seed = 3;
  const auto traj = sample_trajectory(asset, tc);
  ConditionSequence c;
  for (const auto& f : traj.frames) c.frames.push_back(encode(f));
  AudioSynthConfig ac;
  ac.noise = 0.0;
  const auto clean = synth_audio(c, ac);
  CHECK(clean.dim() == 16);
  CHECK(clean.size() == 200);
  CHECK(jaw_sync(c, clean) > 0.9);
  ac.noise = 0.01;
  ac.seed = 4;
  const auto noisy = synth_audio(c, ac);
  CHECK(noisy.frames != clean.frames);
  CHECK(synth_audio(c, ac).frames == noisy.frames);
}

TEST_CASE("regressor recovers a linear audio map") {
  std::vector<A2FPair> train;
  for (std::uint64_t s = 0; s < 4; ++s) {
    const auto a = random_audio(80, 5, s);
    train.emplace_back(a, linear_target(a));
  }
  const A2FParams p = train_a2f(train, {2, 1e-8});
  CHECK(p.weights.rows() == 120);
  CHECK(p.weights.cols() == 5 * 5 + 1);
  const auto test_audio = random_audio(60, 5, 99);
  const auto truth = linear_target(test_audio);
  const auto pred = infer_a2f(p, test_audio);
  REQUIRE(pred.size() == 60);
  std::vector<double> pp, tt;
  // Interior frames: the edge padding does not match the target's clamp.
  for (std::size_t t = 2; t < 58; ++t) {
    pp.push_back(pred.frames[t][15]);
    tt.push_back(truth.frames[t][15]);
  }
  CHECK(r_squared(pp, tt) > 0.99);
  for (std::size_t t = 2; t < 58; ++t) CHECK(pred.frames[t][100] == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("unrelated audio predicts nothing") {
  std::vector<A2FPair> train;
  for (std::uint64_t s = 0; s < 4; ++s) {
    const auto a = random_audio(100, 5, s);
    train.emplace_back(random_audio(100, 5, 50 + s), linear_target(a));
  }
  const A2FParams p = train_a2f(train);
  const auto a = random_audio(200, 5, 77);
  const auto truth = linear_target(a);
  const auto pred = infer_a2f(p, a);
  std::vector<double> pp, tt;
  for (std::size_t t = 0; t < 200; ++t) {
    pp.push_back(pred.frames[t][15]);
    tt.push_back(truth.frames[t][15]);
  }
  CHECK(r_squared(pp, tt) < 0.1);
}

TEST_CASE("constant audio gives a constant prediction") {
  std::vector<A2FPair> train;
  for (std::uint64_t s = 0; s < 3; ++s) {
    const auto a = random_audio(50, 4, s);
    train.emplace_back(a, linear_target(a));
  }
  const A2FParams p = train_a2f(train);
  AudioFeatureSequence flat;
  flat.frames = Eigen::MatrixXd::Constant(20, 4, 0.3);
  const auto out = infer_a2f(p, flat);
  for (std::size_t t = 1; t < 20; ++t) CHECK(out.frames[t] == out.frames[0]);
  CHECK_THROWS_AS(jaw_sync(out, flat), DegenerateInputError);
}

TEST_CASE("input validation") {
  std::vector<A2FPair> train;
  const auto a = random_audio(30, 4, 1);
  train.emplace_back(a, linear_target(a));
  const A2FParams p = train_a2f(train);
  CHECK_THROWS_AS(infer_a2f(p, random_audio(10, 3, 2)), DimensionError);
  CHECK_THROWS_AS(train_a2f({}), ConfigError);
  auto short_pair = train;
  short_pair[0].second.frames.pop_back();
  CHECK_THROWS_AS(train_a2f(short_pair), DimensionError);
}

TEST_CASE("audio and model files round trip") {
  auto a = random_audio(9, 3, 4);
  a.fps = 50.0;
  const auto b = deserialize_audio(serialize_audio(a));
  CHECK(b.frames == a.frames);
  CHECK(b.fps == 50.0);
  const auto path = test::temp_path("audio_rt.json");
  save_audio(a, path);
  CHECK(load_audio(path).frames == a.frames);
  CHECK_THROWS_AS(deserialize_audio("{\"fps\": 25, \"D_a\": 2, \"frames\": [[1]]}"), FormatError);

  std::vector<A2FPair> train{{a, linear_target(a)}};
  const A2FParams p = train_a2f(train, {1, 1e-3});
  const auto mp = test::temp_path("a2f_rt.bin");
  save_a2f(p, mp);
  const auto q = load_a2f(mp);
  CHECK(q.context == 1);
  CHECK(q.audio_dim == 3);
  CHECK(q.weights == p.weights);
}
