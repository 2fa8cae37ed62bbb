#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "flap/error.hpp"
#include "flap/pft_trainer.hpp"
#include "test_util.hpp"

using namespace flap;

namespace {

struct Fixture {
  ModelAsset asset = make_desk_asset();
  Dataset data;
  Fixture() {
    TrajectoryConfig tc;
    tc.n_frames = 8;
    tc.seed = 12;
    data = build_dataset(asset, 10, tc, default_leakage(asset.n_expr, 1), default_camera());
  }
};

PipelineConfig quick(std::uint64_t seed) {
  PipelineConfig cfg = default_pipeline(seed);
  cfg.hidden = 8;
  cfg.cond_hidden = 4;
  cfg.diffusion_steps = 20;
  for (auto& s : cfg.stages) {
    s.steps = 6;
    s.batch_size = 4;
  }
  return cfg;
}

bool same_range(const DenoiserParams& a, const DenoiserParams& b, Block blk) {
  for (auto [lo, hi] : a.block_ranges(blk)) {
    if (std::memcmp(a.values.data() + lo, b.values.data() + lo, (hi - lo) * sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("stage defaults") {
  const auto m = stage_defaults(Stage::Motion);
  CHECK(m.condition_mask == ConditionMask::motion_only());
  CHECK(m.trainable == BlockMask::all());
  CHECK(m.filter.top_variance);
  CHECK(m.filter.fraction == 0.2);
  CHECK(m.steps == 2000);
  const auto e = stage_defaults(Stage::Expression);
  CHECK(e.condition_mask == ConditionMask::all());
  CHECK(e.trainable == BlockMask::all().without(Block::Motion));
  CHECK(!e.filter.top_variance);
  CHECK(e.steps == 2000);
  const auto t = stage_defaults(Stage::Temporal);
  CHECK(t.trainable == BlockMask::only({Block::Temporal}));
  CHECK(t.window == 4);
  CHECK(t.steps == 1000);
  const auto j = stage_defaults(Stage::JointBaseline);
  CHECK(j.steps == m.steps + e.steps + t.steps);
  for (Stage s : {Stage::Motion, Stage::Expression, Stage::Temporal, Stage::JointBaseline})
    CHECK(stage_from_name(stage_name(s)) == s);
  CHECK_THROWS_AS(stage_from_name("warmup"), ConfigError);
}

TEST_CASE("stage order is enforced") {
  Fixture f;
  PipelineConfig cfg = quick(1);
  std::swap(cfg.stages[0], cfg.stages[1]);
  CHECK_THROWS_AS(run_pipeline(f.asset, f.data, cfg), ConfigError);
  cfg = quick(1);
  cfg.stages.push_back(cfg.stages[1]);
  CHECK_THROWS_AS(run_pipeline(f.asset, f.data, cfg), ConfigError);
  cfg = quick(1);
  cfg.stages.push_back(stage_defaults(Stage::JointBaseline));
  CHECK_THROWS_AS(run_pipeline(f.asset, f.data, cfg), ConfigError);
  CHECK_THROWS_AS(parse_pipeline_config("stages = expression, motion"), ConfigError);
  CHECK_NOTHROW(parse_pipeline_config("stages = motion, temporal"));
}

TEST_CASE("empty stage list returns the initial parameters") {
  Fixture f;
  PipelineConfig cfg = quick(2);
  cfg.stages.clear();
  const auto r = run_pipeline(f.asset, f.data, cfg);
  const auto init = initial_params(f.asset, cfg);
  CHECK(r.params.values == init.values);
  CHECK(r.report.stages.empty());
  CHECK(r.log.empty());
}

TEST_CASE("frozen blocks stay bit-identical across each stage") {
  Fixture f;
  PipelineConfig cfg = quick(3);
  const auto dir = test::temp_path("pft_ckpt");
  std::filesystem::remove_all(dir);
  cfg.checkpoint_dir = dir;
  const auto r = run_pipeline(f.asset, f.data, cfg);
  REQUIRE(r.report.stages.size() == 3);
  const auto init = initial_params(f.asset, cfg);
  const auto s1 = load_checkpoint(r.report.stages[0].checkpoint);
  const auto s2 = load_checkpoint(r.report.stages[1].checkpoint);
  const auto s3 = load_checkpoint(r.report.stages[2].checkpoint);
  CHECK(std::filesystem::path(r.report.stages[1].checkpoint).filename() == "stage2_expression.ckpt");
  CHECK(s3.values == r.params.values);

  CHECK(!same_range(init, s1, Block::Motion));
  CHECK(same_range(s1, s2, Block::Motion));
  CHECK(!same_range(s1, s2, Block::Expression));
  for (std::size_t b = 0; b < kNumBlocks; ++b) {
    if (static_cast<Block>(b) == Block::Temporal) continue;
    CHECK(same_range(s2, s3, static_cast<Block>(b)));
  }
  CHECK(!same_range(s2, s3, Block::Temporal));
  CHECK(s3.window == 4);
  CHECK(s1.condition_mask == ConditionMask::motion_only());
  CHECK(s3.condition_mask == ConditionMask::all());

  // Report and log bookkeeping.
  CHECK(r.report.stages[0].n_sequences == 2);  // ceil(0.2 * 10)
  CHECK(r.report.stages[1].n_sequences == 10);
  CHECK(r.log.size() == 18);
  CHECK(r.log[6].stage == "expression");
  CHECK(r.report.to_json().find("\"stage\":\"temporal\"") != std::string::npos);
}

TEST_CASE("motion-only model ignores expression swaps") {
  Fixture f;
  PipelineConfig cfg = quick(4);
  cfg.stages.resize(1);
  const auto r = run_pipeline(f.asset, f.data, cfg);
  const NoiseSchedule s = make_schedule(r.params.config.steps);
  const auto& item = f.data[3];
  const auto a = sample(r.params, item.ref_frame, item.conditions, s, 9);
  const auto b = sample(r.params, item.ref_frame, swap_expression_idle(item.conditions), s, 9);
  for (std::size_t t = 0; t < a.size(); ++t) CHECK(a[t] == b[t]);
}

TEST_CASE("withheld motion zeroes the global slice in the expression stage") {
  Fixture f;
  PipelineConfig cfg = quick(5);
  cfg.stages.resize(2);
  cfg.withhold_motion = true;
  const auto r = run_pipeline(f.asset, f.data, cfg);
  CHECK(!r.report.stages[1].condition_mask.global);
  // Inference still sees the slice trained in the motion stage.
  CHECK(r.params.condition_mask == ConditionMask::all());
  cfg.withhold_motion = false;
  CHECK(run_pipeline(f.asset, f.data, cfg).params.values != r.params.values);
}

TEST_CASE("pipelines are deterministic") {
  Fixture f;
  const auto a = run_pipeline(f.asset, f.data, quick(6));
  const auto b = run_pipeline(f.asset, f.data, quick(6));
  CHECK(a.params.values == b.params.values);
  CHECK(a.report.to_json() == b.report.to_json());
  CHECK(run_pipeline(f.asset, f.data, quick(7)).params.values != a.params.values);
}

TEST_CASE("joint baseline trains everything on all data") {
  Fixture f;
  std::vector<LogRecord> log;
  const auto p = run_joint_baseline(f.asset, f.data, 5, 0.1, 8, &log);
  CHECK(log.size() == 5);
  CHECK(log[0].stage == "joint_baseline");
  CHECK(p.condition_mask == ConditionMask::all());
  CHECK(p.window == 1);
}

TEST_CASE("config parsing") {
  const auto cfg = parse_pipeline_config(R"(# comment
stages = motion, expression
seed = 42
withhold_motion = true
hidden = 16

[motion]
steps = 10
fraction = 0.5
lr = 0.05
[expression]
batch_size = 8
seed = 3
)");
  REQUIRE(cfg.stages.size() == 2);
  CHECK(cfg.init_seed == 42);
  CHECK(cfg.withhold_motion);
  CHECK(cfg.hidden == 16);
  CHECK(cfg.stages[0].steps == 10);
  CHECK(cfg.stages[0].filter.fraction == 0.5);
  CHECK(cfg.stages[0].lr == 0.05);
  CHECK(cfg.stages[0].seed == derive_seed(42, 1));
  CHECK(cfg.stages[1].batch_size == 8);
  CHECK(cfg.stages[1].seed == 3);
  CHECK(cfg.stages[1].steps == 2000);

  const auto def = parse_pipeline_config("");
  CHECK(def.stages.size() == 3);
  CHECK(parse_pipeline_config("stages =").stages.empty());
  CHECK_THROWS_AS(parse_pipeline_config("bogus = 1"), ConfigError);
  CHECK_THROWS_AS(parse_pipeline_config("motion.colour = red"), ConfigError);
  CHECK_THROWS_AS(parse_pipeline_config("stages = motion\ntemporal.steps = 4"), ConfigError);
  CHECK_THROWS_AS(parse_pipeline_config("hidden = -3"), ConfigError);
  CHECK_THROWS_AS(parse_pipeline_config("withhold_motion = maybe"), ConfigError);
  CHECK_THROWS_AS(parse_pipeline_config("motion.lr = fast"), ConfigError);
}
