#pragma once

// Progressively focused training: motion, then expression, then temporal
// stages with fixed condition masks, trainable blocks and data filters, plus
// the single-stage joint baseline used as the comparison arm.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flap/diffusion.hpp"
#include "flap/kv_config.hpp"
#include "flap/synth_data.hpp"

namespace flap {

enum class Stage { Motion, Expression, Temporal, JointBaseline };
const char* stage_name(Stage s);
Stage stage_from_name(std::string_view name);

struct DataFilter {
  bool top_variance = false;
  double fraction = 1.0;
};

struct StageConfig {
  Stage stage = Stage::JointBaseline;
  ConditionMask condition_mask;
  BlockMask trainable = BlockMask::all();
  DataFilter filter;
  std::size_t steps = 0;
  double lr = 0.2;
  std::size_t batch_size = 64;
  std::size_t window = 1;
  std::uint64_t seed = 0;
};

// Masks, filter and desk step counts (2000 / 2000 / 1000) for each stage.
StageConfig stage_defaults(Stage s);

struct PipelineConfig {
  std::vector<StageConfig> stages;
  // Expression stage: false keeps the global rotation flowing through the
  // frozen motion block, true zeroes it for that stage.
  bool withhold_motion = false;
  std::uint64_t init_seed = 0;
  std::size_t hidden = 128;
  std::size_t cond_hidden = 32;
  std::size_t diffusion_steps = 100;
  Camera camera = default_camera();
  // Per-stage checkpoints are written here when set.
  std::optional<std::string> checkpoint_dir;
  // Start from these weights instead of a fresh initialization.
  std::optional<DenoiserParams> resume;
};

// Key-value document (see kv_config.hpp). Keys: stages (comma list),
// withhold_motion, seed, hidden, cond_hidden, diffusion_steps, and
// per-stage <stage>.steps / .lr / .batch_size / .window / .seed / .fraction.
PipelineConfig parse_pipeline_config(std::string_view text);
PipelineConfig pipeline_config_from(const std::vector<KeyValue>& entries);
PipelineConfig load_pipeline_config(const std::string& path);
// Three PFT stages with defaults, every stage seeded from `seed`.
PipelineConfig default_pipeline(std::uint64_t seed);

struct StageReport {
  Stage stage;
  ConditionMask condition_mask;
  BlockMask trainable;
  std::size_t steps = 0;
  std::size_t n_sequences = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;  // mean of the last min(20, steps) step losses
  std::string checkpoint;   // empty when no checkpoint directory is set
  double seconds = 0.0;
};

struct PipelineReport {
  std::vector<StageReport> stages;
  std::string to_json() const;
};

struct PipelineResult {
  DenoiserParams params;
  PipelineReport report;
  std::vector<LogRecord> log;
};

DenoiserParams initial_params(const ModelAsset& asset, const PipelineConfig& cfg);
TrainingSet to_training_set(const DenoiserConfig& cfg, const Dataset& data);

// Stages must appear as a prefix-ordered subsequence of motion, expression,
// temporal, or as a single joint_baseline; anything else throws ConfigError.
PipelineResult run_pipeline(const ModelAsset& asset, const Dataset& data, const PipelineConfig& cfg);

// All conditions, all blocks, no filter.
DenoiserParams run_joint_baseline(const ModelAsset& asset, const Dataset& data, std::size_t steps, double lr,
                                  std::uint64_t seed, std::vector<LogRecord>* log = nullptr);
PipelineResult run_joint_baseline(const ModelAsset& asset, const Dataset& data, const PipelineConfig& base,
                                  const StageConfig& stage);

}  // namespace flap
