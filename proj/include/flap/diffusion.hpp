#pragma once

// Conditioned denoising diffusion over flattened landmark frames.
//
// The denoiser has seven parameter blocks: time embedding, trunk, motion
// (modulation from the global-rotation slice), reference encoder, spatial
// (trunk state mixed with the reference feature), expression (modulation from
// slices [3:120]) and temporal (mixing across a window of frames).

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "flap/condition.hpp"
#include "flap/head_model.hpp"

namespace flap {

struct NoiseSchedule {
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;
  std::size_t size() const { return betas.size(); }
};

// Linear betas from beta_min to beta_max (a single step uses beta_min).
NoiseSchedule make_schedule(std::size_t T, double beta_min = 1e-4, double beta_max = 0.02);

// sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
Eigen::VectorXd forward_noise(const Eigen::VectorXd& x0, std::size_t t, const Eigen::VectorXd& eps,
                              const NoiseSchedule& schedule);

enum class Block : std::uint8_t { Time, Trunk, Motion, RefEncoder, Spatial, Expression, Temporal };
inline constexpr std::size_t kNumBlocks = 7;
const char* block_name(Block b);
Block block_from_name(std::string_view name);

struct BlockMask {
  std::array<bool, kNumBlocks> on{};
  static BlockMask all();
  static BlockMask none();
  static BlockMask only(std::initializer_list<Block> blocks);
  BlockMask without(Block b) const;
  bool operator[](Block b) const { return on[static_cast<std::size_t>(b)]; }
  bool operator==(const BlockMask&) const = default;
};

// Which condition slices reach the network; disabled slices are zeroed.
struct ConditionMask {
  bool global = true, eyes = true, jaw = true, eyelids = true, expr = true;
  static ConditionMask all() { return {}; }
  static ConditionMask motion_only() { return {true, false, false, false, false}; }
  HeadCondition apply(const HeadCondition& c) const;
  bool operator==(const ConditionMask&) const = default;
};

struct DenoiserConfig {
  std::size_t dim = 136;         // 2K
  std::size_t hidden = 128;      // trunk width H
  std::size_t cond_hidden = 32;  // width of the modulation MLPs
  std::size_t steps = 100;       // diffusion steps T
  double beta_min = 1e-4;
  double beta_max = 0.02;
  double uncertainty_init = 0.1;  // initial data-scale prior in the output head
  // Landmark normalization: x = (L - mean) / scale, mean is 2K long.
  std::vector<double> norm_mean;
  double norm_scale = 1.0;

  void validate() const;
};

struct TensorInfo {
  std::string name;
  Block block;
  std::size_t rows, cols;
  std::size_t offset;
  std::size_t size() const { return rows * cols; }
};

struct DenoiserParams {
  DenoiserConfig config;
  std::vector<TensorInfo> tensors;
  std::vector<double> values;
  // Inference-time state carried with the weights.
  ConditionMask condition_mask;
  std::size_t window = 1;  // > 1 once the temporal block is trained

  const TensorInfo& tensor(std::string_view name) const;
  std::span<double> view(std::string_view name);
  std::span<const double> view(std::string_view name) const;
  // Offsets [begin, end) of every tensor in a block.
  std::vector<std::pair<std::size_t, std::size_t>> block_ranges(Block b) const;
  std::size_t size() const { return values.size(); }
};

// Layout with all parameters zero.
DenoiserParams zero_params(const DenoiserConfig& cfg);
// Seeded Gaussian initialization; the temporal block starts at zero so it
// is the identity until trained.
DenoiserParams init_params(const DenoiserConfig& cfg, std::uint64_t seed);

// Normalized-space frames. Rows of x_t / ref / cond are frames; `window`
// consecutive rows form one temporal window sharing t (window 1 disables the
// temporal block).
struct DenoiseInput {
  Eigen::MatrixXd x_t;   // N x D
  std::vector<std::size_t> t;  // N / window entries
  Eigen::MatrixXd ref;   // N x D
  Eigen::MatrixXd cond;  // N x 120
  std::size_t window = 1;
};

Eigen::MatrixXd predict_noise(const DenoiserParams& params, const DenoiseInput& in, const ConditionMask& mask,
                              const NoiseSchedule& schedule);

struct Batch {
  Eigen::MatrixXd x0;   // N x D
  Eigen::MatrixXd eps;  // N x D
  std::vector<std::size_t> t;
  Eigen::MatrixXd ref;
  Eigen::MatrixXd cond;
  std::size_t window = 1;
};

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;  // same layout as DenoiserParams::values
};

// Mean over all elements of (eps - eps_hat)^2 and its gradient. Gradients of
// blocks outside `trainable` are exactly zero.
LossAndGrad loss_and_gradients(const DenoiserParams& params, const Batch& batch, const NoiseSchedule& schedule,
                               const BlockMask& trainable, const ConditionMask& cond_mask);

// One training sequence in normalized space.
struct TrainSequence {
  Eigen::MatrixXd x0;    // frames x D
  Eigen::VectorXd ref;   // D
  Eigen::MatrixXd cond;  // frames x 120
};
using TrainingSet = std::vector<TrainSequence>;

struct LogRecord {
  std::size_t step;
  std::string stage;
  double loss;
};

struct TrainConfig {
  std::size_t steps = 1000;
  double lr = 0.2;
  std::size_t batch_size = 64;  // frames per step (windows when window > 1)
  std::size_t window = 1;
  BlockMask trainable = BlockMask::all();
  ConditionMask condition_mask = ConditionMask::all();
  std::uint64_t seed = 0;
  std::string stage = "train";
};

// Plain SGD; every epoch visits a seeded permutation of the training units
// (frames, or windows of consecutive frames). Throws DivergenceError on a
// non-finite loss.
DenoiserParams train(const DenoiserParams& init, const TrainingSet& data, const TrainConfig& cfg,
                     std::vector<LogRecord>* log = nullptr);

// Ancestral sampling, one output frame per condition. Uses the condition mask
// and window stored in `params`; frames are denoised in windows of
// params.window consecutive conditions. Output is in image units.
std::vector<LandmarkFrame> sample(const DenoiserParams& params, const LandmarkFrame& ref,
                                  const ConditionSequence& conditions, const NoiseSchedule& schedule,
                                  std::uint64_t seed);

// Normalization between image-space landmark frames and network vectors.
Eigen::VectorXd normalize_frame(const DenoiserConfig& cfg, const LandmarkFrame& frame);
LandmarkFrame denormalize_frame(const DenoiserConfig& cfg, const Eigen::VectorXd& x);
// Config whose normalization maps the rest-pose template to zero.
DenoiserConfig denoiser_config_for(const ModelAsset& asset, const Camera& camera);

TrainingSet make_training_set(const DenoiserConfig& cfg, const std::vector<LandmarkFrame>& refs,
                              const std::vector<std::vector<LandmarkFrame>>& targets,
                              const std::vector<ConditionSequence>& conditions);

// Binary checkpoint ("FLAPCKPT") with config header and parameter arrays.
void save_checkpoint(const DenoiserParams& params, const std::string& path);
DenoiserParams load_checkpoint(const std::string& path);

void write_log(const std::vector<LogRecord>& log, std::ostream& out);
void append_log_file(const std::vector<LogRecord>& log, const std::string& path);

}  // namespace flap
