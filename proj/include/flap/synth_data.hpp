#pragma once

// Synthetic training corpus: smooth random coefficient trajectories, the
// monocular pose-to-expression leakage, landmark rendering, and the
// motion-variance filter.

#include <cstdint>
#include <string>
#include <vector>

#include "flap/condition.hpp"
#include "flap/fitting.hpp"
#include "flap/head_model.hpp"

namespace flap {

struct TrajectoryConfig {
  std::size_t n_frames = 40;
  double fps = 25.0;
  double pose_amplitude = 0.2;  // radians, stationary std of each global-rotation channel
  double expr_amplitude = 0.8;  // stationary std of each expression coefficient
  double smoothness = 8.0;      // OU time constant, frames
  // Identity coefficients are drawn once per sequence with this std.
  double identity_amplitude = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Per-channel amplitudes derived from a TrajectoryConfig.
struct ChannelAmplitudes {
  double yaw_drift;  // amplitude of the slow sinusoid added to yaw
  double jaw;        // jaw opening, OU at half the time constant, folded to >= 0
  double eyes;
  double eyelids;
};
ChannelAmplitudes channel_amplitudes(const TrajectoryConfig& cfg);

// Stationary variance of the yaw channel: OU part plus the sinusoid's mean square.
double yaw_stationary_variance(const TrajectoryConfig& cfg);

struct CoefficientSequence {
  std::vector<HeadCoefficients> frames;
  double fps = 25.0;
};

CoefficientSequence sample_trajectory(const ModelAsset& asset, const TrajectoryConfig& cfg);

struct LeakageConfig {
  double yaw_threshold = 0.35;
  double gain = 0.5;
  Eigen::VectorXd direction;  // unit vector over the asset's expression coefficients
  std::uint64_t seed = 0;

  void validate(std::size_t n_expr) const;
};

// Gaussian direction normalized to unit length, drawn from `seed`.
Eigen::VectorXd leakage_direction(std::size_t n_expr, std::uint64_t seed);
LeakageConfig default_leakage(std::size_t n_expr, std::uint64_t seed);

// psi' = psi + g * max(0, |yaw| - tau) * sign(yaw) * u, yaw = theta_global[1].
CoefficientSequence apply_leakage(const CoefficientSequence& seq, const LeakageConfig& leak);

// Sum over the three global-rotation channels of the population variance.
double motion_variance(const ConditionSequence& seq);

struct Sample {
  LandmarkFrame ref_frame;
  std::vector<LandmarkFrame> target_frames;
  ConditionSequence conditions;        // after leakage
  ConditionSequence clean_conditions;  // ground truth
};

using Dataset = std::vector<Sample>;

// Indices of the ceil(fraction * N) samples with the largest motion variance
// of their clean conditions, ties to the lower index, in ascending index order.
std::vector<std::size_t> select_top_variance_indices(const Dataset& data, double fraction);
Dataset select_top_variance(const Dataset& data, double fraction);

// Sequence i uses its own generator seeded from (traj.seed, i), so samples
// are independent of thread count.
Dataset build_dataset(const ModelAsset& asset, std::size_t n_seq, const TrajectoryConfig& traj,
                      const LeakageConfig& leak, const Camera& camera);

// Directory with manifest.json plus per-sample landmark and condition files.
void save_dataset(const Dataset& data, const std::string& dir);
Dataset load_dataset(const std::string& dir);

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace flap
