#pragma once

// Pose accuracy, landmark error, a jaw/audio synchrony proxy, and the
// pose/expression decoupling score.

#include <string>
#include <vector>

#include "flap/audio2flame.hpp"
#include "flap/diffusion.hpp"
#include "flap/fitting.hpp"

namespace flap {

struct PoseErrorReport {
  double mean = 0.0;  // radians
  std::vector<double> per_frame;
  std::vector<bool> fit_failed;  // LM did not converge or residual not finite
};

// Re-fits `frames` as a sequence and compares the recovered global rotation
// with the commanded one, frame by frame (SO(3) geodesic distance).
PoseErrorReport pose_error(const std::vector<LandmarkFrame>& frames, const ModelAsset& asset,
                           const ConditionSequence& commanded, const FitConfig& fit = {});

double landmark_rmse(const LandmarkFrame& pred, const LandmarkFrame& target);
double landmark_rmse(const std::vector<LandmarkFrame>& pred, const std::vector<LandmarkFrame>& target);

// Pearson correlation between the jaw rotation magnitude of `conditions` and
// audio channel 0. Throws DegenerateInputError when either has zero variance.
double jaw_sync(const ConditionSequence& conditions, const AudioFeatureSequence& audio);
double pearson(const std::vector<double>& a, const std::vector<double>& b);

struct DecouplingItem {
  LandmarkFrame ref;
  ConditionSequence conditions;
};

struct DecouplingReport {
  double mean_pose_shift = 0.0;  // radians
  std::vector<double> per_frame;
  std::string swap_spec;
  std::size_t n_frames = 0;
};

// Samples every item with its own conditions and with the expression slices
// replaced by the idle condition, using the same seed for both, re-fits both
// outputs, and averages the geodesic distance between the recovered global
// rotations.
DecouplingReport decoupling_score(const DenoiserParams& params, const ModelAsset& asset,
                                  const std::vector<DecouplingItem>& items, std::uint64_t seed,
                                  const FitConfig& fit = {});

std::string to_json(const DecouplingReport& r);
std::string to_json(const PoseErrorReport& r);

}  // namespace flap
