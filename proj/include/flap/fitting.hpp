#pragma once

// Landmark tracker: recovers head coefficients and a weak-perspective camera
// from 2D landmarks with Levenberg-Marquardt on central-difference Jacobians.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "flap/condition.hpp"
#include "flap/head_model.hpp"

namespace flap {

struct FitConfig {
  int max_iters = 200;
  double lambda_init = 1e-3;
  double lambda_up = 10.0;
  double lambda_down = 0.1;
  double reg_psi = 1e-4;   // ridge on expression and eyelid coefficients
  double reg_beta = 1e-4;  // ridge on identity coefficients
  double tol_step = 1e-10;
  double tol_residual = 1e-14;
  double fd_step = 1e-6;  // relative central-difference step
  // Cold starts first align pose and camera from several yaw guesses.
  std::vector<double> yaw_starts{-0.8, -0.4, 0.0, 0.4, 0.8};

  void validate() const;
};

struct FitResult {
  HeadCoefficients coeffs;
  Camera camera;
  double residual_rms = 0.0;  // over all 2K landmark coordinates, image units
  double objective = 0.0;     // data term plus ridge terms
  int iterations = 0;
  bool converged = false;
};

// Central differences, one column per coordinate; step h * max(1, |x_i|).
Eigen::MatrixXd numeric_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double h);

// Bounding-box camera guess mapping the rest-pose template landmarks onto `landmarks`.
Camera initial_camera(const ModelAsset& asset, const LandmarkFrame& landmarks);

// Without `init` the solve starts from zero coefficients and the bounding-box
// camera, after a rigid multi-start alignment. With `init` it warm-starts.
FitResult fit_frame(const ModelAsset& asset, const LandmarkFrame& landmarks, const std::optional<FitResult>& init,
                    const FitConfig& cfg = {});

struct SequenceFit {
  std::vector<FitResult> results;
  ConditionSequence conditions;
};

// Frame t warm-starts from frame t-1; identity is fit on frame 0 only.
SequenceFit fit_sequence(const ModelAsset& asset, const std::vector<LandmarkFrame>& frames, double fps,
                         const FitConfig& cfg = {});

struct LandmarkSequence {
  double fps = 25.0;
  std::vector<LandmarkFrame> frames;
};

// Text form: {"fps", "K", "frames": [[[x, y], ...], ...]}.
std::string serialize_landmarks(const LandmarkSequence& seq);
LandmarkSequence deserialize_landmarks(std::string_view text);
void save_landmarks(const LandmarkSequence& seq, const std::string& path);
LandmarkSequence load_landmarks(const std::string& path);

}  // namespace flap
