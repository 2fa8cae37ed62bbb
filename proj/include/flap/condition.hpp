#pragma once

// The 120-dim per-frame head condition and the user-control edits on
// sequences of it. Layout:
//   [0:3]    theta_globalR  axis-angle
//   [3:15]   theta_eyes     two 6D rotations (left, right)
//   [15:18]  theta_jaw      axis-angle
//   [18:20]  psi_eyelids
//   [20:120] psi_exp        zero-padded when the asset has fewer components

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "flap/head_model.hpp"

namespace flap {

inline constexpr std::size_t kCondDim = 120;
inline constexpr std::size_t kExprWidth = 100;

struct Slice {
  std::size_t begin;
  std::size_t end;
  std::size_t size() const { return end - begin; }
};

namespace cond_slice {
inline constexpr Slice kGlobal{0, 3};
inline constexpr Slice kEyes{3, 15};
inline constexpr Slice kJaw{15, 18};
inline constexpr Slice kEyelids{18, 20};
inline constexpr Slice kExpr{20, 120};
}  // namespace cond_slice

using HeadCondition = std::array<double, kCondDim>;

struct ConditionSequence {
  std::vector<HeadCondition> frames;
  double fps = 25.0;

  std::size_t size() const { return frames.size(); }
  // Throws Error when empty, fps is not positive, or a value is non-finite.
  void validate() const;
};

enum class PoseEditMode { Overlay, Absolute, Fixed };

struct PoseEdit {
  PoseEditMode mode = PoseEditMode::Overlay;
  // One angle per frame (overlay, absolute) or exactly one angle (fixed).
  std::vector<Vec3> angles;
};

HeadCondition encode(const HeadCoefficients& coeffs);

// beta is passed through; psi_exp is truncated to n_expr; neck is zero.
HeadCoefficients decode(const HeadCondition& cond, const Eigen::VectorXd& beta, std::size_t n_expr);

// Neutral face: zero jaw, eyelids and expression, identity eyes, zero pose.
HeadCondition idle_condition();

ConditionSequence apply_pose_edit(const ConditionSequence& seq, const PoseEdit& edit);

// Replaces slices [3:120] of every target frame. `source` has one frame
// (broadcast) or as many frames as `target`.
ConditionSequence swap_expression(const ConditionSequence& target, const ConditionSequence& source);
ConditionSequence swap_expression_idle(const ConditionSequence& target);

// Frame i of the output sits at time i / target_fps. Rotation slices are
// interpolated on SO(3), the rest linearly.
ConditionSequence resample(const ConditionSequence& seq, double target_fps);

// Text form: {"version", "fps", "layout", "frames"} with 17 significant digits.
std::string serialize_text(const ConditionSequence& seq);
ConditionSequence deserialize_text(std::string_view text);
// Binary form: "FLAPCOND" magic, little-endian u64 / f64 fields.
std::string serialize_binary(const ConditionSequence& seq);
ConditionSequence deserialize_binary(std::string_view bytes);

// Paths ending in ".bin" use the binary form; loading sniffs the magic.
void save_conditions(const ConditionSequence& seq, const std::string& path);
ConditionSequence load_conditions(const std::string& path);

}  // namespace flap
