#include "flap/condition.hpp"

#include <algorithm>
#include <cmath>

#include "flap/error.hpp"

namespace flap {

namespace {

using namespace cond_slice;

Vec3 get3(const HeadCondition& c, std::size_t at) { return Vec3(c[at], c[at + 1], c[at + 2]); }

void put3(HeadCondition& c, std::size_t at, const Vec3& v) {
  c[at] = v.x();
  c[at + 1] = v.y();
  c[at + 2] = v.z();
}

Rot6 get6(const HeadCondition& c, std::size_t at) {
  Rot6 r;
  for (std::size_t i = 0; i < 6; ++i) r[i] = c[at + i];
  return r;
}

void put6(HeadCondition& c, std::size_t at, const Rot6& r) {
  for (std::size_t i = 0; i < 6; ++i) c[at + i] = r[i];
}

}  // namespace

void ConditionSequence::validate() const {
  if (frames.empty()) throw Error("condition sequence is empty");
  if (!(fps > 0.0) || !std::isfinite(fps)) throw Error("condition sequence: fps must be positive");
  for (std::size_t t = 0; t < frames.size(); ++t) {
    for (double v : frames[t]) {
      if (!std::isfinite(v)) throw Error("condition sequence: non-finite value in frame " + std::to_string(t));
    }
  }
}

HeadCondition encode(const HeadCoefficients& coeffs) {
  if (static_cast<std::size_t>(coeffs.psi_exp.size()) > kExprWidth) {
    throw DimensionError("encode: psi_exp has more than " + std::to_string(kExprWidth) + " entries");
  }
  HeadCondition c{};
  put3(c, kGlobal.begin, coeffs.theta_global);
  put6(c, kEyes.begin, rot6d_from_axis_angle(coeffs.theta_eye_l));
  put6(c, kEyes.begin + 6, rot6d_from_axis_angle(coeffs.theta_eye_r));
  put3(c, kJaw.begin, coeffs.theta_jaw);
  c[kEyelids.begin] = coeffs.psi_eyelids[0];
  c[kEyelids.begin + 1] = coeffs.psi_eyelids[1];
  for (Eigen::Index i = 0; i < coeffs.psi_exp.size(); ++i) c[kExpr.begin + static_cast<std::size_t>(i)] = coeffs.psi_exp[i];
  return c;
}

HeadCoefficients decode(const HeadCondition& cond, const Eigen::VectorXd& beta, std::size_t n_expr) {
  if (n_expr > kExprWidth) throw DimensionError("decode: n_expr exceeds " + std::to_string(kExprWidth));
  HeadCoefficients h;
  h.beta = beta;
  h.psi_exp.resize(static_cast<Eigen::Index>(n_expr));
  for (std::size_t i = 0; i < n_expr; ++i) h.psi_exp[static_cast<Eigen::Index>(i)] = cond[kExpr.begin + i];
  h.psi_eyelids = Eigen::Vector2d(cond[kEyelids.begin], cond[kEyelids.begin + 1]);
  h.theta_global = get3(cond, kGlobal.begin);
  h.theta_jaw = get3(cond, kJaw.begin);
  h.theta_neck = Vec3::Zero();
  h.theta_eye_l = matrix_to_axis_angle(rot6d_to_matrix(get6(cond, kEyes.begin)));
  h.theta_eye_r = matrix_to_axis_angle(rot6d_to_matrix(get6(cond, kEyes.begin + 6)));
  return h;
}

HeadCondition idle_condition() {
  HeadCondition c{};
  const Rot6 eye = rot6d_from_matrix(Mat3::Identity());
  put6(c, kEyes.begin, eye);
  put6(c, kEyes.begin + 6, eye);
  return c;
}

ConditionSequence apply_pose_edit(const ConditionSequence& seq, const PoseEdit& edit) {
  const std::size_t n = seq.size();
  if (edit.mode == PoseEditMode::Fixed) {
    if (edit.angles.size() != 1) throw DimensionError("pose edit: fixed mode takes exactly one angle");
  } else if (edit.angles.size() != n) {
    throw DimensionError("pose edit: " + std::to_string(edit.angles.size()) + " angles for " + std::to_string(n) +
                         " frames");
  }
  for (const auto& a : edit.angles) {
    if (!a.allFinite()) throw Error("pose edit: non-finite angle");
  }
  ConditionSequence out = seq;
  for (std::size_t t = 0; t < n; ++t) {
    auto& f = out.frames[t];
    switch (edit.mode) {
      case PoseEditMode::Overlay: {
        const Mat3 R = axis_angle_to_matrix(edit.angles[t]) * axis_angle_to_matrix(get3(f, kGlobal.begin));
        put3(f, kGlobal.begin, matrix_to_axis_angle(R));
        break;
      }
      case PoseEditMode::Absolute:
        put3(f, kGlobal.begin, edit.angles[t]);
        break;
      case PoseEditMode::Fixed:
        put3(f, kGlobal.begin, edit.angles[0]);
        break;
    }
  }
  return out;
}

ConditionSequence swap_expression(const ConditionSequence& target, const ConditionSequence& source) {
  if (source.size() != 1 && source.size() != target.size()) {
    throw DimensionError("swap_expression: source has " + std::to_string(source.size()) + " frames, target has " +
                         std::to_string(target.size()));
  }
  ConditionSequence out = target;
  for (std::size_t t = 0; t < out.size(); ++t) {
    const auto& src = source.frames[source.size() == 1 ? 0 : t];
    std::copy(src.begin() + kEyes.begin, src.end(), out.frames[t].begin() + kEyes.begin);
  }
  return out;
}

ConditionSequence swap_expression_idle(const ConditionSequence& target) {
  ConditionSequence idle;
  idle.frames = {idle_condition()};
  idle.fps = target.fps;
  return swap_expression(target, idle);
}

ConditionSequence resample(const ConditionSequence& seq, double target_fps) {
  seq.validate();
  if (!(target_fps > 0.0) || !std::isfinite(target_fps)) throw Error("resample: target fps must be positive");
  if (target_fps == seq.fps) return seq;

  const std::size_t n = seq.size();
  const double duration = static_cast<double>(n - 1) / seq.fps;
  const auto n_out = static_cast<std::size_t>(std::floor(duration * target_fps + 1e-9)) + 1;
  ConditionSequence out;
  out.fps = target_fps;
  out.frames.resize(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double pos = static_cast<double>(i) * seq.fps / target_fps;
    auto i0 = static_cast<std::size_t>(std::floor(pos));
    if (i0 >= n - 1) i0 = n - 1;
    const std::size_t i1 = std::min(i0 + 1, n - 1);
    const double w = std::clamp(pos - static_cast<double>(i0), 0.0, 1.0);
    const auto& a = seq.frames[i0];
    const auto& b = seq.frames[i1];
    auto& f = out.frames[i];
    if (w == 0.0 || i0 == i1) {
      f = a;
      continue;
    }
    for (std::size_t k = kEyelids.begin; k < kCondDim; ++k) f[k] = (1.0 - w) * a[k] + w * b[k];
    put3(f, kGlobal.begin, slerp_axis_angle(get3(a, kGlobal.begin), get3(b, kGlobal.begin), w));
    put3(f, kJaw.begin, slerp_axis_angle(get3(a, kJaw.begin), get3(b, kJaw.begin), w));
    for (std::size_t e = 0; e < 2; ++e) {
      const std::size_t at = kEyes.begin + 6 * e;
      const Quat q = slerp(matrix_to_quat(rot6d_to_matrix(get6(a, at))), matrix_to_quat(rot6d_to_matrix(get6(b, at))), w);
      put6(f, at, rot6d_from_matrix(quat_to_matrix(q)));
    }
  }
  return out;
}

}  // namespace flap
