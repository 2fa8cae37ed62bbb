#include "flap/eval_metrics.hpp"

#include <algorithm>
#include <cmath>

#include "flap/binary_io.hpp"
#include "flap/error.hpp"
#include "flap/parallel.hpp"
#include "flap/rotation.hpp"
#include "flap/synth_data.hpp"

namespace flap {

namespace {

Mat3 global_rotation(const HeadCondition& c) { return axis_angle_to_matrix(Vec3(c[0], c[1], c[2])); }

bool fit_ok(const FitResult& r) { return r.converged && std::isfinite(r.residual_rms); }

std::string doubles_json(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += io::format_double(v[i]);
  }
  return s + "]";
}

}  // namespace

PoseErrorReport pose_error(const std::vector<LandmarkFrame>& frames, const ModelAsset& asset,
                           const ConditionSequence& commanded, const FitConfig& fit) {
  if (frames.size() != commanded.size()) {
    throw DimensionError("pose_error: " + std::to_string(frames.size()) + " frames but " +
                         std::to_string(commanded.size()) + " conditions");
  }
  commanded.validate();
  const SequenceFit sf = fit_sequence(asset, frames, commanded.fps, fit);
  PoseErrorReport r;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    r.per_frame.push_back(geodesic_distance(global_rotation(sf.conditions.frames[t]), global_rotation(commanded.frames[t])));
    r.fit_failed.push_back(!fit_ok(sf.results[t]));
    r.mean += r.per_frame.back();
  }
  r.mean /= static_cast<double>(frames.size());
  return r;
}

double landmark_rmse(const LandmarkFrame& pred, const LandmarkFrame& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw DimensionError("landmark_rmse: shape mismatch");
  if (pred.size() == 0) throw DimensionError("landmark_rmse: empty frame");
  return std::sqrt((pred - target).squaredNorm() / static_cast<double>(pred.size()));
}

double landmark_rmse(const std::vector<LandmarkFrame>& pred, const std::vector<LandmarkFrame>& target) {
  if (pred.size() != target.size() || pred.empty()) throw DimensionError("landmark_rmse: frame counts differ or are zero");
  double se = 0.0, n = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].rows() != target[i].rows() || pred[i].cols() != target[i].cols()) {
      throw DimensionError("landmark_rmse: shape mismatch at frame " + std::to_string(i));
    }
    se += (pred[i] - target[i]).squaredNorm();
    n += static_cast<double>(pred[i].size());
  }
  return std::sqrt(se / n);
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw DimensionError("pearson: need two equal-length series of length >= 2");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  // The mean of identical values can round away from them, so test spread directly.
  const auto [amin, amax] = std::minmax_element(a.begin(), a.end());
  const auto [bmin, bmax] = std::minmax_element(b.begin(), b.end());
  if (*amin == *amax || *bmin == *bmax || !(saa > 0.0) || !(sbb > 0.0)) throw DegenerateInputError("pearson: zero-variance input");
  return sab / std::sqrt(saa * sbb);
}

double jaw_sync(const ConditionSequence& conditions, const AudioFeatureSequence& audio) {
  audio.validate();
  if (conditions.size() != audio.size()) throw DimensionError("jaw_sync: conditions and audio differ in length");
  std::vector<double> jaw, env;
  for (std::size_t t = 0; t < conditions.size(); ++t) {
    const auto& c = conditions.frames[t];
    jaw.push_back(std::sqrt(c[15] * c[15] + c[16] * c[16] + c[17] * c[17]));
    env.push_back(audio.frames(static_cast<Eigen::Index>(t), 0));
  }
  return pearson(jaw, env);
}

DecouplingReport decoupling_score(const DenoiserParams& params, const ModelAsset& asset,
                                  const std::vector<DecouplingItem>& items, std::uint64_t seed, const FitConfig& fit) {
  if (items.empty()) throw DimensionError("decoupling_score: no items");
  const NoiseSchedule schedule = make_schedule(params.config.steps, params.config.beta_min, params.config.beta_max);
  std::vector<std::vector<double>> shifts(items.size());
  parallel_for(items.size(), [&](std::size_t i) {
    const auto& item = items[i];
    const std::uint64_t s = derive_seed(seed, i);
    const ConditionSequence swapped = swap_expression_idle(item.conditions);
    const auto a = sample(params, item.ref, item.conditions, schedule, s);
    const auto b = sample(params, item.ref, swapped, schedule, s);
    const SequenceFit fa = fit_sequence(asset, a, item.conditions.fps, fit);
    const SequenceFit fb = fit_sequence(asset, b, item.conditions.fps, fit);
    for (std::size_t t = 0; t < a.size(); ++t) {
      shifts[i].push_back(geodesic_distance(global_rotation(fa.conditions.frames[t]), global_rotation(fb.conditions.frames[t])));
    }
  });
  DecouplingReport r;
  r.swap_spec = "expression slices [3:120] replaced by the idle condition";
  for (const auto& v : shifts) r.per_frame.insert(r.per_frame.end(), v.begin(), v.end());
  r.n_frames = r.per_frame.size();
  for (double v : r.per_frame) r.mean_pose_shift += v;
  r.mean_pose_shift /= static_cast<double>(r.n_frames);
  return r;
}

std::string to_json(const DecouplingReport& r) {
  return "{\"mean_pose_shift\":" + io::format_double(r.mean_pose_shift) + ",\"n_frames\":" + std::to_string(r.n_frames) +
         ",\"swap_spec\":\"" + r.swap_spec + "\",\"per_frame\":" + doubles_json(r.per_frame) + "}\n";
}

std::string to_json(const PoseErrorReport& r) {
  std::string failed = "[";
  for (std::size_t i = 0; i < r.fit_failed.size(); ++i) failed += (i ? "," : "") + std::string(r.fit_failed[i] ? "true" : "false");
  return "{\"mean\":" + io::format_double(r.mean) + ",\"per_frame\":" + doubles_json(r.per_frame) +
         ",\"fit_failed\":" + failed + "]}\n";
}

}  // namespace flap
