#include "flap/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>
#include <sstream>

#include <json.hpp>

#include "flap/binary_io.hpp"
#include "flap/error.hpp"
#include "flap/parallel.hpp"

namespace flap {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer over the combined value.
  std::uint64_t z = seed ^ (index * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void TrajectoryConfig::validate() const {
  if (n_frames < 1) throw ConfigError("trajectory: n_frames must be at least 1");
  if (!(fps > 0.0)) throw ConfigError("trajectory: fps must be positive");
  if (!(pose_amplitude >= 0.0) || !(expr_amplitude >= 0.0) || !(identity_amplitude >= 0.0)) {
    throw ConfigError("trajectory: amplitudes must be non-negative");
  }
  if (!(smoothness > 0.0)) throw ConfigError("trajectory: smoothness must be positive");
}

ChannelAmplitudes channel_amplitudes(const TrajectoryConfig& cfg) {
  return {3.0 * cfg.pose_amplitude, 0.75 * cfg.pose_amplitude, 0.5 * cfg.pose_amplitude, 0.375 * cfg.expr_amplitude};
}

double yaw_stationary_variance(const TrajectoryConfig& cfg) {
  const double drift = channel_amplitudes(cfg).yaw_drift;
  return cfg.pose_amplitude * cfg.pose_amplitude + 0.5 * drift * drift;
}

namespace {

// Stationary Ornstein-Uhlenbeck path with unit-free time constant tau.
std::vector<double> ou_path(std::mt19937_64& rng, std::size_t n, double amp, double tau) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double a = std::exp(-1.0 / tau);
  const double kick = amp * std::sqrt(1.0 - a * a);
  std::vector<double> x(n);
  x[0] = amp * normal(rng);
  for (std::size_t i = 1; i < n; ++i) x[i] = a * x[i - 1] + kick * normal(rng);
  return x;
}

}  // namespace

CoefficientSequence sample_trajectory(const ModelAsset& asset, const TrajectoryConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const std::size_t n = cfg.n_frames;
  const double tau = cfg.smoothness;
  const ChannelAmplitudes amp = channel_amplitudes(cfg);

  CoefficientSequence seq;
  seq.fps = cfg.fps;
  seq.frames.assign(n, HeadCoefficients::zeros(asset));

  for (int c = 0; c < 3; ++c) {
    const auto p = ou_path(rng, n, cfg.pose_amplitude, tau);
    for (std::size_t t = 0; t < n; ++t) seq.frames[t].theta_global[c] = p[t];
  }
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double phase = 2.0 * std::numbers::pi * uni(rng);
  const double period = 30.0 + 30.0 * uni(rng);
  for (std::size_t t = 0; t < n; ++t) {
    seq.frames[t].theta_global[1] +=
        amp.yaw_drift * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / period + phase);
  }
  const auto jaw = ou_path(rng, n, amp.jaw, 0.5 * tau);
  for (std::size_t t = 0; t < n; ++t) seq.frames[t].theta_jaw[0] = std::abs(jaw[t]);
  for (int c = 0; c < 6; ++c) {
    const auto p = ou_path(rng, n, amp.eyes, tau);
    for (std::size_t t = 0; t < n; ++t) (c < 3 ? seq.frames[t].theta_eye_l : seq.frames[t].theta_eye_r)[c % 3] = p[t];
  }
  for (std::size_t k = 0; k < asset.n_expr; ++k) {
    const auto p = ou_path(rng, n, cfg.expr_amplitude, tau);
    for (std::size_t t = 0; t < n; ++t) seq.frames[t].psi_exp[static_cast<Eigen::Index>(k)] = p[t];
  }
  for (int k = 0; k < 2; ++k) {
    const auto p = ou_path(rng, n, amp.eyelids, tau);
    for (std::size_t t = 0; t < n; ++t) seq.frames[t].psi_eyelids[k] = p[t];
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd beta(static_cast<Eigen::Index>(asset.n_shape));
  for (auto& b : beta) b = cfg.identity_amplitude * normal(rng);
  for (auto& f : seq.frames) f.beta = beta;
  return seq;
}

void LeakageConfig::validate(std::size_t n_expr) const {
  if (static_cast<std::size_t>(direction.size()) != n_expr) {
    throw DimensionError("leakage: direction has " + std::to_string(direction.size()) + " entries, expected " +
                         std::to_string(n_expr));
  }
  if (std::abs(direction.norm() - 1.0) > 1e-9) throw ConfigError("leakage: direction must be a unit vector");
  if (!(gain >= 0.0)) throw ConfigError("leakage: gain must be non-negative");
  if (!(yaw_threshold >= 0.0)) throw ConfigError("leakage: yaw threshold must be non-negative");
}

Eigen::VectorXd leakage_direction(std::size_t n_expr, std::uint64_t seed) {
  if (n_expr == 0) throw ConfigError("leakage: no expression coefficients");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd u(static_cast<Eigen::Index>(n_expr));
  for (auto& v : u) v = normal(rng);
  return u / u.norm();
}

LeakageConfig default_leakage(std::size_t n_expr, std::uint64_t seed) {
  LeakageConfig c;
  c.direction = leakage_direction(n_expr, seed);
  c.seed = seed;
  return c;
}

CoefficientSequence apply_leakage(const CoefficientSequence& seq, const LeakageConfig& leak) {
  CoefficientSequence out = seq;
  for (auto& f : out.frames) {
    leak.validate(static_cast<std::size_t>(f.psi_exp.size()));
    const double yaw = f.theta_global[1];
    const double excess = std::max(0.0, std::abs(yaw) - leak.yaw_threshold);
    if (excess == 0.0) continue;
    const double sign = yaw > 0.0 ? 1.0 : -1.0;
    f.psi_exp += (leak.gain * excess * sign) * leak.direction;
  }
  return out;
}

double motion_variance(const ConditionSequence& seq) {
  if (seq.frames.empty()) throw Error("motion_variance: empty sequence");
  const double n = static_cast<double>(seq.size());
  double total = 0.0;
  for (std::size_t c = cond_slice::kGlobal.begin; c < cond_slice::kGlobal.end; ++c) {
    double mean = 0.0;
    for (const auto& f : seq.frames) mean += f[c];
    mean /= n;
    double ss = 0.0;
    for (const auto& f : seq.frames) ss += (f[c] - mean) * (f[c] - mean);
    total += ss / n;
  }
  return total;
}

std::vector<std::size_t> select_top_variance_indices(const Dataset& data, double fraction) {
  if (data.empty()) throw Error("select_top_variance: empty dataset");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("select_top_variance: fraction must lie in (0, 1]");
  std::vector<std::pair<double, std::size_t>> v;
  v.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) v.emplace_back(motion_variance(data[i].clean_conditions), i);
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  const double want = fraction * static_cast<double>(data.size());
  auto k = static_cast<std::size_t>(std::ceil(want - 1e-9));
  k = std::clamp<std::size_t>(k, 1, data.size());
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < k; ++i) idx.push_back(v[i].second);
  std::sort(idx.begin(), idx.end());
  return idx;
}

Dataset select_top_variance(const Dataset& data, double fraction) {
  Dataset out;
  for (auto i : select_top_variance_indices(data, fraction)) out.push_back(data[i]);
  return out;
}

Dataset build_dataset(const ModelAsset& asset, std::size_t n_seq, const TrajectoryConfig& traj,
                      const LeakageConfig& leak, const Camera& camera) {
  if (n_seq < 1) throw ConfigError("build_dataset: n_seq must be at least 1");
  traj.validate();
  leak.validate(asset.n_expr);
  Dataset data(n_seq);
  parallel_for(n_seq, [&](std::size_t i) {
    TrajectoryConfig cfg = traj;
    cfg.seed = derive_seed(traj.seed, i);
    const CoefficientSequence clean = sample_trajectory(asset, cfg);
    const CoefficientSequence leaked = apply_leakage(clean, leak);
    Sample& s = data[i];
    s.conditions.fps = s.clean_conditions.fps = traj.fps;
    for (std::size_t t = 0; t < clean.frames.size(); ++t) {
      s.target_frames.push_back(evaluate_landmarks(asset, clean.frames[t], camera));
      s.clean_conditions.frames.push_back(encode(clean.frames[t]));
      s.conditions.frames.push_back(encode(leaked.frames[t]));
    }
    // A separate stream keeps the reference choice independent of trajectory draws.
    std::mt19937_64 pick(derive_seed(cfg.seed, 0x5245ULL));
    std::uniform_int_distribution<std::size_t> frame(0, clean.frames.size() - 1);
    s.ref_frame = s.target_frames[frame(pick)];
  });
  return data;
}

namespace {

std::string sample_stem(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%05zu", i);
  return buf;
}

}  // namespace

void save_dataset(const Dataset& data, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ostringstream m;
  m << "{\n  \"version\": 1,\n  \"samples\": [\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto stem = sample_stem(i);
    const Sample& s = data[i];
    save_landmarks({s.conditions.fps, s.target_frames}, (fs::path(dir) / (stem + "_targets.json")).string());
    save_landmarks({s.conditions.fps, {s.ref_frame}}, (fs::path(dir) / (stem + "_ref.json")).string());
    save_conditions(s.conditions, (fs::path(dir) / (stem + "_cond.json")).string());
    save_conditions(s.clean_conditions, (fs::path(dir) / (stem + "_clean.json")).string());
    m << "    {\"targets\": \"" << stem << "_targets.json\", \"ref\": \"" << stem << "_ref.json\", \"conditions\": \""
      << stem << "_cond.json\", \"clean_conditions\": \"" << stem << "_clean.json\"}"
      << (i + 1 < data.size() ? ",\n" : "\n");
  }
  m << "  ]\n}\n";
  io::write_text_file((fs::path(dir) / "manifest.json").string(), m.str());
}

Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_text_file((fs::path(dir) / "manifest.json").string()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset manifest: ") + e.what());
  }
  Dataset data;
  try {
    for (const auto& e : j.at("samples")) {
      Sample s;
      s.target_frames = load_landmarks((fs::path(dir) / e.at("targets").get<std::string>()).string()).frames;
      const auto ref = load_landmarks((fs::path(dir) / e.at("ref").get<std::string>()).string());
      if (ref.frames.size() != 1) throw FormatError("dataset: reference file must hold one frame");
      s.ref_frame = ref.frames[0];
      s.conditions = load_conditions((fs::path(dir) / e.at("conditions").get<std::string>()).string());
      s.clean_conditions = load_conditions((fs::path(dir) / e.at("clean_conditions").get<std::string>()).string());
      if (s.conditions.size() != s.target_frames.size() || s.clean_conditions.size() != s.target_frames.size()) {
        throw FormatError("dataset: sample lengths disagree");
      }
      data.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset manifest: ") + e.what());
  }
  if (data.empty()) throw FormatError("dataset: no samples");
  return data;
}

}  // namespace flap
