#include "flap/audio2flame.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/Cholesky>
#include <json.hpp>

#include "flap/binary_io.hpp"
#include "flap/error.hpp"

namespace flap {

void AudioFeatureSequence::validate() const {
  if (frames.rows() == 0 || frames.cols() == 0) throw DimensionError("audio: empty feature sequence");
  if (!(fps > 0.0)) throw ConfigError("audio: fps must be positive");
  if (!frames.allFinite()) throw FormatError("audio: non-finite feature value");
}

AudioFeatureSequence synth_audio(const ConditionSequence& clean, const AudioSynthConfig& cfg) {
  clean.validate();
  if (cfg.dim < 2) throw ConfigError("synth_audio: need at least 2 channels");
  const auto n = static_cast<Eigen::Index>(clean.size());
  std::vector<double> jaw(clean.size());
  for (std::size_t t = 0; t < clean.size(); ++t) {
    const auto& c = clean.frames[t];
    jaw[t] = std::sqrt(c[15] * c[15] + c[16] * c[16] + c[17] * c[17]);
  }
  AudioFeatureSequence a;
  a.fps = clean.fps;
  a.frames.resize(n, static_cast<Eigen::Index>(cfg.dim));
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, cfg.noise);
  for (Eigen::Index t = 0; t < n; ++t) {
    const std::size_t i = static_cast<std::size_t>(t);
    const std::size_t lo = i == 0 ? 0 : i - 1, hi = std::min(clean.size() - 1, i + 1);
    a.frames(t, 0) = 0.25 * jaw[lo] + 0.5 * jaw[i] + 0.25 * jaw[hi];
    a.frames(t, 1) = 0.5 * (clean.frames[i][18] + clean.frames[i][19]);
    for (Eigen::Index k = 2; k < a.frames.cols(); ++k) a.frames(t, k) = 0.0;
  }
  for (Eigen::Index t = 0; t < n; ++t) {
    for (Eigen::Index k = 0; k < a.frames.cols(); ++k) a.frames(t, k) += normal(rng);
  }
  return a;
}

namespace {

Eigen::Index feature_width(std::size_t dim, std::size_t context) {
  return static_cast<Eigen::Index>(dim * (2 * context + 1) + 1);
}

// Row-stacked windows with clamped edges, plus a trailing bias of 1.
Eigen::MatrixXd window_features(const AudioFeatureSequence& a, std::size_t context) {
  const auto n = static_cast<Eigen::Index>(a.size()), d = static_cast<Eigen::Index>(a.dim());
  const auto c = static_cast<Eigen::Index>(context);
  Eigen::MatrixXd X(n, feature_width(a.dim(), context));
  for (Eigen::Index t = 0; t < n; ++t) {
    for (Eigen::Index o = -c; o <= c; ++o) {
      const Eigen::Index src = std::clamp<Eigen::Index>(t + o, 0, n - 1);
      X.block(t, (o + c) * d, 1, d) = a.frames.row(src);
    }
    X(t, X.cols() - 1) = 1.0;
  }
  return X;
}

}  // namespace

A2FParams train_a2f(const std::vector<A2FPair>& data, const A2FConfig& cfg) {
  if (data.empty()) throw ConfigError("train_a2f: no training pairs");
  if (!(cfg.ridge >= 0.0)) throw ConfigError("train_a2f: ridge must be non-negative");
  const std::size_t dim = data.front().first.dim();
  const Eigen::Index width = feature_width(dim, cfg.context);
  Eigen::MatrixXd XtX = Eigen::MatrixXd::Zero(width, width);
  Eigen::MatrixXd XtY = Eigen::MatrixXd::Zero(width, static_cast<Eigen::Index>(kCondDim));
  std::size_t rows = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& [audio, cond] = data[i];
    audio.validate();
    cond.validate();
    if (audio.dim() != dim) throw DimensionError("train_a2f: pair " + std::to_string(i) + " has a different audio width");
    if (audio.size() != cond.size()) {
      throw DimensionError("train_a2f: pair " + std::to_string(i) + " has " + std::to_string(audio.size()) +
                           " audio frames but " + std::to_string(cond.size()) + " conditions");
    }
    const Eigen::MatrixXd X = window_features(audio, cfg.context);
    Eigen::MatrixXd Y(X.rows(), static_cast<Eigen::Index>(kCondDim));
    for (Eigen::Index t = 0; t < Y.rows(); ++t) {
      for (std::size_t k = 0; k < kCondDim; ++k) Y(t, static_cast<Eigen::Index>(k)) = cond.frames[static_cast<std::size_t>(t)][k];
    }
    XtX.noalias() += X.transpose() * X;
    XtY.noalias() += X.transpose() * Y;
    rows += static_cast<std::size_t>(X.rows());
  }
  // Ridge scaled by the frame count; the bias column is not penalized.
  for (Eigen::Index j = 0; j + 1 < width; ++j) XtX(j, j) += cfg.ridge * static_cast<double>(rows);
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(XtX);
  if (ldlt.info() != Eigen::Success) throw DegenerateInputError("train_a2f: normal equations are singular");
  A2FParams p;
  p.context = cfg.context;
  p.audio_dim = dim;
  p.weights = ldlt.solve(XtY).transpose();
  if (!p.weights.allFinite()) throw DegenerateInputError("train_a2f: solution is not finite (add ridge)");
  return p;
}

ConditionSequence infer_a2f(const A2FParams& params, const AudioFeatureSequence& audio) {
  audio.validate();
  if (audio.dim() != params.audio_dim) {
    throw DimensionError("infer_a2f: audio has " + std::to_string(audio.dim()) + " channels, model expects " +
                         std::to_string(params.audio_dim));
  }
  const Eigen::MatrixXd Y = window_features(audio, params.context) * params.weights.transpose();
  ConditionSequence out;
  out.fps = audio.fps;
  out.frames.resize(audio.size());
  for (std::size_t t = 0; t < audio.size(); ++t) {
    for (std::size_t k = 0; k < kCondDim; ++k) out.frames[t][k] = Y(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k));
  }
  return out;
}

std::string serialize_audio(const AudioFeatureSequence& a) {
  a.validate();
  std::string s = "{\"fps\":" + io::format_double(a.fps) + ",\"D_a\":" + std::to_string(a.dim()) + ",\"frames\":[";
  for (Eigen::Index t = 0; t < a.frames.rows(); ++t) {
    s += t ? ",[" : "[";
    for (Eigen::Index k = 0; k < a.frames.cols(); ++k) {
      if (k) s += ",";
      s += io::format_double(a.frames(t, k));
    }
    s += "]";
  }
  return s + "]}\n";
}

AudioFeatureSequence deserialize_audio(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text.begin(), text.end());
    AudioFeatureSequence a;
    a.fps = j.at("fps").get<double>();
    const auto d = j.at("D_a").get<std::size_t>();
    const auto& fr = j.at("frames");
    a.frames.resize(static_cast<Eigen::Index>(fr.size()), static_cast<Eigen::Index>(d));
    for (std::size_t t = 0; t < fr.size(); ++t) {
      if (fr[t].size() != d) throw FormatError("audio file: frame " + std::to_string(t) + " does not have D_a values");
      for (std::size_t k = 0; k < d; ++k) a.frames(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) = fr[t][k].get<double>();
    }
    a.validate();
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("audio file: ") + e.what());
  }
}

void save_audio(const AudioFeatureSequence& a, const std::string& path) { io::write_text_file(path, serialize_audio(a)); }

AudioFeatureSequence load_audio(const std::string& path) { return deserialize_audio(io::read_text_file(path)); }

void save_a2f(const A2FParams& p, const std::string& path) {
  std::ostringstream os;
  io::BinaryWriter w(os);
  w.magic("FLAPA2F");
  w.u64(1);
  w.u64(p.context);
  w.u64(p.audio_dim);
  w.u64(static_cast<std::uint64_t>(p.weights.rows()));
  w.u64(static_cast<std::uint64_t>(p.weights.cols()));
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = p.weights;
  w.f64s({rm.data(), static_cast<std::size_t>(rm.size())});
  io::write_file_bytes(path, os.str());
}

A2FParams load_a2f(const std::string& path) {
  const auto bytes = io::read_file_bytes(path);
  std::istringstream is(std::string(bytes.begin(), bytes.end()));
  io::BinaryReader r(is, "a2f model " + path);
  r.expect_magic("FLAPA2F");
  if (r.u64() != 1) throw FormatError("a2f model " + path + ": unsupported version");
  A2FParams p;
  p.context = r.u64();
  p.audio_dim = r.u64();
  const auto rows = r.u64(), cols = r.u64();
  if (p.context > 1000 || p.audio_dim > 100000 || rows != kCondDim ||
      cols != static_cast<std::uint64_t>(feature_width(p.audio_dim, p.context))) {
    throw FormatError("a2f model " + path + ": inconsistent shape");
  }
  const auto v = r.f64s(rows * cols);
  r.expect_end();
  p.weights = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  return p;
}

}  // namespace flap
