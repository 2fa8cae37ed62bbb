#pragma once

// Toy audio-to-coefficient module. Synthetic audio features carry the jaw
// envelope and eyelid state; a windowed ridge regressor maps audio frames to
// 120-wide conditions. Nothing but audio enters inference.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "flap/condition.hpp"

namespace flap {

struct AudioFeatureSequence {
  Eigen::MatrixXd frames;  // n_frames x D_a
  double fps = 25.0;

  std::size_t size() const { return static_cast<std::size_t>(frames.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(frames.cols()); }
  void validate() const;
};

struct AudioSynthConfig {
  std::size_t dim = 16;
  double noise = 0.01;
  std::uint64_t seed = 0;
};

// Channel 0: 3-tap smoothed jaw rotation magnitude plus noise. Channel 1:
// mean eyelid coefficient plus noise. Other channels: noise only.
AudioFeatureSequence synth_audio(const ConditionSequence& clean, const AudioSynthConfig& cfg);

struct A2FConfig {
  std::size_t context = 2;  // frames on each side
  double ridge = 1e-6;
};

struct A2FParams {
  std::size_t context = 0;
  std::size_t audio_dim = 0;
  Eigen::MatrixXd weights;  // 120 x (audio_dim * (2 context + 1) + 1)
};

using A2FPair = std::pair<AudioFeatureSequence, ConditionSequence>;

// Closed-form ridge regression over every frame of every pair.
A2FParams train_a2f(const std::vector<A2FPair>& data, const A2FConfig& cfg = {});
// Edge frames reuse the nearest valid audio frame.
ConditionSequence infer_a2f(const A2FParams& params, const AudioFeatureSequence& audio);

// Text form {"fps", "D_a", "frames"}.
std::string serialize_audio(const AudioFeatureSequence& a);
AudioFeatureSequence deserialize_audio(std::string_view text);
void save_audio(const AudioFeatureSequence& a, const std::string& path);
AudioFeatureSequence load_audio(const std::string& path);

void save_a2f(const A2FParams& p, const std::string& path);
A2FParams load_a2f(const std::string& path);

}  // namespace flap
