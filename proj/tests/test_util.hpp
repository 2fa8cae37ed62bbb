#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "flap/rotation.hpp"

namespace flap::test {

inline std::string temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "flap_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

inline Vec3 random_axis_angle(std::mt19937_64& rng, double max_angle) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, max_angle);
  Vec3 axis(n(rng), n(rng), n(rng));
  return axis.normalized() * u(rng);
}

}  // namespace flap::test
