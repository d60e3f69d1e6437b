#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <unistd.h>
#include <string>

#include "uarm/encoder_bus.hpp"
#include "uarm/kinematic_config.hpp"

namespace testutil {

inline std::filesystem::path source_dir() { return UARM_SOURCE_DIR; }

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  static std::uint64_t counter = 0;
  auto dir = std::filesystem::temp_directory_path() /
             ("uarm-test-" + name + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline uarm::EncoderFrame reading(uarm::ConfigId config, std::vector<double> angles, std::int64_t t_ns = 0) {
  uarm::EncoderFrame f;
  f.config = config;
  f.angles_deg = std::move(angles);
  f.timestamp_ns = t_ns;
  return f;
}

inline uarm::JointVector random_in_range(const uarm::ConfigDescriptor& config, std::mt19937_64& rng) {
  uarm::JointVector q = uarm::zero_vector(config);
  for (std::size_t i = 0; i < config.dof; ++i) {
    std::uniform_real_distribution<double> d(config.joints[i].range_min, config.joints[i].range_max);
    q[i] = d(rng);
  }
  return q;
}

// Multiple of 2^-20 in [lo, hi]; sums and differences of such values stay exact.
inline double dyadic(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_int_distribution<std::int64_t> d(static_cast<std::int64_t>(lo * 1048576.0),
                                                static_cast<std::int64_t>(hi * 1048576.0));
  return static_cast<double>(d(rng)) / 1048576.0;
}

}  // namespace testutil
