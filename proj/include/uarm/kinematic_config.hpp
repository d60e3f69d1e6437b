#pragma once

#include <Eigen/Geometry>
#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace uarm {

enum class ConfigId { Config1, Config2, Config3 };

std::string to_string(ConfigId id);
// Accepts "config1", "Config1", "config-1" and "1".
ConfigId parse_config_id(std::string_view text);

// Joint rotation axis in the parent frame: one of +-X, +-Y, +-Z.
struct Axis {
  int index = 2;  // 0=X, 1=Y, 2=Z
  int sign = 1;   // +1 or -1

  Eigen::Vector3d vector() const;
  std::string to_string() const;
  static Axis parse(std::string_view text);
  friend bool operator==(const Axis&, const Axis&) = default;
};

struct JointSpec {
  int index = 0;  // 1-based
  Axis axis;
  double range_min = 0.0;  // degrees
  double range_max = 0.0;  // degrees
  Eigen::Vector3d link_offset = Eigen::Vector3d::Zero();  // meters, from previous joint frame

  bool contains(double deg) const { return deg >= range_min && deg <= range_max; }
  double clamp(double deg) const;
};

// (leader joint, follower joint, sign) with 1-based indices.
struct SwapPair {
  int leader = 0;
  int follower = 0;
  int sign = 1;
  friend bool operator==(const SwapPair&, const SwapPair&) = default;
};

// Resolved routing of one leader joint onto the follower.
struct JointRoute {
  int follower = 0;  // 1-based
  int sign = 1;
};

struct ConfigDescriptor {
  ConfigId id = ConfigId::Config1;
  std::size_t dof = 0;
  std::vector<JointSpec> joints;
  std::vector<SwapPair> swap_pairs;
  std::vector<std::string> compatible_robots;

  const JointSpec& joint(int one_based) const { return joints.at(static_cast<std::size_t>(one_based - 1)); }

  // Route for a leader joint: identity unless listed in swap_pairs.
  JointRoute route(int leader_joint) const;

  // Throws ConfigError if any invariant is broken.
  void validate() const;
};

struct JointVector {
  ConfigId config = ConfigId::Config1;
  std::vector<double> values;  // degrees

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
  friend bool operator==(const JointVector&, const JointVector&) = default;
};

JointVector zero_vector(const ConfigDescriptor& config);

struct EePose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();  // w-first when serialized
};

ConfigDescriptor load_config(ConfigId id);

// Loads a descriptor from a JSON document. `doc` is either a single config
// object or a registry {"configs": [...]}, in which case `id` selects one.
ConfigDescriptor config_from_json(const nlohmann::json& doc, ConfigId id);
ConfigDescriptor load_config_file(const std::filesystem::path& path, ConfigId id);
nlohmann::json to_json(const ConfigDescriptor& config);

// Throws DimensionError when q does not match the config's dof.
void check_dimension(const ConfigDescriptor& config, const JointVector& q);

JointVector clamp_to_limits(const ConfigDescriptor& config, const JointVector& q);
bool within_limits(const ConfigDescriptor& config, const JointVector& q);

EePose forward_kinematics(const ConfigDescriptor& config, const JointVector& q);

const std::vector<std::string>& compatible_robots(const ConfigDescriptor& config);

// The embedded registry JSON (built from data/configs.json).
std::string_view builtin_registry_json();

constexpr std::array<ConfigId, 3> kAllConfigs{ConfigId::Config1, ConfigId::Config2, ConfigId::Config3};

}  // namespace uarm
