#include "uarm/kinematic_config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>

#include "uarm/errors.hpp"

namespace uarm {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

JointSpec joint_from_json(const nlohmann::json& j, int index) {
  JointSpec spec;
  spec.index = index;
  spec.axis = Axis::parse(j.at("axis").get<std::string>());
  spec.range_min = j.at("range_min").get<double>();
  spec.range_max = j.at("range_max").get<double>();
  const auto& off = j.at("link_offset");
  if (!off.is_array() || off.size() != 3) {
    throw ConfigError("joint " + std::to_string(index) + ": link_offset must be a 3-vector");
  }
  spec.link_offset = {off[0].get<double>(), off[1].get<double>(), off[2].get<double>()};
  return spec;
}

const nlohmann::json& builtin_registry() {
  static const nlohmann::json registry = nlohmann::json::parse(builtin_registry_json());
  return registry;
}

}  // namespace

std::string to_string(ConfigId id) {
  switch (id) {
    case ConfigId::Config1: return "config1";
    case ConfigId::Config2: return "config2";
    case ConfigId::Config3: return "config3";
  }
  return "unknown";
}

ConfigId parse_config_id(std::string_view text) {
  std::string s = lower(text);
  s.erase(std::remove_if(s.begin(), s.end(), [](char c) { return c == '-' || c == '_'; }), s.end());
  if (s == "config1" || s == "1") return ConfigId::Config1;
  if (s == "config2" || s == "2") return ConfigId::Config2;
  if (s == "config3" || s == "3") return ConfigId::Config3;
  throw ConfigNotFound("unknown config id '" + std::string(text) + "'");
}

Eigen::Vector3d Axis::vector() const {
  Eigen::Vector3d v = Eigen::Vector3d::Zero();
  v[index] = sign;
  return v;
}

std::string Axis::to_string() const {
  static constexpr char kNames[] = {'X', 'Y', 'Z'};
  return std::string(sign > 0 ? "+" : "-") + kNames[index];
}

Axis Axis::parse(std::string_view text) {
  std::string s = lower(text);
  Axis axis;
  if (!s.empty() && (s[0] == '+' || s[0] == '-')) {
    axis.sign = s[0] == '-' ? -1 : 1;
    s.erase(0, 1);
  }
  if (s == "x") {
    axis.index = 0;
  } else if (s == "y") {
    axis.index = 1;
  } else if (s == "z") {
    axis.index = 2;
  } else {
    throw ConfigError("invalid joint axis '" + std::string(text) + "'");
  }
  return axis;
}

double JointSpec::clamp(double deg) const { return std::clamp(deg, range_min, range_max); }

JointRoute ConfigDescriptor::route(int leader_joint) const {
  for (const auto& p : swap_pairs) {
    if (p.leader == leader_joint) return {p.follower, p.sign};
  }
  return {leader_joint, 1};
}

void ConfigDescriptor::validate() const {
  const auto expected_dof = id == ConfigId::Config3 ? 7u : 6u;
  if (dof != joints.size()) throw ConfigError("dof does not match joint count");
  if (dof != expected_dof) {
    throw ConfigError(to_string(id) + " must have " + std::to_string(expected_dof) + " joints");
  }
  for (std::size_t i = 0; i < joints.size(); ++i) {
    const auto& j = joints[i];
    if (j.index != static_cast<int>(i + 1)) throw ConfigError("joint indices must be 1..dof in order");
    if (!(j.range_min < j.range_max)) {
      throw ConfigError("joint " + std::to_string(j.index) + ": range_min must be < range_max");
    }
    if (j.axis.index < 0 || j.axis.index > 2 || (j.axis.sign != 1 && j.axis.sign != -1)) {
      throw ConfigError("joint " + std::to_string(j.index) + ": bad axis");
    }
    if (!j.link_offset.allFinite()) throw ConfigError("non-finite link offset");
  }
  // The swap table must be a permutation of the joints it mentions.
  const int n = static_cast<int>(dof);
  for (const auto& p : swap_pairs) {
    if (p.leader < 1 || p.leader > n || p.follower < 1 || p.follower > n || (p.sign != 1 && p.sign != -1)) {
      throw ConfigError("swap pair out of range");
    }
    const auto back = route(p.follower);
    if (back.follower != p.leader || back.sign != p.sign) {
      throw ConfigError("swap table is not an involution");
    }
  }
}

JointVector zero_vector(const ConfigDescriptor& config) {
  return JointVector{config.id, std::vector<double>(config.dof, 0.0)};
}

ConfigDescriptor config_from_json(const nlohmann::json& doc, ConfigId id) {
  try {
    if (doc.contains("configs")) {
      for (const auto& c : doc.at("configs")) {
        if (parse_config_id(c.at("id").get<std::string>()) == id) return config_from_json(c, id);
      }
      throw ConfigNotFound(to_string(id) + " not present in registry");
    }
    ConfigDescriptor config;
    config.id = parse_config_id(doc.at("id").get<std::string>());
    if (config.id != id) throw ConfigNotFound("document describes " + to_string(config.id));
    int index = 1;
    for (const auto& j : doc.at("joints")) config.joints.push_back(joint_from_json(j, index++));
    config.dof = config.joints.size();
    if (doc.contains("swap_pairs")) {
      for (const auto& p : doc.at("swap_pairs")) {
        config.swap_pairs.push_back({p.at(0).get<int>(), p.at(1).get<int>(), p.at(2).get<int>()});
      }
    }
    if (doc.contains("compatible_robots")) {
      config.compatible_robots = doc.at("compatible_robots").get<std::vector<std::string>>();
    }
    config.validate();
    return config;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
}

ConfigDescriptor load_config(ConfigId id) {
  switch (id) {
    case ConfigId::Config1:
    case ConfigId::Config2:
    case ConfigId::Config3:
      return config_from_json(builtin_registry(), id);
  }
  throw ConfigNotFound("unknown config id " + std::to_string(static_cast<int>(id)));
}

ConfigDescriptor load_config_file(const std::filesystem::path& path, ConfigId id) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(doc, id);
}

nlohmann::json to_json(const ConfigDescriptor& config) {
  nlohmann::json joints = nlohmann::json::array();
  for (const auto& j : config.joints) {
    joints.push_back({{"index", j.index},
                      {"axis", j.axis.to_string()},
                      {"range_min", j.range_min},
                      {"range_max", j.range_max},
                      {"link_offset", {j.link_offset.x(), j.link_offset.y(), j.link_offset.z()}}});
  }
  nlohmann::json swaps = nlohmann::json::array();
  for (const auto& p : config.swap_pairs) swaps.push_back({p.leader, p.follower, p.sign});
  return {{"id", to_string(config.id)},
          {"dof", config.dof},
          {"joints", joints},
          {"swap_pairs", swaps},
          {"compatible_robots", config.compatible_robots}};
}

void check_dimension(const ConfigDescriptor& config, const JointVector& q) {
  if (q.size() != config.dof) {
    throw DimensionError("expected " + std::to_string(config.dof) + " joint values, got " +
                         std::to_string(q.size()));
  }
}

JointVector clamp_to_limits(const ConfigDescriptor& config, const JointVector& q) {
  check_dimension(config, q);
  JointVector out{config.id, q.values};
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = config.joints[i].clamp(out[i]);
  return out;
}

bool within_limits(const ConfigDescriptor& config, const JointVector& q) {
  check_dimension(config, q);
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (!config.joints[i].contains(q[i])) return false;
  }
  return true;
}

EePose forward_kinematics(const ConfigDescriptor& config, const JointVector& q) {
  check_dimension(config, q);
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
  for (std::size_t i = 0; i < config.dof; ++i) {
    const auto& joint = config.joints[i];
    position += orientation * joint.link_offset;
    orientation = orientation * Eigen::Quaterniond(Eigen::AngleAxisd(q[i] * kDegToRad, joint.axis.vector()));
  }
  orientation.normalize();
  if (orientation.w() < 0.0) orientation.coeffs() *= -1.0;
  return {position, orientation};
}

const std::vector<std::string>& compatible_robots(const ConfigDescriptor& config) {
  return config.compatible_robots;
}

}  // namespace uarm
