#pragma once

// Reference implementations that share no code with the library (no Eigen,
// routing spelled out by hand).

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

using Mat4 = std::array<std::array<double, 4>, 4>;

inline Mat4 identity() {
  Mat4 m{};
  for (int i = 0; i < 4; ++i) m[i][i] = 1.0;
  return m;
}

inline Mat4 multiply(const Mat4& a, const Mat4& b) {
  Mat4 c{};
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      double s = 0.0;
      for (int k = 0; k < 4; ++k) s += a[i][k] * b[k][j];
      c[i][j] = s;
    }
  }
  return c;
}

inline Mat4 translation(double x, double y, double z) {
  Mat4 m = identity();
  m[0][3] = x;
  m[1][3] = y;
  m[2][3] = z;
  return m;
}

// Rotation about a principal axis (0=X, 1=Y, 2=Z) with sign +-1.
inline Mat4 rotation(int axis, int sign, double degrees) {
  const double t = sign * degrees * M_PI / 180.0;
  const double c = std::cos(t);
  const double s = std::sin(t);
  Mat4 m = identity();
  switch (axis) {
    case 0:
      m[1][1] = c, m[1][2] = -s, m[2][1] = s, m[2][2] = c;
      break;
    case 1:
      m[0][0] = c, m[0][2] = s, m[2][0] = -s, m[2][2] = c;
      break;
    default:
      m[0][0] = c, m[0][1] = -s, m[1][0] = s, m[1][1] = c;
      break;
  }
  return m;
}

struct Link {
  int axis = 2;
  int sign = 1;
  std::array<double, 3> offset{};
};

inline Mat4 chain(const std::vector<Link>& links, const std::vector<double>& q_deg) {
  Mat4 t = identity();
  for (std::size_t i = 0; i < links.size(); ++i) {
    const auto& l = links[i];
    t = multiply(t, translation(l.offset[0], l.offset[1], l.offset[2]));
    t = multiply(t, rotation(l.axis, l.sign, q_deg[i]));
  }
  return t;
}

// Shepperd's method; returns (w, x, y, z) with w >= 0.
inline std::array<double, 4> quaternion(const Mat4& m) {
  const double tr = m[0][0] + m[1][1] + m[2][2];
  std::array<double, 4> q{};
  if (tr > 0) {
    const double s = std::sqrt(tr + 1.0) * 2;
    q = {0.25 * s, (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s};
  } else if (m[0][0] > m[1][1] && m[0][0] > m[2][2]) {
    const double s = std::sqrt(1.0 + m[0][0] - m[1][1] - m[2][2]) * 2;
    q = {(m[2][1] - m[1][2]) / s, 0.25 * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s};
  } else if (m[1][1] > m[2][2]) {
    const double s = std::sqrt(1.0 + m[1][1] - m[0][0] - m[2][2]) * 2;
    q = {(m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, 0.25 * s, (m[1][2] + m[2][1]) / s};
  } else {
    const double s = std::sqrt(1.0 + m[2][2] - m[0][0] - m[1][1]) * 2;
    q = {(m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, 0.25 * s};
  }
  const double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  for (double& v : q) v /= n;
  if (q[0] < 0) {
    for (double& v : q) v = -v;
  }
  return q;
}

// Distance between unit quaternions up to the double cover.
inline double quaternion_distance(const std::array<double, 4>& a, const std::array<double, 4>& b) {
  double minus = 0.0;
  double plus = 0.0;
  for (int i = 0; i < 4; ++i) {
    minus += (a[i] - b[i]) * (a[i] - b[i]);
    plus += (a[i] + b[i]) * (a[i] + b[i]);
  }
  return std::sqrt(std::min(minus, plus));
}

// Joint ranges per configuration, degrees, joint 1 first.
inline const std::map<std::string, std::vector<std::pair<double, double>>>& joint_ranges() {
  static const std::map<std::string, std::vector<std::pair<double, double>>> table{
      {"config1", {{-87, 87}, {-75, 105}, {-180, 90}, {-72, 72}, {-122, 82}, {-115, 115}}},
      {"config2", {{-87, 87}, {-75, 105}, {-180, 90}, {-76, 50}, {-74, 74}, {-120, 120}}},
      {"config3", {{-87, 87}, {-70, 108}, {-70, 70}, {-180, 90}, {-72, 72}, {-122, 125}, {-115, 115}}},
  };
  return table;
}

inline const std::map<std::string, std::vector<std::string>>& compatible_robots() {
  static const std::map<std::string, std::vector<std::string>> table{
      {"config1",
       {"xArm6", "Fanuc LR Mate 200iD", "Trossen ALOHA", "Agile PIPER", "Realman RM65B", "KUKA LBR iiSY Cobot"}},
      {"config2", {"Dobot CR5", "UR5", "ARX RS5*S", "AUBO i5", "JAKA Zu7"}},
      {"config3", {"Franka FR3", "Franka Emika Panda", "Flexiv Rizon", "Realman RM75B"}},
  };
  return table;
}

// Leader joint -> (follower joint, sign), 1-based.
inline std::pair<int, int> route(const std::string& config, int leader_joint) {
  if (config == "config2" && leader_joint == 5) return {6, -1};
  if (config == "config2" && leader_joint == 6) return {5, -1};
  return {leader_joint, 1};
}

// The per-joint update loop as written: accumulate delta/N N times.
inline std::vector<double> accumulate_steps(double from, double to, int n) {
  std::vector<double> out;
  double cmd = from;
  const double inc = (to - from) / n;
  for (int s = 0; s < n; ++s) {
    cmd += inc;
    out.push_back(cmd);
  }
  return out;
}

// Straight-line model of the mapping state after a sequence of readings:
// EMA on absolute leader angles seeded at L0, then route, offset and clamp.
struct ReferenceMapper {
  std::string config;
  std::vector<double> l0;
  std::vector<double> f0;
  double alpha = 1.0;
  std::vector<double> s;

  ReferenceMapper(std::string c, std::vector<double> leader0, std::vector<double> follower0, double a)
      : config(std::move(c)), l0(std::move(leader0)), f0(std::move(follower0)), alpha(a), s(l0) {}

  void feed(const std::vector<double>& x) {
    for (std::size_t i = 0; i < x.size(); ++i) s[i] = alpha * x[i] + (1 - alpha) * s[i];
  }

  // Clamped follower targets implied by the current filter state.
  std::vector<double> targets() const {
    const auto& ranges = joint_ranges().at(config);
    std::vector<double> out(l0.size());
    for (std::size_t i = 0; i < l0.size(); ++i) {
      const auto [f, sign] = route(config, static_cast<int>(i) + 1);
      const auto fi = static_cast<std::size_t>(f - 1);
      double t = f0[fi] + sign * (s[i] - l0[i]);
      t = std::min(std::max(t, ranges[fi].first), ranges[fi].second);
      out[fi] = t;
    }
    return out;
  }
};

}  // namespace oracle
