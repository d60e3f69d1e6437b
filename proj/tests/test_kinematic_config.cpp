#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "test_util.hpp"
#include "uarm/errors.hpp"
#include "uarm/kinematic_config.hpp"

using namespace uarm;

namespace {

std::vector<oracle::Link> links_of(const ConfigDescriptor& c) {
  std::vector<oracle::Link> links;
  for (const auto& j : c.joints) {
    links.push_back({j.axis.index, j.axis.sign, {j.link_offset.x(), j.link_offset.y(), j.link_offset.z()}});
  }
  return links;
}

}  // namespace

TEST_SUITE("kinematic_config") {
  TEST_CASE("built-in joint ranges match the reference table") {
    int checked = 0;
    for (ConfigId id : kAllConfigs) {
      const auto c = load_config(id);
      const auto& expected = oracle::joint_ranges().at(to_string(id));
      REQUIRE(c.dof == expected.size());
      for (std::size_t i = 0; i < c.dof; ++i) {
        CHECK(c.joints[i].index == static_cast<int>(i + 1));
        CHECK(c.joints[i].range_min == expected[i].first);
        CHECK(c.joints[i].range_max == expected[i].second);
        ++checked;
      }
    }
    CHECK(checked == 19);
  }

  TEST_CASE("load_config examples") {
    const auto c1 = load_config(ConfigId::Config1);
    CHECK(c1.joint(1).range_min == -87.0);
    CHECK(c1.joint(1).range_max == 87.0);
    CHECK(c1.joint(3).range_min == -180.0);
    CHECK(c1.joint(3).range_max == 90.0);
    CHECK(c1.swap_pairs.empty());

    const auto c3 = load_config(ConfigId::Config3);
    CHECK(c3.dof == 7);
    CHECK(c3.joint(7).range_min == -115.0);
    CHECK(c3.joint(7).range_max == 115.0);
    CHECK(c3.swap_pairs.empty());

    const auto c2 = load_config(ConfigId::Config2);
    REQUIRE(c2.swap_pairs.size() == 2);
    CHECK(std::find(c2.swap_pairs.begin(), c2.swap_pairs.end(), SwapPair{5, 6, -1}) != c2.swap_pairs.end());
    CHECK(std::find(c2.swap_pairs.begin(), c2.swap_pairs.end(), SwapPair{6, 5, -1}) != c2.swap_pairs.end());
  }

  TEST_CASE("axis sequences") {
    auto axes = [](ConfigId id) {
      std::string s;
      for (const auto& j : load_config(id).joints) s += j.axis.to_string().substr(1);
      return s;
    };
    CHECK(axes(ConfigId::Config1) == "ZYYXYX");
    CHECK(axes(ConfigId::Config2) == "ZYYZYX");
    CHECK(axes(ConfigId::Config3) == "ZYZYZYX");
  }

  TEST_CASE("config id parsing") {
    CHECK(parse_config_id("config2") == ConfigId::Config2);
    CHECK(parse_config_id("Config-3") == ConfigId::Config3);
    CHECK(parse_config_id("1") == ConfigId::Config1);
    CHECK_THROWS_AS(parse_config_id("config4"), ConfigNotFound);
    const auto registry = nlohmann::json::parse(builtin_registry_json());
    CHECK(config_from_json(registry, ConfigId::Config2).dof == 6);
    auto partial = registry;
    partial["configs"].erase(2);
    CHECK_THROWS_AS(config_from_json(partial, ConfigId::Config3), ConfigNotFound);
  }

  TEST_CASE("compatible robots match the registry table") {
    for (ConfigId id : kAllConfigs) {
      const auto c = load_config(id);
      CHECK(compatible_robots(c) == oracle::compatible_robots().at(to_string(id)));
    }
    auto has = [](ConfigId id, const std::string& name) {
      const auto& r = load_config(id).compatible_robots;
      return std::find(r.begin(), r.end(), name) != r.end();
    };
    CHECK(has(ConfigId::Config1, "xArm6"));
    CHECK(has(ConfigId::Config3, "Franka FR3"));
    CHECK(has(ConfigId::Config2, "UR5"));
  }

  TEST_CASE("clamp_to_limits") {
    const auto c1 = load_config(ConfigId::Config1);
    JointVector q = zero_vector(c1);
    q[0] = 100.0;
    CHECK(clamp_to_limits(c1, q)[0] == 87.0);
    q[0] = 0.0;
    CHECK(clamp_to_limits(c1, q)[0] == 0.0);

    const auto c2 = load_config(ConfigId::Config2);
    JointVector q2 = zero_vector(c2);
    q2[3] = -90.0;
    CHECK(clamp_to_limits(c2, q2)[3] == -76.0);

    JointVector wrong{ConfigId::Config1, {0.0, 0.0}};
    CHECK_THROWS_AS(clamp_to_limits(c1, wrong), DimensionError);
    CHECK_THROWS_AS(forward_kinematics(c1, wrong), DimensionError);
  }

  TEST_CASE("clamp is idempotent (fuzz)") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> wide(-400.0, 400.0);
    for (ConfigId id : kAllConfigs) {
      const auto c = load_config(id);
      for (int n = 0; n < 2000; ++n) {
        JointVector q = zero_vector(c);
        for (auto& v : q.values) v = wide(rng);
        const auto once = clamp_to_limits(c, q);
        CHECK(clamp_to_limits(c, once) == once);
        CHECK(within_limits(c, once));
      }
    }
  }

  TEST_CASE("swap table is an involution") {
    const auto c2 = load_config(ConfigId::Config2);
    for (int j = 1; j <= 6; ++j) {
      const auto once = c2.route(j);
      const auto twice = c2.route(once.follower);
      CHECK(twice.follower == j);
      CHECK(once.sign * twice.sign == 1);
      const auto [f, sign] = oracle::route("config2", j);
      CHECK(once.follower == f);
      CHECK(once.sign == sign);
    }
  }

  TEST_CASE("forward kinematics at zero pose") {
    for (ConfigId id : kAllConfigs) {
      const auto c = load_config(id);
      Eigen::Vector3d sum = Eigen::Vector3d::Zero();
      for (const auto& j : c.joints) sum += j.link_offset;
      const auto pose = forward_kinematics(c, zero_vector(c));
      CHECK((pose.position - sum).norm() < 1e-15);
      CHECK(pose.orientation.w() == doctest::Approx(1.0).epsilon(1e-15));
      CHECK(pose.orientation.vec().norm() < 1e-15);
    }
  }

  TEST_CASE("base rotation rotates the zero-pose position") {
    for (ConfigId id : kAllConfigs) {
      const auto c = load_config(id);
      const auto p0 = forward_kinematics(c, zero_vector(c)).position;
      JointVector q = zero_vector(c);
      q[0] = 90.0;
      const auto p = forward_kinematics(c, q).position;
      // Base axis is +Z: (x, y, z) -> (-y, x, z).
      CHECK(p.x() == doctest::Approx(-p0.y()).epsilon(1e-12));
      CHECK(p.y() == doctest::Approx(p0.x()).epsilon(1e-12));
      CHECK(p.z() == doctest::Approx(p0.z()).epsilon(1e-12));
    }
  }

  TEST_CASE("forward kinematics matches the matrix-chain oracle") {
    std::mt19937_64 rng(11);
    for (ConfigId id : kAllConfigs) {
      const auto c = load_config(id);
      const auto links = links_of(c);
      double worst_pos = 0.0;
      double worst_rot = 0.0;
      for (int n = 0; n < 300; ++n) {
        const auto q = testutil::random_in_range(c, rng);
        const auto pose = forward_kinematics(c, q);
        const auto m = oracle::chain(links, q.values);
        const Eigen::Vector3d p(m[0][3], m[1][3], m[2][3]);
        const auto qo = oracle::quaternion(m);
        const std::array<double, 4> qi{pose.orientation.w(), pose.orientation.x(), pose.orientation.y(),
                                       pose.orientation.z()};
        worst_pos = std::max(worst_pos, (pose.position - p).norm());
        worst_rot = std::max(worst_rot, oracle::quaternion_distance(qi, qo));
        CHECK(std::abs(pose.orientation.norm() - 1.0) <= 1e-9);
      }
      CHECK(worst_pos < 1e-9);
      CHECK(worst_rot < 1e-9);
    }
  }

  TEST_CASE("descriptor JSON round trip and validation") {
    for (ConfigId id : kAllConfigs) {
      const auto c = load_config(id);
      const auto back = config_from_json(to_json(c), id);
      CHECK(back.dof == c.dof);
      CHECK(back.swap_pairs == c.swap_pairs);
      CHECK(back.compatible_robots == c.compatible_robots);
      for (std::size_t i = 0; i < c.dof; ++i) {
        CHECK(back.joints[i].axis == c.joints[i].axis);
        CHECK(back.joints[i].range_min == c.joints[i].range_min);
        CHECK(back.joints[i].range_max == c.joints[i].range_max);
        CHECK(back.joints[i].link_offset == c.joints[i].link_offset);
      }
    }
    auto doc = to_json(load_config(ConfigId::Config1));
    doc["joints"][0]["range_min"] = 100.0;
    CHECK_THROWS_AS(config_from_json(doc, ConfigId::Config1), ConfigError);
    doc = to_json(load_config(ConfigId::Config1));
    doc["joints"][0]["axis"] = "+W";
    CHECK_THROWS_AS(config_from_json(doc, ConfigId::Config1), ConfigError);
    doc = to_json(load_config(ConfigId::Config2));
    doc["swap_pairs"] = {{5, 6, -1}};
    CHECK_THROWS_AS(config_from_json(doc, ConfigId::Config2), ConfigError);
  }

  TEST_CASE("override file changes link lengths") {
    const auto dir = testutil::temp_dir("configfile");
    auto doc = to_json(load_config(ConfigId::Config1));
    doc["joints"][3]["link_offset"] = {0.2, 0.0, 0.0};
    std::ofstream(dir / "c1.json") << doc.dump();
    const auto c = load_config_file(dir / "c1.json", ConfigId::Config1);
    CHECK(c.joint(4).link_offset.x() == 0.2);
    CHECK_THROWS_AS(load_config_file(dir / "missing.json", ConfigId::Config1), ConfigError);
  }
}
