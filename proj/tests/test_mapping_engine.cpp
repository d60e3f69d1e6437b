#include <doctest.h>

#include <limits>
#include <random>

#include "oracles.hpp"
#include "test_util.hpp"
#include "uarm/errors.hpp"
#include "uarm/mapping_engine.hpp"

using namespace uarm;
using testutil::reading;

namespace {

MappingParams params(double tau, int n, double alpha) {
  MappingParams p;
  p.deadband_deg = tau;
  p.interp_steps = n;
  p.ema_alpha = alpha;
  return p;
}

std::vector<double> random_angles(std::size_t dof, std::mt19937_64& rng, double lo = -135.0, double hi = 135.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(dof);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST_SUITE("mapping_engine") {
  TEST_CASE("params validation") {
    CHECK_NOTHROW(MappingParams{}.validate());
    CHECK_THROWS_AS(params(-0.1, 5, 0.3).validate(), ConfigError);
    CHECK_THROWS_AS(params(0.5, 0, 0.3).validate(), ConfigError);
    CHECK_THROWS_AS(params(0.5, 5, 0.0).validate(), ConfigError);
    CHECK_THROWS_AS(params(0.5, 5, 1.5).validate(), ConfigError);
    CHECK_NOTHROW(params(std::numeric_limits<double>::infinity(), 5, 1.0).validate());
    MappingParams p;
    p.rate_hz = 0.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
  }

  TEST_CASE("calibrate examples") {
    const auto c1 = load_config(ConfigId::Config1);
    const auto neutral = reading(ConfigId::Config1, std::vector<double>(6, raw_to_degrees(2048) - 135.0));
    auto cal = calibrate(c1, neutral, zero_vector(c1), MappingParams{});
    for (double v : cal.leader_init().values) CHECK(std::abs(v) < 0.05);
    CHECK(cal.last_cmd() == zero_vector(c1));
    CHECK(step(cal, neutral).empty());

    JointVector bad = zero_vector(c1);
    bad[0] = 100.0;
    CHECK_THROWS_AS(calibrate(c1, neutral, bad, MappingParams{}), CalibrationError);
    CHECK_THROWS_AS(calibrate(c1, reading(ConfigId::Config1, {0.0, 0.0}), zero_vector(c1), MappingParams{}),
                    DimensionError);
    const auto c3 = load_config(ConfigId::Config3);
    CHECK_THROWS_AS(calibrate(c1, neutral, zero_vector(c3), MappingParams{}), DimensionError);
    CHECK_THROWS_AS(step(cal, reading(ConfigId::Config3, std::vector<double>(7, 0.0))), DimensionError);
  }

  TEST_CASE("smooth: geometric convergence") {
    const auto c1 = load_config(ConfigId::Config1);
    for (double alpha : {0.1, 0.3, 0.7, 1.0}) {
      auto cal = calibrate(c1, reading(ConfigId::Config1, std::vector<double>(6, 5.0)), zero_vector(c1),
                           params(0.5, 5, alpha));
      const double x = 25.0;
      double prev = 20.0;
      for (int k = 1; k <= 40; ++k) {
        const double s = smooth(cal, reading(ConfigId::Config1, std::vector<double>(6, x)))[0];
        const double expected = std::pow(1.0 - alpha, k) * 20.0;
        CHECK(std::abs(std::abs(s - x) - expected) < 1e-12);
        CHECK(std::abs(s - x) <= prev);
        prev = std::abs(s - x);
      }
    }
  }

  TEST_CASE("smooth: alpha 1 passes input through") {
    const auto c2 = load_config(ConfigId::Config2);
    std::mt19937_64 rng(4);
    auto cal = calibrate(c2, reading(ConfigId::Config2, std::vector<double>(6, 0.0)), zero_vector(c2),
                         params(0.5, 5, 1.0));
    for (int k = 0; k < 100; ++k) {
      const auto x = random_angles(6, rng);
      const auto s = smooth(cal, reading(ConfigId::Config2, x));
      for (std::size_t i = 0; i < 6; ++i) CHECK(s[i] == x[i]);
    }
  }

  TEST_CASE("smooth: alternating noise stays bounded") {
    const auto c1 = load_config(ConfigId::Config1);
    auto cal = calibrate(c1, reading(ConfigId::Config1, std::vector<double>(6, 0.0)), zero_vector(c1),
                         params(0.5, 5, 0.3));
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
      const double x = (k % 2 == 0) ? 1.0 : -1.0;
      worst = std::max(worst, std::abs(smooth(cal, reading(ConfigId::Config1, std::vector<double>(6, x)))[0]));
    }
    CHECK(worst <= 1.0);
  }

  TEST_CASE("map_joint examples") {
    const auto c1 = load_config(ConfigId::Config1);
    std::vector<double> l0(6, 0.0);
    l0[0] = 10.0;
    auto cal = calibrate(c1, reading(ConfigId::Config1, l0), zero_vector(c1), params(0.5, 5, 1.0));
    auto m = map_joint(cal, 1, 25.0);
    CHECK(m.follower_joint == 1);
    CHECK(m.target == 15.0);
    CHECK(m.emit);
    m = map_joint(cal, 1, 10.3);
    CHECK_FALSE(m.emit);
    m = map_joint(cal, 1, 200.0);
    CHECK(m.target == 87.0);
    CHECK_THROWS_AS(map_joint(cal, 7, 0.0), DimensionError);

    const auto c2 = load_config(ConfigId::Config2);
    JointVector f0 = zero_vector(c2);
    f0[5] = 20.0;
    f0[4] = -3.0;
    auto cal2 = calibrate(c2, reading(ConfigId::Config2, std::vector<double>(6, 1.0)), f0, params(0.5, 5, 1.0));
    auto s = map_joint(cal2, 5, 11.0);
    CHECK(s.follower_joint == 6);
    CHECK(s.target == 20.0 - 10.0);
    s = map_joint(cal2, 6, 11.0);
    CHECK(s.follower_joint == 5);
    CHECK(s.target == -3.0 - 10.0);
  }

  TEST_CASE("interpolate examples") {
    CHECK(interpolate(0.0, 10.0, 5) == std::vector<double>{2, 4, 6, 8, 10});
    CHECK(interpolate(3.7, 3.7, 4) == std::vector<double>(4, 3.7));
    CHECK(interpolate(-1.0, 9.5, 1) == std::vector<double>{9.5});
    CHECK_THROWS_AS(interpolate(0.0, 1.0, 0), ConfigError);
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> d(-180.0, 180.0);
    for (int k = 0; k < 1000; ++k) {
      const double from = d(rng), to = d(rng);
      const int n = 1 + k % 12;
      const auto v = interpolate(from, to, n);
      CHECK(v.back() == to);
      const auto ref = oracle::accumulate_steps(from, to, n);
      for (int i = 0; i < n; ++i) CHECK(std::abs(v[static_cast<std::size_t>(i)] - ref[static_cast<std::size_t>(i)]) < 1e-9);
      for (int i = 1; i < n; ++i) {
        const double inc = v[static_cast<std::size_t>(i)] - v[static_cast<std::size_t>(i - 1)];
        CHECK(std::abs(inc - (to - from) / n) < 1e-9);
      }
    }
  }

  TEST_CASE("step: single joint, tau 0, alpha 1, N 4") {
    const auto c1 = load_config(ConfigId::Config1);
    auto cal = calibrate(c1, reading(ConfigId::Config1, std::vector<double>(6, 0.0)), zero_vector(c1),
                         params(0.0, 4, 1.0));
    std::vector<double> moved(6, 0.0);
    moved[2] = 6.0;
    const auto b = step(cal, reading(ConfigId::Config1, moved));
    for (std::size_t j = 0; j < 6; ++j) {
      if (j == 2) {
        REQUIRE(b.joints[j].size() == 4);
        CHECK(b.joints[j] == std::vector<double>{1.5, 3.0, 4.5, 6.0});
      } else {
        CHECK(b.joints[j].empty());
      }
    }
    CHECK(cal.last_cmd()[2] == 6.0);
    CHECK(step(cal, reading(ConfigId::Config1, moved)).empty());
  }

  TEST_CASE("step: leader frozen at calibration pose never emits") {
    std::mt19937_64 rng(21);
    for (ConfigId id : kAllConfigs) {
      const auto c = load_config(id);
      const auto l0 = random_angles(c.dof, rng);
      auto cal = calibrate(c, reading(id, l0), testutil::random_in_range(c, rng), params(0.0, 5, 0.3));
      for (int k = 0; k < 100; ++k) CHECK(step(cal, reading(id, l0)).empty());
    }
  }

  TEST_CASE("random walks track the straight-line reference within tau") {
    std::mt19937_64 rng(12);
    for (ConfigId id : kAllConfigs) {
      const auto c = load_config(id);
      for (int trial = 0; trial < 20; ++trial) {
        const double tau = std::uniform_real_distribution<double>(0.0, 2.0)(rng);
        const double alpha = std::uniform_real_distribution<double>(0.05, 1.0)(rng);
        const auto l0 = random_angles(c.dof, rng, -40, 40);
        const auto f0 = testutil::random_in_range(c, rng);
        auto cal = calibrate(c, reading(id, l0), f0, params(tau, 5, alpha));
        oracle::ReferenceMapper ref(to_string(id), l0, f0.values, alpha);
        auto x = l0;
        std::normal_distribution<double> walk(0.0, 1.5);
        for (int k = 0; k < 1000; ++k) {
          for (auto& v : x) v = std::clamp(v + walk(rng), -135.0, 135.0);
          step(cal, reading(id, x));
          ref.feed(x);
        }
        const auto expected = ref.targets();
        for (std::size_t j = 0; j < c.dof; ++j) CHECK(std::abs(cal.last_cmd()[j] - expected[j]) <= tau + 1e-9);
      }
    }
  }

  TEST_CASE("offset invariance on exactly representable readings") {
    std::mt19937_64 rng(31);
    for (ConfigId id : kAllConfigs) {
      const auto c = load_config(id);
      for (int trial = 0; trial < 30; ++trial) {
        std::vector<double> l0(c.dof);
        for (auto& v : l0) v = testutil::dyadic(rng, -30, 30);
        const auto f0 = testutil::random_in_range(c, rng);
        const auto p = params(testutil::dyadic(rng, 0, 1), 5, 0.3);
        std::vector<double> offset(c.dof);
        for (auto& v : offset) v = static_cast<double>(std::uniform_int_distribution<int>(-60, 60)(rng));
        auto shifted_l0 = l0;
        for (std::size_t j = 0; j < c.dof; ++j) shifted_l0[j] += offset[j];
        auto a = calibrate(c, reading(id, l0), f0, p);
        auto b = calibrate(c, reading(id, shifted_l0), f0, p);
        for (int k = 0; k < 50; ++k) {
          std::vector<double> x(c.dof);
          for (auto& v : x) v = testutil::dyadic(rng, -70, 70);
          auto xs = x;
          for (std::size_t j = 0; j < c.dof; ++j) xs[j] += offset[j];
          REQUIRE(step(a, reading(id, x)).joints == step(b, reading(id, xs)).joints);
        }
      }
    }
  }

  TEST_CASE("deadband extremes") {
    std::mt19937_64 rng(41);
    for (ConfigId id : kAllConfigs) {
      const auto c = load_config(id);
      auto never = calibrate(c, reading(id, std::vector<double>(c.dof, 0.0)), zero_vector(c),
                             params(std::numeric_limits<double>::infinity(), 5, 0.5));
      auto always = calibrate(c, reading(id, std::vector<double>(c.dof, 0.0)), zero_vector(c), params(0.0, 5, 1.0));
      std::vector<double> prev_targets = zero_vector(c).values;
      for (int k = 0; k < 500; ++k) {
        const auto x = random_angles(c.dof, rng);
        CHECK(step(never, reading(id, x)).empty());
        const auto b = step(always, reading(id, x));
        for (int j = 1; j <= static_cast<int>(c.dof); ++j) {
          const auto r = c.route(j);
          const auto f = static_cast<std::size_t>(r.follower - 1);
          const double target = c.joints[f].clamp(r.sign * x[static_cast<std::size_t>(j - 1)]);
          CHECK(b.joints[f].empty() == (target == prev_targets[f]));
          prev_targets[f] = target;
        }
      }
    }
  }

  TEST_CASE("safety: every command within follower limits") {
    std::mt19937_64 rng(51);
    for (ConfigId id : kAllConfigs) {
      const auto c = load_config(id);
      auto cal = calibrate(c, reading(id, random_angles(c.dof, rng)), testutil::random_in_range(c, rng),
                           params(0.1, 3, 0.6));
      for (int k = 0; k < 3000; ++k) {
        const auto b = step(cal, reading(id, random_angles(c.dof, rng)));
        for (std::size_t f = 0; f < c.dof; ++f) {
          for (double v : b.joints[f]) REQUIRE(c.joints[f].contains(v));
        }
      }
    }
  }

  TEST_CASE("config2 swap permutation, exhaustive") {
    const auto c2 = load_config(ConfigId::Config2);
    for (int j = 1; j <= 6; ++j) {
      for (double delta : {-12.0, 7.0}) {
        auto cal = calibrate(c2, reading(ConfigId::Config2, std::vector<double>(6, 0.0)), zero_vector(c2),
                             params(0.0, 2, 1.0));
        std::vector<double> x(6, 0.0);
        x[static_cast<std::size_t>(j - 1)] = delta;
        const auto b = step(cal, reading(ConfigId::Config2, x));
        const auto [f, sign] = oracle::route("config2", j);
        for (int k = 1; k <= 6; ++k) {
          const auto& list = b.joints[static_cast<std::size_t>(k - 1)];
          if (k == f) {
            REQUIRE(list.size() == 2);
            CHECK(list.back() == sign * delta);
          } else {
            CHECK(list.empty());
          }
        }
      }
    }
  }

  TEST_CASE("step is deterministic and copies are independent") {
    std::mt19937_64 rng(61);
    const auto c3 = load_config(ConfigId::Config3);
    auto a = calibrate(c3, reading(ConfigId::Config3, random_angles(7, rng)), zero_vector(c3), MappingParams{});
    auto b = a;
    for (int k = 0; k < 500; ++k) {
      const auto x = reading(ConfigId::Config3, random_angles(7, rng));
      REQUIRE(step(a, x).joints == step(b, x).joints);
    }
    auto c = a;
    step(c, reading(ConfigId::Config3, random_angles(7, rng)));
    CHECK(a.last_cmd() == b.last_cmd());
  }
}
