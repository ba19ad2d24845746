#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "trackrl/oracle.hpp"
#include "trackrl/river.hpp"

using namespace trackrl;
using namespace trackrl::river;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

RiverConfig circle_config(double radius, double half_width, int points = 16) {
  RiverConfig config;
  for (int i = 0; i < points; ++i) {
    const double theta = 2.0 * std::numbers::pi * i / points;
    config.control_points.emplace_back(radius * std::cos(theta), radius * std::sin(theta), 0.0);
    config.half_widths.push_back(half_width);
  }
  return config;
}

const Action kNoop({1, 1, 1, 1});
const Action kForward({1, 1, 0, 1});

AgentPose pose_on(const RiverEnv& env, int segment, double t, double yaw_offset = 0.0) {
  AgentPose pose;
  pose.position = env.spline().point_at(segment, t);
  pose.position.z() += 3.0;
  pose.yaw = env.spline().heading(segment) + yaw_offset;
  return pose;
}

}  // namespace

TEST_CASE("default map satisfies the spline invariants") {
  RiverEnv env(default_river_config());
  const RiverSpline& s = env.spline();
  CHECK(s.segment_count() == 200);
  const double mean = s.total_length() / s.segment_count();
  for (int i = 0; i < s.segment_count(); ++i) CHECK(std::abs(s.segment_length(i) - mean) < 0.01 * mean);
  CHECK(s.total_length() > 170.0);
  CHECK(s.total_length() < 230.0);
}

TEST_CASE("action deltas in the yaw frame") {
  AgentPose p;
  p.position = {1, 2, 3};
  p.yaw = std::numbers::pi / 2;
  AgentPose q = apply_action(p, Action({0, 1, 0, 1}));
  CHECK((q.position - Eigen::Vector3d(1, 3, 4)).norm() < 1e-12);
  q = apply_action(p, Action({2, 1, 2, 0}));
  CHECK((q.position - Eigen::Vector3d(0.5, 1, 2)).norm() < 1e-12);
  q = apply_action(p, Action({1, 0, 1, 1}));
  CHECK(q.yaw == doctest::Approx(std::numbers::pi / 2 + 10 * kDeg));
  // Yaw first, then translate along the new heading.
  q = apply_action(p, Action({1, 2, 0, 1}));
  CHECK(q.position.x() == doctest::Approx(1.0 + std::sin(10 * kDeg)));
  CHECK(apply_action(p, kNoop).position == p.position);
}

TEST_CASE("angle helpers") {
  CHECK(wrap_angle(std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(wrap_angle(-std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(wrap_angle(3 * std::numbers::pi / 2) == doctest::Approx(-std::numbers::pi / 2));
  CHECK(yaw_deviation(0.0, std::numbers::pi) == doctest::Approx(0.0));
  CHECK(yaw_deviation(80 * kDeg, 0.0) == doctest::Approx(80 * kDeg));
  CHECK(yaw_deviation(100 * kDeg, 0.0) == doctest::Approx(80 * kDeg));
}

TEST_CASE("five newly visited segments pay 0.25") {
  // Radius chosen so a 1 m tangential step sweeps five of 200 segments.
  const double radius = 1.0 / std::tan(5 * 2 * std::numbers::pi / 200);
  RiverEnv env(circle_config(radius, 2.0));
  env.reset_to(pose_on(env, 0, 0.5));
  StepResult r = env.step(kNoop);
  CHECK(r.reward == doctest::Approx(10.0 / 200));
  CHECK(env.state().visited_count == 1);
  r = env.step(kForward);
  CHECK(env.state().visited_count == 6);
  CHECK(r.reward == doctest::Approx(0.25).epsilon(1e-12));
  CHECK_FALSE(r.terminated);
}

TEST_CASE("yaw beyond half of alpha fails") {
  RiverEnv env(circle_config(30, 4));
  env.reset_to(pose_on(env, 10, 0.5, 80 * kDeg));
  CHECK(env.check_pose(env.state().pose) == Failure::kYaw);
  StepResult r = env.step(kNoop);
  CHECK(r.reward == -1.0);
  CHECK(r.terminated);
  CHECK(env.last_failure() == Failure::kYaw);

  env.reset_to(pose_on(env, 10, 0.5, 70 * kDeg));
  r = env.step(kNoop);
  CHECK(r.reward > 0.0);
  CHECK_FALSE(r.terminated);
  // Facing backwards along the river is allowed.
  env.reset_to(pose_on(env, 10, 0.5, std::numbers::pi));
  CHECK_FALSE(env.step(kNoop).terminated);
}

TEST_CASE("fifty steps without progress fail") {
  RiverEnv env(circle_config(30, 4));
  env.reset_to(pose_on(env, 10, 0.5));
  StepResult r = env.step(kNoop);
  CHECK(r.reward > 0.0);
  for (int k = 1; k < 50; ++k) {
    r = env.step(kNoop);
    REQUIRE(r.reward == 0.0);
    REQUIRE_FALSE(r.terminated);
  }
  r = env.step(kNoop);
  CHECK(r.reward == -1.0);
  CHECK(r.terminated);
  CHECK(env.last_failure() == Failure::kNoProgress);
}

TEST_CASE("volume and collision failures") {
  RiverConfig config = circle_config(30, 4);
  config.obstacles.push_back({Eigen::Vector3d(-2, 25, 5), Eigen::Vector3d(2, 35, 7)});
  RiverEnv env(config);
  const int top = 50;  // heading pi at the top of the circle
  AgentPose pose = pose_on(env, top, 0.0);
  CHECK(env.check_pose(pose) == Failure::kNone);
  pose.position.z() = 0.5;
  CHECK(env.check_pose(pose) == Failure::kVolume);
  pose.position.z() = 15.5;
  CHECK(env.check_pose(pose) == Failure::kVolume);
  pose = pose_on(env, top, 0.0);
  pose.position.y() += 4.5;
  CHECK(env.check_pose(pose) == Failure::kVolume);
  pose = pose_on(env, top, 0.0);
  pose.position.z() = 6.0;
  CHECK(env.check_pose(pose) == Failure::kCollision);
  pose.position.z() = 7.3;
  CHECK(env.check_pose(pose) == Failure::kNone);
  // Volume is checked before yaw.
  pose = pose_on(env, top, 0.0, 90 * kDeg);
  pose.position.z() = 20;
  CHECK(env.check_pose(pose) == Failure::kVolume);
}

TEST_CASE("the scripted follower collects exactly 10 on full coverage") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RiverEnv env(default_river_config());
    env.reset(seed);
    ScriptedRiverFollower follower;
    double total = 0.0;
    StepResult r;
    int steps = 0;
    do {
      r = env.step(follower.plan(env));
      total += r.reward;
      ++steps;
    } while (!r.terminated && steps < 1000);
    REQUIRE(env.last_failure() == Failure::kNone);
    CHECK(env.state().visited_count == 200);
    CHECK(std::abs(total - 10.0) < 1e-9);
  }
}

TEST_CASE("random play: reward tracks coverage, visited grows, steps never jump") {
  RiverEnv env(default_river_config());
  Pcg32 rng = Pcg32::stream(8, "random_play");
  ScriptedRiverFollower follower;
  follower.noise = 0.3;
  int episodes = 0;
  int failures = 0;
  env.reset(8);
  for (int t = 0; t < 20000; ++t) {
    const int before = env.state().visited_count;
    const int prev_index = env.state().last_projection_index;
    const StepResult r = env.step(follower.act(env, rng));
    if (r.terminated && env.last_failure() != Failure::kNone) {
      REQUIRE(r.reward == -1.0);
      ++failures;
    } else {
      const int n = env.state().visited_count - before;
      REQUIRE(n >= 0);
      REQUIRE(r.reward == 10.0 * n / 200);
      REQUIRE((r.reward > 0) == (n > 0));
      int delta = std::abs(env.state().last_projection_index - prev_index);
      delta = std::min(delta, 200 - delta);
      REQUIRE(delta <= 50);
    }
    if (r.terminated) {
      ++episodes;
      env.reset();
    }
  }
  CHECK(episodes > 0);
  CHECK(failures > 0);
}

TEST_CASE("reset poses pass every check and stay near a tangent") {
  RiverEnv env(default_river_config());
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    env.reset(seed);
    const AgentPose& pose = env.state().pose;
    REQUIRE(env.check_pose(pose) == Failure::kNone);
    const int seg = env.spline().project(pose.position.head<2>()).segment;
    REQUIRE(yaw_deviation(pose.yaw, env.spline().heading(seg)) <= 30 * kDeg + 1e-12);
    REQUIRE(env.state().visited_count == 0);
  }
  RiverEnv a(default_river_config());
  RiverEnv b(default_river_config());
  CHECK(a.reset(17) == b.reset(17));
}

TEST_CASE("mask over a wide straight reach matches the strip oracle") {
  const double radius = 500.0;
  const double half_width = 4.0;
  RiverEnv env(circle_config(radius, half_width, 64));
  AgentPose pose = pose_on(env, 0, 0.0);
  env.reset_to(pose);
  const Observation obs = env.observe();
  REQUIRE(obs.size() == 257);
  const Eigen::Vector2d forward(std::cos(pose.yaw), std::sin(pose.yaw));
  const Eigen::Vector2d left(-forward.y(), forward.x());
  int ones = 0;
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 16; ++c) {
      const Eigen::Vector2d p = pose.position.head<2>() + (15.5 - r) * forward + (7.5 - c) * left;
      const bool water = std::abs(p.norm() - radius) <= half_width;
      CHECK(obs[r * 16 + c] == (water ? 1.0 : 0.0));
      CHECK(obs[r * 16 + c] == obs[r * 16 + (15 - c)]);
      ones += water;
    }
  }
  CHECK(ones == 16 * 8);
  CHECK(obs[256] == doctest::Approx((3.0 - 1.0) / 14.0));
}

TEST_CASE("looking away from the river sees no water") {
  RiverConfig config = circle_config(30, 3);
  RiverEnv env(config);
  AgentPose pose;
  pose.position = {60, 0, 3};
  pose.yaw = 0.0;
  env.reset_to(pose);
  CHECK(env.observe().head(256).sum() == 0.0);
}

TEST_CASE("the observation ignores coverage") {
  RiverEnv env(circle_config(30, 4));
  env.reset_to(pose_on(env, 10, 0.5));
  const Observation before = env.observe();
  env.step(kNoop);
  CHECK(env.state().visited_count == 1);
  CHECK(env.observe() == before);
}

TEST_CASE("map files round-trip and reject bad input") {
  const RiverConfig config = default_river_config();
  std::stringstream text;
  write_river_config(text, config);
  const RiverConfig parsed = parse_river_config(text);
  CHECK(parsed.control_points == config.control_points);
  CHECK(parsed.half_widths == config.half_widths);
  CHECK(parsed.obstacles.size() == 1);
  CHECK(parsed.tributary == config.tributary);
  CHECK(parsed.segments == 200);

  std::istringstream unknown("control 0 0 0 1\nbogus 3\n");
  CHECK_THROWS_AS(parse_river_config(unknown), std::invalid_argument);
  std::istringstream few("control 0 0 0 1\ncontrol 1 0 0 1\n");
  CHECK_THROWS_AS(parse_river_config(few), std::invalid_argument);
  std::istringstream band("h1 5\nh2 2\ncontrol 0 0 0 1\ncontrol 1 0 0 1\ncontrol 1 1 0 1\ncontrol 0 1 0 1\n");
  CHECK_THROWS_AS(parse_river_config(band), std::invalid_argument);
  std::istringstream trailing("segments 100 7\n");
  CHECK_THROWS_AS(parse_river_config(trailing), std::invalid_argument);
  CHECK_THROWS(load_river_config("/nonexistent/map.cfg"));
}

TEST_CASE("shipped map file is the built-in default") {
  const RiverConfig shipped = load_river_config(std::string(TRACKRL_DATA_DIR) + "/river_default.cfg");
  const RiverConfig config = default_river_config();
  CHECK(shipped.control_points == config.control_points);
  CHECK(shipped.half_widths == config.half_widths);
  CHECK(shipped.tributary == config.tributary);
  REQUIRE(shipped.obstacles.size() == config.obstacles.size());
  CHECK(shipped.obstacles[0].min == config.obstacles[0].min);
  CHECK(shipped.obstacles[0].max == config.obstacles[0].max);
}
