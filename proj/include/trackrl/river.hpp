#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <optional>
#include <string>

#include "trackrl/env.hpp"
#include "trackrl/spline.hpp"

// River-lite: a geometric stand-in for a camera agent following a closed
// river. The agent covers resampled spline segments for a shaped reward of
// 10 * n / N and fails (-1) on leaving the bounding volume, turning too far
// from the river direction, hitting an obstacle, or stalling.
namespace trackrl::river {

inline constexpr int kMaskSize = 16;
inline constexpr int kObservationDim = kMaskSize * kMaskSize + 1;
inline constexpr int kBranchCount = 4;
inline constexpr double kCoverageReward = 10.0;

struct Box {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Zero();

  bool intersects_cube(const Eigen::Vector3d& center, double side) const;
};

struct RiverConfig {
  std::vector<Eigen::Vector3d> control_points;
  std::vector<double> half_widths;
  int segments = 200;
  int samples_per_span = 50;
  double h1 = 1.0;
  double h2 = 15.0;
  double alpha_deg = 150.0;
  int no_progress_limit = 50;
  double collider_side = 0.5;
  std::vector<Box> obstacles;
  // Side channel drawn only into the observation mask.
  std::vector<Eigen::Vector2d> tributary;
  double tributary_half_width = 0.0;
  int max_episode_steps = 1000;
  double reset_yaw_jitter_deg = 30.0;
  // Used by the first reset when no seed is passed.
  std::optional<std::uint64_t> seed;

  void validate() const;
};

RiverConfig default_river_config();
// Plain-text map format, one directive per line ("key value..."), '#' starts
// a comment. See data/river_default.cfg.
RiverConfig parse_river_config(std::istream& in);
RiverConfig load_river_config(const std::string& path);
void write_river_config(std::ostream& out, const RiverConfig& config);

// Normalizes to (-pi, pi].
double wrap_angle(double radians);
// Smallest angle between `yaw` and either direction of a line with heading
// `heading`; in [0, pi/2].
double yaw_deviation(double yaw, double heading);

struct AgentPose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double yaw = 0.0;
};

struct RiverState {
  AgentPose pose;
  std::vector<char> visited;
  int visited_count = 0;
  int last_projection_index = 0;
  int steps_since_progress = 0;
};

enum class Failure { kNone, kVolume, kYaw, kCollision, kNoProgress };
const char* failure_name(Failure failure);

// Action deltas: branch value 0 -> +, 1 -> none, 2 -> -.
AgentPose apply_action(const AgentPose& pose, const Action& action);

class RiverEnv final : public Environment {
 public:
  explicit RiverEnv(RiverConfig config);

  const EnvSpec& spec() const override { return spec_; }
  Observation reset(std::optional<std::uint64_t> seed = std::nullopt) override;
  StepResult step(const Action& action) override;
  std::string name() const override { return "river"; }
  std::vector<double> trace_point() const override;
  nlohmann::json layout_json() const override;
  nlohmann::json save_state() const override;
  void load_state(const nlohmann::json& state) override;

  // Starts an episode at a given pose (tests, scripted demos).
  Observation reset_to(const AgentPose& pose);

  Observation observe() const;
  bool is_water(const Eigen::Vector2d& xy) const;
  // Failure checks (a)-(c) for a pose; no-progress is tracked by step().
  Failure check_pose(const AgentPose& pose) const;

  const RiverSpline& spline() const { return spline_; }
  const RiverConfig& config() const { return config_; }
  const RiverState& state() const { return state_; }
  Failure last_failure() const { return last_failure_; }
  double altitude(const AgentPose& pose) const;

 private:
  RiverConfig config_;
  RiverSpline spline_;
  EnvSpec spec_;
  EnvRandom random_;
  RiverState state_;
  AgentPose start_pose_;
  Failure last_failure_ = Failure::kNone;
  bool finished_ = true;
};

std::unique_ptr<Environment> make_river_env(const RiverConfig& config);

}  // namespace trackrl::river
