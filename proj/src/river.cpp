#include "trackrl/river.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace trackrl::river {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double branch_delta(int value, double magnitude) {
  if (value == 0) return magnitude;
  if (value == 2) return -magnitude;
  return 0.0;
}

}  // namespace

bool Box::intersects_cube(const Eigen::Vector3d& center, double side) const {
  const Eigen::Vector3d half = Eigen::Vector3d::Constant(0.5 * side);
  const Eigen::Vector3d lo = center - half;
  const Eigen::Vector3d hi = center + half;
  return (lo.array() <= max.array()).all() && (hi.array() >= min.array()).all();
}

void RiverConfig::validate() const {
  if (control_points.size() < 4) throw std::invalid_argument("river map needs >= 4 control points");
  if (half_widths.size() != control_points.size()) {
    throw std::invalid_argument("river map needs one half-width per control point");
  }
  for (double w : half_widths) {
    if (!(w > 0.0)) throw std::invalid_argument("river half-widths must be positive");
  }
  if (!(h1 > 0.0 && h1 < h2)) throw std::invalid_argument("river altitude band requires 0 < h1 < h2");
  if (!(alpha_deg > 0.0 && alpha_deg < 360.0)) throw std::invalid_argument("alpha must lie in (0, 360)");
  if (segments < 50) throw std::invalid_argument("river map needs >= 50 segments");
  if (no_progress_limit <= 0 || max_episode_steps <= 0) {
    throw std::invalid_argument("river step limits must be positive");
  }
  if (!(collider_side > 0.0)) throw std::invalid_argument("collider side must be positive");
  if (!tributary.empty() && (tributary.size() < 2 || !(tributary_half_width > 0.0))) {
    throw std::invalid_argument("tributary needs >= 2 points and a positive half-width");
  }
}

RiverConfig default_river_config() {
  RiverConfig config;
  // A wobbly annulus of roughly 200 m: radius and width vary per control
  // point, giving slow and sharp bends and narrow and wide reaches.
  const double radii[12] = {32, 36, 34, 26, 24, 30, 36, 38, 33, 27, 28, 31};
  const double widths[12] = {5.0, 5.5, 4.5, 3.5, 4.0, 5.0, 6.0, 5.5, 4.5, 3.5, 4.0, 4.5};
  for (int i = 0; i < 12; ++i) {
    const double theta = 2.0 * std::numbers::pi * i / 12.0;
    config.control_points.emplace_back(radii[i] * std::cos(theta), radii[i] * std::sin(theta), 0.0);
    config.half_widths.push_back(widths[i]);
  }
  // Bridge deck across the top reach; passable below 5.75 m or above 8.25 m.
  config.obstacles.push_back({Eigen::Vector3d(-1.5, 17.0, 6.0), Eigen::Vector3d(1.5, 35.0, 8.0)});
  config.tributary = {{32.0, 0.0}, {38.0, -3.0}, {46.0, -7.0}, {54.0, -12.0}};
  config.tributary_half_width = 3.0;
  return config;
}

RiverConfig parse_river_config(std::istream& in) {
  RiverConfig config;
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& what) {
    throw std::invalid_argument("river map line " + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string key;
    if (!(fields >> key)) continue;
    auto read = [&](auto& value) {
      if (!(fields >> value)) fail("missing or malformed value for '" + key + "'");
    };
    if (key == "control") {
      double x = 0, y = 0, z = 0, w = 0;
      read(x), read(y), read(z), read(w);
      config.control_points.emplace_back(x, y, z);
      config.half_widths.push_back(w);
    } else if (key == "obstacle") {
      Box box;
      for (int i = 0; i < 3; ++i) read(box.min[i]);
      for (int i = 0; i < 3; ++i) read(box.max[i]);
      config.obstacles.push_back(box);
    } else if (key == "tributary") {
      double x = 0, y = 0;
      read(x), read(y);
      config.tributary.emplace_back(x, y);
    } else if (key == "tributary_half_width") {
      read(config.tributary_half_width);
    } else if (key == "segments") {
      read(config.segments);
    } else if (key == "samples_per_span") {
      read(config.samples_per_span);
    } else if (key == "h1") {
      read(config.h1);
    } else if (key == "h2") {
      read(config.h2);
    } else if (key == "alpha_deg") {
      read(config.alpha_deg);
    } else if (key == "no_progress_limit") {
      read(config.no_progress_limit);
    } else if (key == "collider_side") {
      read(config.collider_side);
    } else if (key == "max_episode_steps") {
      read(config.max_episode_steps);
    } else if (key == "reset_yaw_jitter_deg") {
      read(config.reset_yaw_jitter_deg);
    } else if (key == "seed") {
      std::uint64_t seed = 0;
      read(seed);
      config.seed = seed;
    } else {
      fail("unknown key '" + key + "'");
    }
    std::string extra;
    if (fields >> extra) fail("trailing tokens after '" + key + "'");
  }
  config.validate();
  return config;
}

RiverConfig load_river_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open river map " + path);
  return parse_river_config(in);
}

void write_river_config(std::ostream& out, const RiverConfig& config) {
  out.precision(17);
  out << "segments " << config.segments << "\n"
      << "samples_per_span " << config.samples_per_span << "\n"
      << "h1 " << config.h1 << "\nh2 " << config.h2 << "\n"
      << "alpha_deg " << config.alpha_deg << "\n"
      << "no_progress_limit " << config.no_progress_limit << "\n"
      << "collider_side " << config.collider_side << "\n"
      << "max_episode_steps " << config.max_episode_steps << "\n"
      << "reset_yaw_jitter_deg " << config.reset_yaw_jitter_deg << "\n";
  if (config.seed) out << "seed " << *config.seed << "\n";
  for (std::size_t i = 0; i < config.control_points.size(); ++i) {
    const auto& p = config.control_points[i];
    out << "control " << p.x() << " " << p.y() << " " << p.z() << " " << config.half_widths[i] << "\n";
  }
  for (const Box& b : config.obstacles) {
    out << "obstacle " << b.min.x() << " " << b.min.y() << " " << b.min.z() << " " << b.max.x() << " "
        << b.max.y() << " " << b.max.z() << "\n";
  }
  if (!config.tributary.empty()) {
    out << "tributary_half_width " << config.tributary_half_width << "\n";
    for (const auto& p : config.tributary) out << "tributary " << p.x() << " " << p.y() << "\n";
  }
}

double wrap_angle(double radians) {
  const double r = std::remainder(radians, 2.0 * std::numbers::pi);
  return r <= -std::numbers::pi ? r + 2.0 * std::numbers::pi : r;
}

double yaw_deviation(double yaw, double heading) {
  const double d = std::abs(wrap_angle(yaw - heading));
  return std::min(d, std::numbers::pi - d);
}

const char* failure_name(Failure failure) {
  switch (failure) {
    case Failure::kNone: return "none";
    case Failure::kVolume: return "volume";
    case Failure::kYaw: return "yaw";
    case Failure::kCollision: return "collision";
    case Failure::kNoProgress: return "no_progress";
  }
  return "unknown";
}

AgentPose apply_action(const AgentPose& pose, const Action& action) {
  AgentPose next = pose;
  next.yaw = wrap_angle(pose.yaw + branch_delta(action[1], 10.0 * kDeg));
  const Eigen::Vector2d forward(std::cos(next.yaw), std::sin(next.yaw));
  const Eigen::Vector2d left(-forward.y(), forward.x());
  next.position.head<2>() +=
      branch_delta(action[2], 1.0) * forward + branch_delta(action[3], 0.5) * left;
  next.position.z() += branch_delta(action[0], 1.0);
  return next;
}

RiverEnv::RiverEnv(RiverConfig config)
    : config_((config.validate(), std::move(config))),
      spline_(config_.control_points, config_.half_widths, config_.segments, config_.samples_per_span),
      spec_{kObservationDim, {3, 3, 3, 3}, config_.max_episode_steps} {}

double RiverEnv::altitude(const AgentPose& pose) const {
  const SegmentProjection p = spline_.project(pose.position.head<2>());
  return pose.position.z() - spline_.surface_height(p.segment, p.t);
}

Failure RiverEnv::check_pose(const AgentPose& pose) const {
  const SegmentProjection p = spline_.project(pose.position.head<2>());
  const double alt = pose.position.z() - spline_.surface_height(p.segment, p.t);
  if (alt < config_.h1 || alt > config_.h2 || p.distance > spline_.half_width(p.segment, p.t)) {
    return Failure::kVolume;
  }
  if (yaw_deviation(pose.yaw, spline_.heading(p.segment)) > 0.5 * config_.alpha_deg * kDeg) {
    return Failure::kYaw;
  }
  for (const Box& box : config_.obstacles) {
    if (box.intersects_cube(pose.position, config_.collider_side)) return Failure::kCollision;
  }
  return Failure::kNone;
}

Observation RiverEnv::reset(std::optional<std::uint64_t> seed) {
  if (!seed && config_.seed) {
    seed = config_.seed;
    config_.seed.reset();
  }
  Pcg32& rng = random_.on_reset(seed);
  const int n = spline_.segment_count();
  const double jitter = config_.reset_yaw_jitter_deg * kDeg;
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const int k = static_cast<int>(rng.uniform_int(static_cast<std::uint32_t>(n)));
    const double t = rng.uniform();
    const Eigen::Vector3d base = spline_.point_at(k, t);
    const double hw = spline_.half_width(k, t);
    const double h = spline_.heading(k);
    const Eigen::Vector2d normal(-std::sin(h), std::cos(h));
    const double offset = rng.uniform(-hw, hw);
    const double alt = rng.uniform(config_.h1, config_.h2);
    const bool reverse = rng.bernoulli(0.5);
    const double yaw_noise = rng.uniform(-jitter, jitter);

    AgentPose pose;
    pose.position.head<2>() = base.head<2>() + offset * normal;
    const SegmentProjection p = spline_.project(pose.position.head<2>());
    pose.position.z() = spline_.surface_height(p.segment, p.t) + alt;
    pose.yaw = wrap_angle(spline_.heading(p.segment) + (reverse ? std::numbers::pi : 0.0) + yaw_noise);
    if (check_pose(pose) == Failure::kNone) return reset_to(pose);
  }
  throw std::runtime_error("river reset could not find a valid start pose");
}

Observation RiverEnv::reset_to(const AgentPose& pose) {
  state_ = RiverState{};
  state_.pose = pose;
  state_.pose.yaw = wrap_angle(pose.yaw);
  state_.visited.assign(static_cast<std::size_t>(spline_.segment_count()), 0);
  state_.last_projection_index = spline_.project(pose.position.head<2>()).segment;
  start_pose_ = state_.pose;
  last_failure_ = Failure::kNone;
  finished_ = false;
  return observe();
}

StepResult RiverEnv::step(const Action& action) {
  if (finished_) throw ContractViolation("step called on a finished episode; call reset first");
  if (!spec_.valid(action)) throw ContractViolation("river action needs 4 branches with values in {0,1,2}");

  const AgentPose pose = apply_action(state_.pose, action);
  Failure failure = check_pose(pose);

  const int n_seg = spline_.segment_count();
  const int current = spline_.project(pose.position.head<2>()).segment;
  const int previous = state_.last_projection_index;
  int delta = ((current - previous) % n_seg + n_seg) % n_seg;
  if (delta > n_seg / 2) delta -= n_seg;
  std::vector<int> interval;
  if (std::abs(delta) > n_seg / 4) {
    interval.push_back(current);
  } else {
    const int dir = delta >= 0 ? 1 : -1;
    for (int k = 0; k <= std::abs(delta); ++k) interval.push_back(((previous + dir * k) % n_seg + n_seg) % n_seg);
  }
  int newly = 0;
  for (int s : interval) newly += state_.visited[static_cast<std::size_t>(s)] ? 0 : 1;

  if (failure == Failure::kNone && newly == 0 &&
      state_.steps_since_progress + 1 >= config_.no_progress_limit) {
    failure = Failure::kNoProgress;
  }

  state_.pose = pose;
  last_failure_ = failure;
  StepResult result;
  if (failure != Failure::kNone) {
    result.reward = -1.0;
    result.terminated = true;
  } else {
    for (int s : interval) state_.visited[static_cast<std::size_t>(s)] = 1;
    state_.visited_count += newly;
    state_.last_projection_index = current;
    state_.steps_since_progress = newly > 0 ? 0 : state_.steps_since_progress + 1;
    result.reward = newly > 0 ? kCoverageReward * newly / n_seg : 0.0;
    result.terminated = state_.visited_count == n_seg;
  }
  finished_ = result.terminated;
  result.observation = observe();
  return result;
}

bool RiverEnv::is_water(const Eigen::Vector2d& xy) const {
  const SegmentProjection p = spline_.project(xy);
  if (p.distance <= spline_.half_width(p.segment, p.t)) return true;
  for (std::size_t i = 0; i + 1 < config_.tributary.size(); ++i) {
    if (point_segment_distance(xy, config_.tributary[i], config_.tributary[i + 1]) <=
        config_.tributary_half_width) {
      return true;
    }
  }
  return false;
}

Observation RiverEnv::observe() const {
  Observation obs(kObservationDim);
  const Eigen::Vector2d origin = state_.pose.position.head<2>();
  const Eigen::Vector2d forward(std::cos(state_.pose.yaw), std::sin(state_.pose.yaw));
  const Eigen::Vector2d left(-forward.y(), forward.x());
  const double half = 0.5 * kMaskSize;
  for (int r = 0; r < kMaskSize; ++r) {
    const double ahead = kMaskSize - 0.5 - r;
    for (int c = 0; c < kMaskSize; ++c) {
      const double lateral = half - 0.5 - c;
      obs[r * kMaskSize + c] = is_water(origin + ahead * forward + lateral * left) ? 1.0 : 0.0;
    }
  }
  obs[kObservationDim - 1] = (altitude(state_.pose) - config_.h1) / (config_.h2 - config_.h1);
  return obs;
}

std::vector<double> RiverEnv::trace_point() const {
  const auto& p = state_.pose.position;
  return {p.x(), p.y(), p.z(), state_.pose.yaw};
}

nlohmann::json RiverEnv::layout_json() const {
  const auto& p = start_pose_.position;
  return {{"start", {p.x(), p.y(), p.z(), start_pose_.yaw}}, {"segments", spline_.segment_count()}};
}

nlohmann::json RiverEnv::save_state() const {
  const auto& p = state_.pose.position;
  const auto& s = start_pose_.position;
  std::vector<int> visited(state_.visited.begin(), state_.visited.end());
  return {{"random", random_.save()},
          {"pose", {p.x(), p.y(), p.z(), state_.pose.yaw}},
          {"start", {s.x(), s.y(), s.z(), start_pose_.yaw}},
          {"visited", visited},
          {"visited_count", state_.visited_count},
          {"last_projection", state_.last_projection_index},
          {"since_progress", state_.steps_since_progress},
          {"config_seed_pending", config_.seed.has_value()},
          {"finished", finished_}};
}

void RiverEnv::load_state(const nlohmann::json& state) {
  random_.load(state.at("random"));
  const auto pose = state.at("pose").get<std::vector<double>>();
  state_.pose.position = {pose.at(0), pose.at(1), pose.at(2)};
  state_.pose.yaw = pose.at(3);
  const auto start = state.at("start").get<std::vector<double>>();
  start_pose_.position = {start.at(0), start.at(1), start.at(2)};
  start_pose_.yaw = start.at(3);
  const auto visited = state.at("visited").get<std::vector<int>>();
  state_.visited.assign(visited.begin(), visited.end());
  state_.visited_count = state.at("visited_count").get<int>();
  state_.last_projection_index = state.at("last_projection").get<int>();
  state_.steps_since_progress = state.at("since_progress").get<int>();
  if (!state.at("config_seed_pending").get<bool>()) config_.seed.reset();
  finished_ = state.at("finished").get<bool>();
}

std::unique_ptr<Environment> make_river_env(const RiverConfig& config) {
  return time_limit_wrap(std::make_unique<RiverEnv>(config), config.max_episode_steps);
}

}  // namespace trackrl::river
