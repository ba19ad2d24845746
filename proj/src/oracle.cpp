#include "trackrl/oracle.hpp"

#include <array>
#include <cmath>
#include <deque>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

namespace trackrl {
namespace {

using cliff::Cell;

int direction_between(Cell from, Cell to) {
  if (to.row == from.row - 1) return cliff::kUp;
  if (to.col == from.col + 1) return cliff::kRight;
  if (to.row == from.row + 1) return cliff::kDown;
  if (to.col == from.col - 1) return cliff::kLeft;
  return cliff::kNoop;
}

template <typename Inner>
Inner* unwrap(Environment& env) {
  if (auto* limited = dynamic_cast<TimeLimit*>(&env)) return dynamic_cast<Inner*>(&limited->inner());
  return dynamic_cast<Inner*>(&env);
}

void finish_stats(DemoStats* stats, double reward_sum, double length_sum, int failures, int episodes) {
  if (stats == nullptr) return;
  stats->episodes = episodes;
  stats->mean_reward = reward_sum / episodes;
  stats->mean_length = length_sum / episodes;
  stats->fall_rate = static_cast<double>(failures) / episodes;
}

}  // namespace

int ScriptedCliffExpert::plan(const cliff::CliffState& state, const cliff::GridLayout& layout) const {
  const auto& ring = cliff::track_ring();
  const int on_ring = cliff::ring_position(state.agent);
  if (on_ring >= 0) {
    const int next = (on_ring + (clockwise ? 1 : cliff::kTrackLength - 1)) % cliff::kTrackLength;
    return direction_between(state.agent, ring[static_cast<std::size_t>(next)]);
  }
  // Breadth-first search to the nearest ring cell over safe cells.
  std::array<int, cliff::kCellCount> parent{};
  parent.fill(-1);
  std::deque<Cell> frontier{state.agent};
  parent[static_cast<std::size_t>(state.agent.index())] = state.agent.index();
  while (!frontier.empty()) {
    const Cell cell = frontier.front();
    frontier.pop_front();
    if (cliff::ring_position(cell) >= 0) {
      Cell step = cell;
      while (parent[static_cast<std::size_t>(step.index())] != state.agent.index()) {
        const int p = parent[static_cast<std::size_t>(step.index())];
        step = {p / cliff::kGridSize, p % cliff::kGridSize};
      }
      return direction_between(state.agent, step);
    }
    for (int move : {cliff::kUp, cliff::kRight, cliff::kDown, cliff::kLeft}) {
      const Cell next = cliff::moved(cell, move);
      if (next == cell || layout.is_cliff(next) || parent[static_cast<std::size_t>(next.index())] >= 0) continue;
      parent[static_cast<std::size_t>(next.index())] = cell.index();
      frontier.push_back(next);
    }
  }
  return cliff::kNoop;
}

int ScriptedCliffExpert::act(const cliff::CliffState& state, const cliff::GridLayout& layout,
                             Pcg32& rng) const {
  if (rng.uniform() < noise) return static_cast<int>(rng.uniform_int(cliff::kActionCount));
  return plan(state, layout);
}

Action ScriptedRiverFollower::plan(const river::RiverEnv& env) const {
  const auto& spline = env.spline();
  const auto& pose = env.state().pose;
  const Eigen::Vector2d xy = pose.position.head<2>();
  const river::SegmentProjection p = spline.project(xy);
  const int n = spline.segment_count();

  const double heading = spline.heading(p.segment);
  const int dir = std::abs(river::wrap_angle(pose.yaw - heading)) <= std::numbers::pi / 2 ? 1 : -1;
  const int ahead = ((p.segment + dir * lookahead_segments) % n + n) % n;
  const Eigen::Vector2d target = spline.point_at(ahead, 0.5).head<2>();
  const Eigen::Vector2d to_target = target - xy;
  const double yaw_error = river::wrap_angle(std::atan2(to_target.y(), to_target.x()) - pose.yaw);

  constexpr double kDeg = std::numbers::pi / 180.0;
  Action action({1, 1, 1, 1});
  if (yaw_error > 5.0 * kDeg) action.branches[1] = 0;
  if (yaw_error < -5.0 * kDeg) action.branches[1] = 2;
  if (std::abs(yaw_error) < 40.0 * kDeg) action.branches[2] = 0;

  const Eigen::Vector2d centre = spline.point_at(p.segment, p.t).head<2>();
  const Eigen::Vector2d left(-std::sin(pose.yaw), std::cos(pose.yaw));
  const double lateral = (xy - centre).dot(left);
  const double band = 0.25 * spline.half_width(p.segment, p.t);
  if (lateral > band) action.branches[3] = 2;
  if (lateral < -band) action.branches[3] = 0;

  const double altitude = env.altitude(pose);
  if (altitude < target_altitude - 0.5) action.branches[0] = 0;
  if (altitude > target_altitude + 0.5) action.branches[0] = 2;
  return action;
}

Action ScriptedRiverFollower::act(const river::RiverEnv& env, Pcg32& rng) const {
  if (rng.uniform() < noise) {
    Action random;
    for (int b = 0; b < river::kBranchCount; ++b) random.branches.push_back(static_cast<int>(rng.uniform_int(3)));
    return random;
  }
  return plan(env);
}

DemoDataset collect_cliff_demos(const ScriptedCliffExpert& expert, int episodes, std::uint64_t seed,
                                DemoStats* stats) {
  if (episodes < 1) throw std::invalid_argument("need at least one demo episode");
  auto env = cliff::make_cliff_env();
  auto* inner = unwrap<cliff::CliffCircularEnv>(*env);
  Pcg32 rng = Pcg32::stream(seed, "demo_expert");
  DemoDataset dataset(true);
  double reward_sum = 0.0;
  double length_sum = 0.0;
  int failures = 0;
  for (int e = 0; e < episodes; ++e) {
    Observation obs = e == 0 ? env->reset(seed) : env->reset();
    Trajectory traj;
    bool done = false;
    while (!done) {
      const Action action = Action::single(expert.act(inner->state(), inner->layout(), rng));
      StepResult result = env->step(action);
      traj.observations.push_back(std::move(obs));
      traj.actions.push_back(action);
      traj.rewards.push_back(result.reward);
      if (result.reward == cliff::kCliffReward) ++failures;
      obs = std::move(result.observation);
      done = result.done();
    }
    reward_sum += traj.episodic_reward();
    length_sum += static_cast<double>(traj.size());
    dataset.append_trajectory(std::move(traj));
  }
  finish_stats(stats, reward_sum, length_sum, failures, episodes);
  return dataset;
}

DemoDataset collect_river_demos(const ScriptedRiverFollower& follower, const river::RiverConfig& config,
                                int episodes, int max_steps, std::uint64_t seed, DemoStats* stats) {
  if (episodes < 1) throw std::invalid_argument("need at least one demo episode");
  auto env = river::make_river_env(config);
  auto* inner = unwrap<river::RiverEnv>(*env);
  Pcg32 rng = Pcg32::stream(seed, "demo_expert");
  DemoDataset dataset(false);
  double reward_sum = 0.0;
  double length_sum = 0.0;
  int failures = 0;
  for (int e = 0; e < episodes; ++e) {
    Observation obs = e == 0 ? env->reset(seed) : env->reset();
    Trajectory traj;
    bool done = false;
    while (!done && static_cast<int>(traj.size()) < max_steps) {
      const Action action = follower.act(*inner, rng);
      StepResult result = env->step(action);
      traj.observations.push_back(std::move(obs));
      traj.actions.push_back(action);
      traj.rewards.push_back(result.reward);
      if (result.reward < 0.0) ++failures;
      obs = std::move(result.observation);
      done = result.done();
    }
    reward_sum += traj.episodic_reward();
    length_sum += static_cast<double>(traj.size());
    dataset.append_trajectory(std::move(traj));
  }
  finish_stats(stats, reward_sum, length_sum, failures, episodes);
  return dataset;
}

double calibrate_cliff_noise(int episodes, std::uint64_t seed, double target) {
  auto mean_reward = [&](double noise) {
    DemoStats stats;
    collect_cliff_demos(ScriptedCliffExpert{noise, true}, episodes, seed, &stats);
    return stats.mean_reward;
  };
  double lo = 0.0;
  double hi = 0.5;
  for (int i = 0; i < 30; ++i) {
    const double mid = 0.5 * (lo + hi);
    (mean_reward(mid) > target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::optional<Action> cliff_key_action(char key) {
  switch (key) {
    case 'w': return Action::single(cliff::kUp);
    case 'd': return Action::single(cliff::kRight);
    case 's': return Action::single(cliff::kDown);
    case 'a': return Action::single(cliff::kLeft);
    case ' ':
    case '.': return Action::single(cliff::kNoop);
    default: return std::nullopt;
  }
}

std::optional<Action> river_key_action(char key) {
  Action action({1, 1, 1, 1});
  switch (key) {
    case 'r': action.branches[0] = 0; break;
    case 'f': action.branches[0] = 2; break;
    case 'q': action.branches[1] = 0; break;
    case 'e': action.branches[1] = 2; break;
    case 'w': action.branches[2] = 0; break;
    case 's': action.branches[2] = 2; break;
    case 'a': action.branches[3] = 0; break;
    case 'd': action.branches[3] = 2; break;
    case ' ':
    case '.': break;
    default: return std::nullopt;
  }
  return action;
}

std::string render_cliff_ascii(const cliff::CliffCircularEnv& env) {
  std::ostringstream out;
  const auto& state = env.state();
  for (int r = 0; r < cliff::kGridSize; ++r) {
    for (int c = 0; c < cliff::kGridSize; ++c) {
      const Cell cell{r, c};
      const int ring = cliff::ring_position(cell);
      char glyph = '.';
      if (env.layout().is_cliff(cell)) glyph = '#';
      else if (ring >= 0) glyph = state.visited[static_cast<std::size_t>(ring)] ? '+' : 'o';
      if (cell == state.agent) glyph = '@';
      out << glyph;
    }
    out << "\n";
  }
  out << "visited " << state.visited_count() << "/" << cliff::kTrackLength << "\n";
  return out.str();
}

std::string render_river_ascii(const river::RiverEnv& env) {
  // Agent-centred overhead view, 1 cell = 2 m, north up.
  constexpr int kHalf = 15;
  constexpr double kCell = 2.0;
  std::ostringstream out;
  const auto& pose = env.state().pose;
  for (int r = kHalf; r >= -kHalf; --r) {
    for (int c = -kHalf; c <= kHalf; ++c) {
      const Eigen::Vector2d xy = pose.position.head<2>() + Eigen::Vector2d(c * kCell, r * kCell);
      char glyph = env.is_water(xy) ? '~' : ' ';
      if (r == 0 && c == 0) glyph = '@';
      out << glyph;
    }
    out << "\n";
  }
  const auto& s = env.state();
  out << "alt " << env.altitude(pose) << " m  yaw " << pose.yaw * 180.0 / std::numbers::pi << " deg  covered "
      << s.visited_count << "/" << env.spline().segment_count() << "\n";
  return out.str();
}

DemoDataset keyboard_play(Environment& env, std::istream& keys, std::ostream& screen, int episodes,
                          std::optional<std::uint64_t> seed) {
  auto* grid = unwrap<cliff::CliffCircularEnv>(env);
  auto* river_env = unwrap<river::RiverEnv>(env);
  if (grid == nullptr && river_env == nullptr) throw std::invalid_argument("keyboard play supports cliff and river");
  auto render = [&] { screen << (grid != nullptr ? render_cliff_ascii(*grid) : render_river_ascii(*river_env)); };
  auto keymap = [&](char key) { return grid != nullptr ? cliff_key_action(key) : river_key_action(key); };

  DemoDataset dataset(grid != nullptr);
  char key = 0;
  for (int e = 0; e < episodes; ++e) {
    Observation obs = e == 0 ? env.reset(seed) : env.reset();
    Trajectory traj;
    render();
    bool done = false;
    while (!done) {
      if (!keys.get(key)) return dataset;
      if (key == 'x') return dataset;
      const auto action = keymap(key);
      if (!action) continue;
      StepResult result = env.step(*action);
      traj.observations.push_back(std::move(obs));
      traj.actions.push_back(*action);
      traj.rewards.push_back(result.reward);
      obs = std::move(result.observation);
      done = result.done();
      render();
      screen << "reward " << result.reward << "  episode " << traj.episodic_reward() << "\n";
    }
    screen << "episode over: keep? [y/n]\n";
    while (keys.get(key) && key != 'y' && key != 'n' && key != 'x') {
    }
    if (key == 'y') dataset.append_trajectory(std::move(traj));
    if (key == 'x' || !keys) return dataset;
  }
  return dataset;
}

}  // namespace trackrl
