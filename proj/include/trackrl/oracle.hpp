#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "trackrl/bc.hpp"
#include "trackrl/cliff_circular.hpp"
#include "trackrl/river.hpp"

namespace trackrl {

// Noise rate at which the scripted CliffCircular expert's mean episode
// reward is approximately zero (found by calibrate_cliff_noise over 1000
// episodes, seed 0).
inline constexpr double kCalibratedCliffNoise = 0.0581;

// State-privileged CliffCircular demonstrator: on the ring it steps to the
// next ring cell in its circulation direction, off the ring it takes a
// shortest cliff-free path to the nearest ring cell. With probability
// `noise` it emits a uniformly random action instead.
struct ScriptedCliffExpert {
  double noise = kCalibratedCliffNoise;
  bool clockwise = true;

  int plan(const cliff::CliffState& state, const cliff::GridLayout& layout) const;
  int act(const cliff::CliffState& state, const cliff::GridLayout& layout, Pcg32& rng) const;
};

// State-privileged river follower: steers toward a look-ahead point on the
// centerline, keeps near the center and holds an altitude below the bridge
// deck. With probability `noise` a step's action is uniformly random.
struct ScriptedRiverFollower {
  double noise = 0.0;
  double target_altitude = 3.0;
  int lookahead_segments = 4;

  Action plan(const river::RiverEnv& env) const;
  Action act(const river::RiverEnv& env, Pcg32& rng) const;
};

struct DemoStats {
  int episodes = 0;
  double mean_reward = 0.0;
  double mean_length = 0.0;
  double fall_rate = 0.0;  // fraction of episodes ending in failure
};

DemoDataset collect_cliff_demos(const ScriptedCliffExpert& expert, int episodes, std::uint64_t seed,
                                DemoStats* stats = nullptr);
// River demos are cut at `max_steps` steps each.
DemoDataset collect_river_demos(const ScriptedRiverFollower& follower, const river::RiverConfig& config,
                                int episodes, int max_steps, std::uint64_t seed, DemoStats* stats = nullptr);

// Bisection on the noise rate so the expert's mean reward over `episodes`
// episodes lands on `target`. Uses common random numbers across candidates.
double calibrate_cliff_noise(int episodes, std::uint64_t seed, double target = 0.0);

// Keymaps for human play.
//   CliffCircular: w up, d right, s down, a left, space/. no-op
//   River: r/f up/down, q/e yaw left/right, w/s forward/back, a/d left/right,
//          space/. no-op (one branch per key press)
std::optional<Action> cliff_key_action(char key);
std::optional<Action> river_key_action(char key);
std::string render_cliff_ascii(const cliff::CliffCircularEnv& env);
std::string render_river_ascii(const river::RiverEnv& env);

// Plays episodes from a key stream, rendering to `screen` after each step.
// After each episode asks keep (y) or discard (n); 'x' quits. Returns the
// kept episodes.
DemoDataset keyboard_play(Environment& env, std::istream& keys, std::ostream& screen, int episodes,
                          std::optional<std::uint64_t> seed = std::nullopt);

}  // namespace trackrl
