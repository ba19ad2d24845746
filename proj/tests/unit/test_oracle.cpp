#include <doctest.h>

#include <sstream>
#include <vector>

#include "trackrl/oracle.hpp"

using namespace trackrl;

namespace {

// Flood fill over safe cells from the start.
bool ring_reachable(const cliff::GridLayout& layout, cliff::Cell start) {
  std::vector<cliff::Cell> stack = {start};
  std::vector<bool> seen(cliff::kCellCount, false);
  seen[start.index()] = true;
  while (!stack.empty()) {
    const cliff::Cell c = stack.back();
    stack.pop_back();
    if (cliff::ring_position(c) >= 0) return true;
    for (const cliff::Cell n : {cliff::Cell{c.row - 1, c.col}, cliff::Cell{c.row + 1, c.col},
                                cliff::Cell{c.row, c.col - 1}, cliff::Cell{c.row, c.col + 1}}) {
      if (n.inside() && !layout.is_cliff(n) && !seen[n.index()]) {
        seen[n.index()] = true;
        stack.push_back(n);
      }
    }
  }
  return false;
}

}  // namespace

TEST_CASE("noise-free expert never falls and collects 20 whenever the ring is reachable") {
  auto env = cliff::make_cliff_env();
  auto& grid = dynamic_cast<cliff::CliffCircularEnv&>(dynamic_cast<TimeLimit&>(*env).inner());
  ScriptedCliffExpert expert;
  expert.noise = 0.0;
  Pcg32 rng = Pcg32::stream(1, "unused");
  int enclosed = 0;
  double length_sum = 0.0;
  int completed = 0;
  env->reset(1);
  for (int episode = 0; episode < 10000; ++episode) {
    if (episode > 0) env->reset();
    const bool reachable = ring_reachable(grid.layout(), grid.layout().start);
    double total = 0.0;
    int steps = 0;
    StepResult r;
    do {
      r = env->step(Action::single(expert.act(grid.state(), grid.layout(), rng)));
      total += r.reward;
      ++steps;
    } while (!r.done());
    REQUIRE(total >= 0.0);
    if (reachable) {
      REQUIRE(total == 20.0);
      REQUIRE(steps >= 20);
      length_sum += steps;
      ++completed;
    } else {
      ++enclosed;
      REQUIRE(r.truncated);
    }
  }
  const double mean_length = length_sum / completed;
  // One new projection per step at most, so 20 steps is the floor.
  CHECK(mean_length >= 20.0);
  CHECK(mean_length <= 30.0);
  CHECK(enclosed < 100);
  MESSAGE("noise-free expert mean length " << mean_length << ", enclosed starts " << enclosed);
}

TEST_CASE("expert plan from the ring follows the ring") {
  cliff::GridLayout layout;
  for (int i = 0; i < cliff::kCellCount; ++i) layout.cliff[i] = cliff::is_static_cliff({i / 12, i % 12});
  cliff::CliffState state;
  ScriptedCliffExpert expert;
  for (int k = 0; k < cliff::kTrackLength; ++k) {
    state.agent = cliff::track_ring()[k];
    const cliff::Cell next = cliff::moved(state.agent, expert.plan(state, layout));
    CHECK(next == cliff::track_ring()[(k + 1) % cliff::kTrackLength]);
  }
}

TEST_CASE("calibrated noise puts the mean reward near zero") {
  const double noise = calibrate_cliff_noise(1000, 0);
  DemoStats stats;
  collect_cliff_demos(ScriptedCliffExpert{noise, true}, 1000, 0, &stats);
  CHECK(stats.mean_reward >= -3.0);
  CHECK(stats.mean_reward <= 3.0);
  CHECK(noise == doctest::Approx(kCalibratedCliffNoise).epsilon(0.001));
  MESSAGE("calibrated noise " << noise << " mean reward " << stats.mean_reward << " fall rate " << stats.fall_rate);
}

TEST_CASE("demo collection counts and determinism") {
  const DemoDataset a = collect_cliff_demos(ScriptedCliffExpert{}, 100, 5);
  const DemoDataset b = collect_cliff_demos(ScriptedCliffExpert{}, 100, 5);
  CHECK(a.trajectories().size() == 100);
  CHECK(a.discrete());
  std::ostringstream ta;
  std::ostringstream tb;
  write_demos_jsonl(ta, a);
  write_demos_jsonl(tb, b);
  CHECK(ta.str() == tb.str());

  DemoStats stats;
  const DemoDataset r = collect_river_demos(ScriptedRiverFollower{}, river::default_river_config(), 50, 50, 0, &stats);
  CHECK(r.trajectories().size() == 50);
  CHECK(r.transition_count() == 2500);
  CHECK_FALSE(r.discrete());
  CHECK(stats.fall_rate == 0.0);
}

TEST_CASE("keymaps") {
  CHECK(cliff_key_action('w') == Action::single(cliff::kUp));
  CHECK(cliff_key_action('d') == Action::single(cliff::kRight));
  CHECK(cliff_key_action('s') == Action::single(cliff::kDown));
  CHECK(cliff_key_action('a') == Action::single(cliff::kLeft));
  CHECK(cliff_key_action('.') == Action::single(cliff::kNoop));
  CHECK_FALSE(cliff_key_action('z'));
  CHECK(river_key_action('w') == Action({1, 1, 0, 1}));
  CHECK(river_key_action('q') == Action({1, 0, 1, 1}));
  CHECK(river_key_action('f') == Action({2, 1, 1, 1}));
  CHECK(river_key_action(' ') == Action({1, 1, 1, 1}));
  CHECK_FALSE(river_key_action('z'));
}

TEST_CASE("keyboard play keeps and discards episodes") {
  auto env = cliff::make_cliff_env(3);
  std::istringstream keys("w?..y...nx");
  std::ostringstream screen;
  const DemoDataset kept = keyboard_play(*env, keys, screen, 5, 0);
  REQUIRE(kept.trajectories().size() == 1);
  CHECK(kept.trajectories()[0].size() == 3);
  CHECK(kept.trajectories()[0].actions[0] == Action::single(cliff::kUp));
  CHECK(screen.str().find("keep?") != std::string::npos);
  CHECK(screen.str().find('@') != std::string::npos);

  std::stringstream text;
  write_demos_jsonl(text, kept);
  const DemoDataset back = read_demos_jsonl(text, true);
  CHECK(back.trajectories()[0].observations == kept.trajectories()[0].observations);
  CHECK(back.trajectories()[0].actions == kept.trajectories()[0].actions);

  std::istringstream discard("...n");
  CHECK(keyboard_play(*env, discard, screen, 1, 0).trajectories().empty());
}

TEST_CASE("river rendering marks the agent") {
  river::RiverEnv env(river::default_river_config());
  env.reset(0);
  const std::string view = render_river_ascii(env);
  CHECK(std::count(view.begin(), view.end(), '\n') >= 31);
  CHECK(view.find('@') != std::string::npos);
}
