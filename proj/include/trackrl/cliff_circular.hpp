#pragma once

#include <array>

#include "trackrl/env.hpp"

// CliffCircular: a 12x12 grid with a central 4x4 cliff block. The agent must
// circumnavigate the block; each newly visited cell of the 20-cell ring
// around the block (measured by projection of the agent onto the ring) pays
// +1, stepping onto a cliff pays -100 and ends the episode.
namespace trackrl::cliff {

inline constexpr int kGridSize = 12;
inline constexpr int kCellCount = kGridSize * kGridSize;
inline constexpr int kBlockFirst = 4;
inline constexpr int kBlockLast = 7;
inline constexpr int kTrackLength = 20;
inline constexpr int kWindow = 5;
inline constexpr int kObservationDim = kWindow * kWindow;
inline constexpr int kActionCount = 5;
inline constexpr int kTimeLimit = 128;
inline constexpr double kCliffReward = -100.0;

enum Move : int { kNoop = 0, kUp = 1, kRight = 2, kDown = 3, kLeft = 4 };

struct Cell {
  int row = 0;
  int col = 0;

  int index() const { return row * kGridSize + col; }
  bool inside() const { return row >= 0 && row < kGridSize && col >= 0 && col < kGridSize; }
  friend bool operator==(const Cell&, const Cell&) = default;
};

Cell moved(Cell cell, int action);

bool is_static_cliff(Cell cell);
// Track ring in clockwise order starting at the top-left corner (3, 3).
const std::array<Cell, kTrackLength>& track_ring();
// Ring position of a track cell, or -1.
int ring_position(Cell cell);
// Ring position of the track cell nearest to `cell` (Euclidean distance on
// cell centers, ties to the smallest row-major index).
int track_projection(Cell cell);

struct GridLayout {
  std::array<bool, kCellCount> cliff{};
  std::array<Cell, 2> random_cliffs{};
  Cell start;

  // Outside the grid counts as cliff for observation purposes.
  bool is_cliff(Cell cell) const { return !cell.inside() || cliff[cell.index()]; }
};

GridLayout build_layout(Pcg32& rng);

struct CliffState {
  Cell agent;
  std::array<bool, kTrackLength> visited{};
  int steps_elapsed = 0;

  int visited_count() const;
};

// Row-major 5x5 window centered on the agent: 1 for cliff or off-grid.
Observation observe(const CliffState& state, const GridLayout& layout);

struct CliffStep {
  double reward = 0.0;
  bool terminated = false;
  bool fell = false;
};

// Transition rule; off-grid moves leave the agent in place.
CliffStep advance(CliffState& state, const GridLayout& layout, int action);

constexpr double episode_max_reward() { return static_cast<double>(kTrackLength); }

class CliffCircularEnv final : public Environment {
 public:
  CliffCircularEnv();

  const EnvSpec& spec() const override { return spec_; }
  Observation reset(std::optional<std::uint64_t> seed = std::nullopt) override;
  StepResult step(const Action& action) override;
  std::string name() const override { return "cliff"; }
  std::vector<double> trace_point() const override;
  nlohmann::json layout_json() const override;
  nlohmann::json save_state() const override;
  void load_state(const nlohmann::json& state) override;

  const GridLayout& layout() const { return layout_; }
  const CliffState& state() const { return state_; }
  // Places the episode in a given configuration (tests, scripted demos).
  Observation reset_to(const GridLayout& layout, Cell start);

 private:
  EnvSpec spec_;
  EnvRandom random_;
  GridLayout layout_;
  CliffState state_;
  bool finished_ = true;
};

std::unique_ptr<Environment> make_cliff_env(int time_limit = kTimeLimit);

}  // namespace trackrl::cliff
