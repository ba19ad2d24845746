#include "trackrl/cliff_circular.hpp"

#include <algorithm>
#include <vector>

namespace trackrl::cliff {
namespace {

std::array<Cell, kTrackLength> make_ring() {
  std::array<Cell, kTrackLength> ring{};
  int k = 0;
  constexpr int lo = kBlockFirst - 1;
  constexpr int hi = kBlockLast + 1;
  for (int c = lo; c <= hi; ++c) ring[k++] = {lo, c};
  for (int r = lo + 1; r <= hi; ++r) ring[k++] = {r, hi};
  for (int c = hi - 1; c >= lo; --c) ring[k++] = {hi, c};
  for (int r = hi - 1; r > lo; --r) ring[k++] = {r, lo};
  return ring;
}

std::array<int, kCellCount> make_projection_table() {
  const auto& ring = track_ring();
  std::array<int, kCellCount> table{};
  for (int r = 0; r < kGridSize; ++r) {
    for (int c = 0; c < kGridSize; ++c) {
      int best = -1;
      int best_d2 = 0;
      int best_index = 0;
      for (int k = 0; k < kTrackLength; ++k) {
        const int dr = ring[k].row - r;
        const int dc = ring[k].col - c;
        const int d2 = dr * dr + dc * dc;
        if (best < 0 || d2 < best_d2 || (d2 == best_d2 && ring[k].index() < best_index)) {
          best = k;
          best_d2 = d2;
          best_index = ring[k].index();
        }
      }
      table[r * kGridSize + c] = best;
    }
  }
  return table;
}

}  // namespace

Cell moved(Cell cell, int action) {
  Cell next = cell;
  switch (action) {
    case kUp: --next.row; break;
    case kRight: ++next.col; break;
    case kDown: ++next.row; break;
    case kLeft: --next.col; break;
    default: break;
  }
  return next.inside() ? next : cell;
}

bool is_static_cliff(Cell cell) {
  return cell.row >= kBlockFirst && cell.row <= kBlockLast && cell.col >= kBlockFirst &&
         cell.col <= kBlockLast;
}

const std::array<Cell, kTrackLength>& track_ring() {
  static const std::array<Cell, kTrackLength> ring = make_ring();
  return ring;
}

int ring_position(Cell cell) {
  const auto& ring = track_ring();
  const auto it = std::find(ring.begin(), ring.end(), cell);
  return it == ring.end() ? -1 : static_cast<int>(it - ring.begin());
}

int track_projection(Cell cell) {
  static const std::array<int, kCellCount> table = make_projection_table();
  return table[cell.index()];
}

GridLayout build_layout(Pcg32& rng) {
  GridLayout layout;
  std::vector<Cell> walkable;
  for (int r = 0; r < kGridSize; ++r) {
    for (int c = 0; c < kGridSize; ++c) {
      const Cell cell{r, c};
      layout.cliff[cell.index()] = is_static_cliff(cell);
      if (!is_static_cliff(cell)) walkable.push_back(cell);
    }
  }
  layout.start = walkable[rng.uniform_int(static_cast<std::uint32_t>(walkable.size()))];

  std::vector<Cell> candidates;
  for (const Cell& cell : walkable) {
    if (ring_position(cell) < 0 && !(cell == layout.start)) candidates.push_back(cell);
  }
  for (Cell& slot : layout.random_cliffs) {
    const auto pick = rng.uniform_int(static_cast<std::uint32_t>(candidates.size()));
    slot = candidates[pick];
    candidates.erase(candidates.begin() + pick);
    layout.cliff[slot.index()] = true;
  }
  return layout;
}

int CliffState::visited_count() const {
  return static_cast<int>(std::count(visited.begin(), visited.end(), true));
}

Observation observe(const CliffState& state, const GridLayout& layout) {
  Observation obs(kObservationDim);
  constexpr int half = kWindow / 2;
  int k = 0;
  for (int dr = -half; dr <= half; ++dr) {
    for (int dc = -half; dc <= half; ++dc) {
      obs[k++] = layout.is_cliff({state.agent.row + dr, state.agent.col + dc}) ? 1.0 : 0.0;
    }
  }
  return obs;
}

CliffStep advance(CliffState& state, const GridLayout& layout, int action) {
  if (action < 0 || action >= kActionCount) throw ContractViolation("cliff action out of range");
  CliffStep out;
  state.agent = moved(state.agent, action);
  ++state.steps_elapsed;
  if (layout.is_cliff(state.agent)) {
    out.reward = kCliffReward;
    out.terminated = true;
    out.fell = true;
    return out;
  }
  const int projection = track_projection(state.agent);
  if (!state.visited[projection]) {
    state.visited[projection] = true;
    out.reward = 1.0;
    out.terminated = state.visited_count() == kTrackLength;
  }
  return out;
}

CliffCircularEnv::CliffCircularEnv()
    : spec_{kObservationDim, {kActionCount}, kTimeLimit} {}

Observation CliffCircularEnv::reset(std::optional<std::uint64_t> seed) {
  Pcg32& rng = random_.on_reset(seed);
  const GridLayout layout = build_layout(rng);
  return reset_to(layout, layout.start);
}

Observation CliffCircularEnv::reset_to(const GridLayout& layout, Cell start) {
  layout_ = layout;
  layout_.start = start;
  state_ = CliffState{};
  state_.agent = start;
  finished_ = false;
  return observe(state_, layout_);
}

StepResult CliffCircularEnv::step(const Action& action) {
  if (finished_) throw ContractViolation("step called on a finished episode; call reset first");
  if (!spec_.valid(action)) throw ContractViolation("invalid CliffCircular action");
  const CliffStep outcome = advance(state_, layout_, action[0]);
  finished_ = outcome.terminated;
  return {observe(state_, layout_), outcome.reward, outcome.terminated, false};
}

std::vector<double> CliffCircularEnv::trace_point() const {
  return {static_cast<double>(state_.agent.row), static_cast<double>(state_.agent.col)};
}

nlohmann::json CliffCircularEnv::layout_json() const {
  nlohmann::json cliffs = nlohmann::json::array();
  for (const Cell& c : layout_.random_cliffs) cliffs.push_back({c.row, c.col});
  return {{"random_cliffs", cliffs}, {"start", {layout_.start.row, layout_.start.col}}};
}

nlohmann::json CliffCircularEnv::save_state() const {
  nlohmann::json cliffs = nlohmann::json::array();
  for (const Cell& c : layout_.random_cliffs) cliffs.push_back({c.row, c.col});
  std::vector<int> visited(state_.visited.begin(), state_.visited.end());
  return {{"random", random_.save()},
          {"random_cliffs", cliffs},
          {"start", {layout_.start.row, layout_.start.col}},
          {"agent", {state_.agent.row, state_.agent.col}},
          {"visited", visited},
          {"steps", state_.steps_elapsed},
          {"finished", finished_}};
}

void CliffCircularEnv::load_state(const nlohmann::json& state) {
  random_.load(state.at("random"));
  GridLayout layout;
  for (int i = 0; i < kCellCount; ++i) {
    layout.cliff[i] = is_static_cliff({i / kGridSize, i % kGridSize});
  }
  const auto& cliffs = state.at("random_cliffs");
  for (std::size_t i = 0; i < layout.random_cliffs.size(); ++i) {
    layout.random_cliffs[i] = {cliffs.at(i).at(0).get<int>(), cliffs.at(i).at(1).get<int>()};
    layout.cliff[layout.random_cliffs[i].index()] = true;
  }
  layout.start = {state.at("start").at(0).get<int>(), state.at("start").at(1).get<int>()};
  layout_ = layout;
  state_.agent = {state.at("agent").at(0).get<int>(), state.at("agent").at(1).get<int>()};
  const auto visited = state.at("visited").get<std::vector<int>>();
  for (int i = 0; i < kTrackLength; ++i) state_.visited[i] = visited.at(i) != 0;
  state_.steps_elapsed = state.at("steps").get<int>();
  finished_ = state.at("finished").get<bool>();
}

std::unique_ptr<Environment> make_cliff_env(int time_limit) {
  return time_limit_wrap(std::make_unique<CliffCircularEnv>(), time_limit);
}

}  // namespace trackrl::cliff
