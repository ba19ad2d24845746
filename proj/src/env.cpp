#include "trackrl/env.hpp"

#include <numeric>

namespace trackrl {

int EnvSpec::logits_dim() const {
  return std::accumulate(action_branches.begin(), action_branches.end(), 0);
}

bool EnvSpec::valid(const Action& action) const {
  if (action.size() != action_branches.size()) return false;
  for (std::size_t i = 0; i < action.size(); ++i) {
    if (action[i] < 0 || action[i] >= action_branches[i]) return false;
  }
  return true;
}

TimeLimit::TimeLimit(std::unique_ptr<Environment> inner, int limit)
    : inner_(std::move(inner)), spec_(inner_->spec()), limit_(limit) {
  if (limit <= 0) throw std::invalid_argument("time limit must be positive");
  spec_.max_episode_steps = limit;
}

Observation TimeLimit::reset(std::optional<std::uint64_t> seed) {
  elapsed_ = 0;
  finished_ = false;
  return inner_->reset(seed);
}

StepResult TimeLimit::step(const Action& action) {
  if (finished_) throw ContractViolation("step called on a finished episode; call reset first");
  StepResult result = inner_->step(action);
  ++elapsed_;
  if (!result.terminated && elapsed_ >= limit_) result.truncated = true;
  finished_ = result.done();
  return result;
}

nlohmann::json TimeLimit::save_state() const {
  return {{"elapsed", elapsed_}, {"finished", finished_}, {"inner", inner_->save_state()}};
}

void TimeLimit::load_state(const nlohmann::json& state) {
  elapsed_ = state.at("elapsed").get<int>();
  finished_ = state.at("finished").get<bool>();
  inner_->load_state(state.at("inner"));
}

std::unique_ptr<Environment> time_limit_wrap(std::unique_ptr<Environment> env, int limit) {
  return std::make_unique<TimeLimit>(std::move(env), limit);
}

Pcg32& EnvRandom::on_reset(std::optional<std::uint64_t> seed) {
  if (seed) {
    rng_ = Pcg32::stream(*seed, "env");
    seeded_ = true;
  } else if (!seeded_) {
    rng_ = Pcg32::from_entropy();
    seeded_ = true;
  }
  return rng_;
}

nlohmann::json EnvRandom::save() const {
  return {{"state", rng_.state()}, {"inc", rng_.increment()}, {"seeded", seeded_}};
}

void EnvRandom::load(const nlohmann::json& state) {
  rng_.restore(state.at("state").get<std::uint64_t>(), state.at("inc").get<std::uint64_t>());
  seeded_ = state.at("seeded").get<bool>();
}

}  // namespace trackrl
