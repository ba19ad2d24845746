#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <json.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "trackrl/random.hpp"

namespace trackrl {

using Observation = Eigen::VectorXd;

// One small non-negative integer per action branch.
struct Action {
  std::vector<int> branches;

  Action() = default;
  explicit Action(std::vector<int> values) : branches(std::move(values)) {}
  static Action single(int value) { return Action({value}); }

  int operator[](std::size_t i) const { return branches[i]; }
  std::size_t size() const { return branches.size(); }
  friend bool operator==(const Action&, const Action&) = default;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool terminated = false;  // task-defined end
  bool truncated = false;   // time-limit end

  bool done() const { return terminated || truncated; }
};

struct EnvSpec {
  int observation_dim = 0;
  std::vector<int> action_branches;
  int max_episode_steps = 0;

  int logits_dim() const;
  bool valid(const Action& action) const;
};

// Raised when the caller breaks the reset/step protocol or passes an action
// outside the declared action space.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class Environment {
 public:
  virtual ~Environment() = default;

  virtual const EnvSpec& spec() const = 0;
  // A seed reseeds the environment's stream; without one the current stream
  // continues (entropy-seeded if the environment was never seeded).
  virtual Observation reset(std::optional<std::uint64_t> seed = std::nullopt) = 0;
  virtual StepResult step(const Action& action) = 0;

  virtual std::string name() const = 0;
  // Agent position for episode traces (grid cell or world pose).
  virtual std::vector<double> trace_point() const = 0;
  // Episode-level layout for traces (random cliffs, start pose, ...).
  virtual nlohmann::json layout_json() const { return nlohmann::json::object(); }
  // Full mutable state including the random stream, for bit-exact resume.
  virtual nlohmann::json save_state() const = 0;
  virtual void load_state(const nlohmann::json& state) = 0;
};

// Ends episodes with truncated=true on the limit-th step unless the inner
// environment terminated on that step.
class TimeLimit final : public Environment {
 public:
  TimeLimit(std::unique_ptr<Environment> inner, int limit);

  const EnvSpec& spec() const override { return spec_; }
  Observation reset(std::optional<std::uint64_t> seed = std::nullopt) override;
  StepResult step(const Action& action) override;
  std::string name() const override { return inner_->name(); }
  std::vector<double> trace_point() const override { return inner_->trace_point(); }
  nlohmann::json layout_json() const override { return inner_->layout_json(); }
  nlohmann::json save_state() const override;
  void load_state(const nlohmann::json& state) override;

  int elapsed() const { return elapsed_; }
  Environment& inner() { return *inner_; }
  const Environment& inner() const { return *inner_; }

 private:
  std::unique_ptr<Environment> inner_;
  EnvSpec spec_;
  int limit_;
  int elapsed_ = 0;
  bool finished_ = true;
};

std::unique_ptr<Environment> time_limit_wrap(std::unique_ptr<Environment> env, int limit);

// Shared seeding helper: reseed on an explicit seed, lazily seed from entropy
// otherwise.
class EnvRandom {
 public:
  Pcg32& on_reset(std::optional<std::uint64_t> seed);
  Pcg32& rng() { return rng_; }
  nlohmann::json save() const;
  void load(const nlohmann::json& state);

 private:
  Pcg32 rng_;
  bool seeded_ = false;
};

}  // namespace trackrl
