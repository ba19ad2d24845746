#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "trackrl/bc.hpp"
#include "trackrl/ppo.hpp"
#include "trackrl/river.hpp"

namespace trackrl {

enum class Method { kPpo, kStaticBc, kDynamicBc, kPpoStaticBc, kPpoDynamicBc };

std::string method_name(Method method);
Method parse_method(const std::string& name);
inline bool trains_ppo(Method m) { return m == Method::kPpo || m == Method::kPpoStaticBc || m == Method::kPpoDynamicBc; }
inline bool needs_expert(Method m) { return m != Method::kPpo; }
inline bool retrains_expert(Method m) { return m == Method::kDynamicBc || m == Method::kPpoDynamicBc; }

struct SynergyConfig {
  std::string env = "cliff";  // "cliff" or "river"
  Method method = Method::kPpoDynamicBc;
  std::uint64_t seed = 0;
  long total_steps = 100000;
  double t_reward = 18.0;
  long eval_every = 10000;
  int eval_episodes = 10;
  int time_limit = 128;
  std::vector<int> hidden = {64, 64};
  PpoConfig ppo;
  BcConfig pretrain;  // 50 epochs on the demos
  BcConfig retrain{20, 32, 1e-3};
  std::size_t window = 2000;
  bool cold_retrain = false;
  enum class Dedup { kFirst, kLast, kOff, kHarvested } dedup = Dedup::kOff;
  double w3_initial = 1.0;
  double w3_latched = 0.2;
  // Test hooks: pin w3 and switch harvesting off.
  std::optional<double> force_w3;
  bool harvest = true;
  std::string demos;  // JSONL demo file, required by expert methods
  std::string river_map;  // empty: built-in default map
  river::RiverConfig river;

  void validate() const;
};

SynergyConfig default_synergy_config(const std::string& env);

struct W3Schedule {
  double value = 1.0;
  double latched_value = 0.2;
  bool latched = false;
};

// Latches to the lower weight the first time PPO's evaluation mean beats the
// expert's.
double update_w3(W3Schedule& schedule, double eval_ppo_mean, double eval_bc_mean);

struct EpisodeRecord {
  Trajectory trajectory;
  std::vector<std::vector<double>> trace;  // trace_point() before each step and at the end
  nlohmann::json layout;
};

struct EvalResult {
  double mean_reward = 0.0;
  double mean_length = 0.0;
  std::vector<double> rewards;
  std::vector<int> lengths;
  std::vector<EpisodeRecord> episodes;
};

using ActFn = std::function<Action(const Observation&, Pcg32&)>;

// Runs `episodes` full episodes. The environment is reset with `seed` once,
// actions draw from their own stream derived from `seed`.
EvalResult evaluate(Environment& env, int episodes, std::uint64_t seed, const ActFn& act);
// Stochastic sampling from a categorical policy network.
EvalResult evaluate(const Mlp<float>& policy, std::span<const int> branches, Environment& env, int episodes,
                    std::uint64_t seed);

// Episodes whose reward is strictly above the threshold.
std::vector<Trajectory> harvest(const std::vector<EpisodeRecord>& episodes, double t_reward);

// Fresh environment for a run (time limit applied).
std::unique_ptr<Environment> make_environment(const SynergyConfig& config);

struct RunSummary {
  long steps = 0;
  int metric_rows = 0;
  double final_mean_reward_100 = 0.0;
  double final_mean_length_100 = 0.0;
  double best_eval_mean = 0.0;
  double bc_eval_mean = 0.0;
  double final_w3 = 0.0;
  std::size_t dataset_transitions = 0;
};

// Interleaved rollout/update cycles with periodic evaluation, harvesting and
// expert retraining. Writes into `out_dir`:
//   metrics.csv       one row per rollout of `ppo.horizon` steps
//   config.txt        resolved configuration
//   best/policy.bin   weights of the best evaluation so far
//   final/            acting policy, value net and expert at the end
//   checkpoint/       full state at the latest evaluation
// With `resume`, continues from `out_dir/checkpoint` and reproduces the
// uninterrupted run exactly. `stop_after` ends the run early after that many
// steps (used to exercise resume).
RunSummary run_training(const SynergyConfig& config, const std::string& out_dir, bool resume = false,
                        std::optional<long> stop_after = std::nullopt);

inline constexpr const char* kMetricsSchema = "#schema=metrics.v1";
inline constexpr const char* kMetricsHeader =
    "step,mean_ep_reward_100,mean_ep_len_100,eval_mean,eval_len,bc_eval_mean,w3,dataset_transitions,"
    "policy_loss,value_loss,action_loss,entropy,approx_kl,clip_fraction";

}  // namespace trackrl
