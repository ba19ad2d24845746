#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>

#include "trackrl/synergy.hpp"

namespace trackrl {

// Run configuration file: one "key = value" per line, '#' comments. The env
// key picks the defaults, every other key overrides one field. Unknown keys
// and malformed values are errors.
//
//   env, method, seed, total_steps, t_reward, eval_every, eval_episodes,
//   time_limit, hidden (comma list), gamma, gae_lambda, clip, epochs,
//   minibatch, entropy_coef, w1, w2, lr, horizon, max_grad_norm,
//   expert_target (distribution | sampled_action), bc_epochs, bc_batch,
//   bc_lr, retrain_epochs, retrain_batch, retrain_lr, window, cold_retrain,
//   dedup (first | last | off | harvested), w3_initial, w3_latched,
//   w3_force (none | number), harvest, demos, river_map
//
// Relative paths are resolved against `base_dir`.
SynergyConfig parse_run_config(std::istream& in, const std::string& base_dir = "");
SynergyConfig load_run_config(const std::string& path);
void write_run_config(std::ostream& out, const SynergyConfig& config);

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace trackrl
