#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "trackrl/adam.hpp"
#include "trackrl/distributions.hpp"
#include "trackrl/env.hpp"
#include "trackrl/losses.hpp"
#include "trackrl/mlp.hpp"

namespace trackrl {

enum class EpisodeEnd : std::uint8_t { kNone = 0, kTerminated = 1, kTruncated = 2 };

struct GaeResult {
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;
};

// Generalized advantage estimation. Terminated steps bootstrap zero;
// truncated steps bootstrap `bootstrap_values[t]` (the value of the final
// observation) and do not carry advantages across the boundary. The step
// after the last one bootstraps `last_value`.
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const EpisodeEnd> ends, std::span<const double> bootstrap_values,
                      double last_value, double gamma, double lambda);

// One minibatch of PPO training data; samples are columns.
template <typename Scalar>
struct PpoBatch {
  MatrixX<Scalar> observations;
  ActionBatch actions;
  VectorX<Scalar> old_log_probs;
  VectorX<Scalar> advantages;  // already normalized
  VectorX<Scalar> returns;
  MatrixX<Scalar> expert_probs;  // empty when unguided
};

template <typename Scalar>
struct PpoObjective {
  Scalar total = Scalar(0);
  Scalar policy = Scalar(0);
  Scalar value = Scalar(0);
  Scalar action = Scalar(0);
  Scalar entropy = Scalar(0);
  Scalar approx_kl = Scalar(0);
  Scalar clip_fraction = Scalar(0);
  VectorX<Scalar> policy_grad;
  VectorX<Scalar> value_grad;
};

// w1 (L_policy - c H) + w2 L_value + w3 L_action and its gradients with
// respect to both networks' parameters. The action term is skipped when the
// batch has no expert distributions or w3 is zero.
template <typename Scalar>
PpoObjective<Scalar> ppo_objective(const Mlp<Scalar>& policy, const Mlp<Scalar>& value, const PpoBatch<Scalar>& batch,
                                   Scalar clip, Scalar w1, Scalar w2, Scalar w3, Scalar entropy_coef,
                                   std::span<const int> branches) {
  MlpCache<Scalar> policy_cache;
  MlpCache<Scalar> value_cache;
  PpoObjective<Scalar> out;
  const MatrixX<Scalar> logits = policy.forward(batch.observations, policy_cache);
  const PolicyLoss<Scalar> pl =
      clipped_policy_loss(logits, batch.actions, batch.old_log_probs, batch.advantages, clip, branches);
  const LossAndGrad<Scalar> ent = mean_entropy(logits, branches);
  MatrixX<Scalar> dlogits = w1 * pl.grad;
  if (entropy_coef != Scalar(0)) dlogits -= (w1 * entropy_coef) * ent.grad;
  if (batch.expert_probs.size() > 0 && w3 != Scalar(0)) {
    const LossAndGrad<Scalar> al = action_loss(batch.expert_probs, logits, branches);
    dlogits += w3 * al.grad;
    out.action = al.loss;
  }
  const MatrixX<Scalar> values = value.forward(batch.observations, value_cache);
  const LossAndGrad<Scalar> vl = value_loss(values, batch.returns);
  out.policy = pl.loss;
  out.value = vl.loss;
  out.entropy = ent.loss;
  out.approx_kl = pl.approx_kl;
  out.clip_fraction = pl.clip_fraction;
  out.total = w1 * (pl.loss - entropy_coef * ent.loss) + w2 * vl.loss + w3 * out.action;
  out.policy_grad = policy.backward(policy_cache, dlogits);
  out.value_grad = value.backward(value_cache, w2 * vl.grad);
  return out;
}

enum class ExpertTarget { kDistribution, kSampledAction };

struct PpoConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip = 0.2;
  int epochs = 10;
  int minibatch = 64;
  double entropy_coef = 0.0;
  double w1 = 1.0;
  double w2 = 1.0;
  double lr = 3e-4;
  int horizon = 1024;
  double max_grad_norm = 0.5;
  ExpertTarget expert_target = ExpertTarget::kDistribution;

  void validate() const;
};

// Fixed-horizon store of on-policy transitions.
class RolloutBuffer {
 public:
  RolloutBuffer(int horizon, int observation_dim, int branch_count);

  void add(const Observation& observation, const Action& action, double reward, double value,
           double log_prob, EpisodeEnd end, double bootstrap_value = 0.0);
  void finish(double last_value, double gamma, double lambda);
  void clear() { size_ = 0; }

  int size() const { return size_; }
  int horizon() const { return horizon_; }
  bool full() const { return size_ == horizon_; }

  Eigen::MatrixXf observations;  // obs_dim x horizon
  ActionBatch actions;           // branches x horizon
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<double> log_probs;
  std::vector<EpisodeEnd> ends;
  std::vector<double> bootstrap_values;
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;

  nlohmann::json save() const;
  void load(const nlohmann::json& state);

 private:
  int horizon_;
  int size_ = 0;
};

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double action_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  int minibatches = 0;
};

class PpoLearner {
 public:
  PpoLearner(const EnvSpec& spec, PpoConfig config, const std::vector<int>& hidden, std::uint64_t seed);

  struct Decision {
    Action action;
    double log_prob = 0.0;
    double value = 0.0;
  };

  Decision act(const Observation& observation, Pcg32& rng) const;
  double predict_value(const Observation& observation) const;

  // Epochs x minibatch sweeps over a finished buffer. With an expert and
  // w3 > 0 the expert cross-entropy term is added; otherwise the expert is
  // never queried.
  UpdateStats update(const RolloutBuffer& buffer, const Mlp<float>* expert, double w3, Pcg32* expert_rng = nullptr);

  const Mlp<float>& policy() const { return policy_; }
  Mlp<float>& policy() { return policy_; }
  const Mlp<float>& value_net() const { return value_; }
  const PpoConfig& config() const { return config_; }
  std::span<const int> branches() const { return branches_; }

  void save(const std::string& directory) const;
  void load(const std::string& directory);

 private:
  PpoConfig config_;
  std::vector<int> branches_;
  Mlp<float> policy_;
  Mlp<float> value_;
  AdamState<float> policy_opt_;
  AdamState<float> value_opt_;
  Pcg32 shuffle_rng_;
};

std::vector<int> network_dims(int input, const std::vector<int>& hidden, int output);

}  // namespace trackrl
