#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "trackrl/distributions.hpp"
#include "trackrl/env.hpp"
#include "trackrl/mlp.hpp"

namespace trackrl {

struct Trajectory {
  std::vector<Observation> observations;
  std::vector<Action> actions;
  std::vector<double> rewards;

  std::size_t size() const { return actions.size(); }
  double episodic_reward() const;
  void validate() const;
};

struct TransitionRef {
  std::size_t trajectory = 0;
  std::size_t step = 0;
  friend bool operator==(const TransitionRef&, const TransitionRef&) = default;
};

// Dense training view of a set of transitions.
struct TransitionSet {
  Eigen::MatrixXf observations;  // obs_dim x n
  ActionBatch actions;           // branches x n
  Eigen::Index size() const { return observations.cols(); }
};

// Ordered trajectory store. Trajectories are kept intact; training reads a
// flattened transition view in insertion order, from which dedup() removes
// repeated (observation, action) pairs when observations are discrete.
class DemoDataset {
 public:
  explicit DemoDataset(bool discrete_observations = false) : discrete_(discrete_observations) {}

  void append_trajectory(Trajectory trajectory);
  // Drops repeated (observation, action) pairs, keeping the first occurrence
  // or, with `keep_last`, the last one. The first `exempt` trajectories are
  // never thinned but still count as seen. No-op for continuous observations.
  void dedup(bool keep_last = false, std::size_t exempt = 0);

  bool discrete() const { return discrete_; }
  std::size_t transition_count() const { return view_.size(); }
  const std::vector<TransitionRef>& transitions() const { return view_; }
  const std::vector<Trajectory>& trajectories() const { return trajectories_; }
  // Last min(k, size) transitions of the view, in insertion order.
  std::vector<TransitionRef> latest_window(std::size_t k) const;
  TransitionSet gather(std::span<const TransitionRef> refs) const;
  TransitionSet all() const { return gather(view_); }

  const Observation& observation(const TransitionRef& r) const {
    return trajectories_[r.trajectory].observations[r.step];
  }
  const Action& action(const TransitionRef& r) const { return trajectories_[r.trajectory].actions[r.step]; }

  // Restores a saved view (checkpoints).
  void set_view(std::vector<TransitionRef> view);

 private:
  bool discrete_;
  std::vector<Trajectory> trajectories_;
  std::vector<TransitionRef> view_;
};

// One trajectory per line: {"obs": [[...]...], "acts": [[...]...], "rews": [...]}.
void write_trajectory_jsonl(std::ostream& out, const Trajectory& trajectory);
void write_demos_jsonl(std::ostream& out, const DemoDataset& dataset);
// Validates length alignment and finiteness; optional shape checks when the
// dims are positive.
DemoDataset read_demos_jsonl(std::istream& in, bool discrete, int observation_dim = 0,
                             int branch_count = 0);
DemoDataset load_demos(const std::string& path, bool discrete, int observation_dim = 0,
                       int branch_count = 0);

struct BcConfig {
  int epochs = 50;
  int batch_size = 32;
  double lr = 1e-3;
};

struct BcReport {
  double accuracy = 0.0;
  // Full-data mean negative log-likelihood after each epoch.
  std::vector<double> epoch_losses;
};

// Maximum-likelihood fit of `policy` to the demonstrated actions with Adam,
// in place (warm start).
BcReport train_bc(Mlp<float>& policy, std::span<const int> branches, const TransitionSet& data,
                  const BcConfig& config, Pcg32& rng);
// Fraction of transitions whose argmax action equals the demonstrated one
// on every branch.
double bc_accuracy(const Mlp<float>& policy, std::span<const int> branches, const TransitionSet& data);
double bc_mean_nll(const Mlp<float>& policy, std::span<const int> branches, const TransitionSet& data);

}  // namespace trackrl
