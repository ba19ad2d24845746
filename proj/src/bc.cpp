#include "trackrl/bc.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <unordered_set>

#include "trackrl/adam.hpp"
#include "trackrl/losses.hpp"

namespace trackrl {

double Trajectory::episodic_reward() const {
  return std::accumulate(rewards.begin(), rewards.end(), 0.0);
}

void Trajectory::validate() const {
  if (observations.size() != actions.size() || rewards.size() != actions.size()) {
    throw std::invalid_argument("trajectory observations, actions and rewards are not aligned");
  }
  for (const auto& o : observations) {
    if (!o.allFinite()) throw std::invalid_argument("trajectory holds a non-finite observation");
  }
  for (double r : rewards) {
    if (!std::isfinite(r)) throw std::invalid_argument("trajectory holds a non-finite reward");
  }
}

void DemoDataset::append_trajectory(Trajectory trajectory) {
  trajectory.validate();
  const std::size_t t = trajectories_.size();
  for (std::size_t s = 0; s < trajectory.size(); ++s) view_.push_back({t, s});
  trajectories_.push_back(std::move(trajectory));
}

void DemoDataset::dedup(bool keep_last, std::size_t exempt) {
  if (!discrete_) return;
  std::unordered_set<std::string> seen;
  std::vector<TransitionRef> kept;
  kept.reserve(view_.size());
  if (keep_last) std::reverse(view_.begin(), view_.end());
  for (const TransitionRef& r : view_) {
    const Observation& o = observation(r);
    const Action& a = action(r);
    std::string key(static_cast<std::size_t>(o.size()) * sizeof(double) + a.size() * sizeof(int), '\0');
    std::memcpy(key.data(), o.data(), static_cast<std::size_t>(o.size()) * sizeof(double));
    std::memcpy(key.data() + o.size() * static_cast<Eigen::Index>(sizeof(double)), a.branches.data(),
                a.size() * sizeof(int));
    if (seen.insert(std::move(key)).second || r.trajectory < exempt) kept.push_back(r);
  }
  if (keep_last) std::reverse(kept.begin(), kept.end());
  view_ = std::move(kept);
}

std::vector<TransitionRef> DemoDataset::latest_window(std::size_t k) const {
  const std::size_t n = std::min(k, view_.size());
  return {view_.end() - static_cast<std::ptrdiff_t>(n), view_.end()};
}

TransitionSet DemoDataset::gather(std::span<const TransitionRef> refs) const {
  TransitionSet set;
  if (refs.empty()) return set;
  const Observation& first = observation(refs.front());
  set.observations.resize(first.size(), static_cast<Eigen::Index>(refs.size()));
  set.actions.resize(static_cast<Eigen::Index>(action(refs.front()).size()),
                     static_cast<Eigen::Index>(refs.size()));
  for (std::size_t j = 0; j < refs.size(); ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    set.observations.col(col) = observation(refs[j]).cast<float>();
    const Action& a = action(refs[j]);
    for (std::size_t b = 0; b < a.size(); ++b) set.actions(static_cast<Eigen::Index>(b), col) = a[b];
  }
  return set;
}

void DemoDataset::set_view(std::vector<TransitionRef> view) {
  for (const auto& r : view) {
    if (r.trajectory >= trajectories_.size() || r.step >= trajectories_[r.trajectory].size()) {
      throw std::invalid_argument("dataset view references a missing transition");
    }
  }
  view_ = std::move(view);
}

void write_trajectory_jsonl(std::ostream& out, const Trajectory& trajectory) {
  nlohmann::json line;
  nlohmann::json obs = nlohmann::json::array();
  for (const auto& o : trajectory.observations) obs.push_back(std::vector<double>(o.data(), o.data() + o.size()));
  nlohmann::json acts = nlohmann::json::array();
  for (const auto& a : trajectory.actions) acts.push_back(a.branches);
  line["obs"] = std::move(obs);
  line["acts"] = std::move(acts);
  line["rews"] = trajectory.rewards;
  out << line.dump() << "\n";
}

void write_demos_jsonl(std::ostream& out, const DemoDataset& dataset) {
  for (const auto& t : dataset.trajectories()) write_trajectory_jsonl(out, t);
}

DemoDataset read_demos_jsonl(std::istream& in, bool discrete, int observation_dim, int branch_count) {
  DemoDataset dataset(discrete);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      Trajectory t;
      for (const auto& o : j.at("obs")) {
        const auto values = o.get<std::vector<double>>();
        if (observation_dim > 0 && static_cast<int>(values.size()) != observation_dim) {
          throw std::invalid_argument("observation has wrong length");
        }
        t.observations.push_back(Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())));
      }
      for (const auto& a : j.at("acts")) {
        Action action(a.get<std::vector<int>>());
        if (branch_count > 0 && static_cast<int>(action.size()) != branch_count) {
          throw std::invalid_argument("action has wrong branch count");
        }
        t.actions.push_back(std::move(action));
      }
      t.rewards = j.at("rews").get<std::vector<double>>();
      dataset.append_trajectory(std::move(t));
    } catch (const std::exception& e) {
      throw std::invalid_argument("demo line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return dataset;
}

DemoDataset load_demos(const std::string& path, bool discrete, int observation_dim, int branch_count) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open demos " + path);
  return read_demos_jsonl(in, discrete, observation_dim, branch_count);
}

double bc_mean_nll(const Mlp<float>& policy, std::span<const int> branches, const TransitionSet& data) {
  const Eigen::MatrixXf logits = policy.forward(data.observations);
  return static_cast<double>(nll_loss(logits, data.actions, branches).loss);
}

double bc_accuracy(const Mlp<float>& policy, std::span<const int> branches, const TransitionSet& data) {
  if (data.size() == 0) return 0.0;
  const Eigen::MatrixXf logits = policy.forward(data.observations);
  Eigen::Index correct = 0;
  for (Eigen::Index j = 0; j < data.size(); ++j) {
    const Action best = argmax_action(logits.col(j).cast<double>(), branches);
    bool match = true;
    for (std::size_t b = 0; b < best.size(); ++b) match = match && best[b] == data.actions(static_cast<Eigen::Index>(b), j);
    correct += match ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

BcReport train_bc(Mlp<float>& policy, std::span<const int> branches, const TransitionSet& data,
                  const BcConfig& config, Pcg32& rng) {
  const Eigen::Index n = data.size();
  if (n == 0) throw std::invalid_argument("behavior cloning needs at least one transition");
  if (config.epochs <= 0 || config.batch_size <= 0) throw std::invalid_argument("bad BC configuration");
  AdamState<float> opt(policy.num_parameters(), AdamSettings{config.lr, 0.9, 0.999, 1e-8});
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  MlpCache<float> cache;
  BcReport report;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (auto i = static_cast<std::size_t>(n) - 1; i > 0; --i) {
      const auto j = rng.uniform_int(static_cast<std::uint32_t>(i + 1));
      std::swap(order[i], order[j]);
    }
    for (Eigen::Index start = 0; start < n; start += config.batch_size) {
      const Eigen::Index size = std::min<Eigen::Index>(config.batch_size, n - start);
      Eigen::MatrixXf obs(data.observations.rows(), size);
      ActionBatch acts(data.actions.rows(), size);
      for (Eigen::Index k = 0; k < size; ++k) {
        obs.col(k) = data.observations.col(order[static_cast<std::size_t>(start + k)]);
        acts.col(k) = data.actions.col(order[static_cast<std::size_t>(start + k)]);
      }
      const Eigen::MatrixXf logits = policy.forward(obs, cache);
      const LossAndGrad<float> loss = nll_loss(logits, acts, branches);
      const Eigen::VectorXf grad = policy.backward(cache, loss.grad);
      adam_step(opt, policy.parameters(), grad);
    }
    report.epoch_losses.push_back(bc_mean_nll(policy, branches, data));
  }
  report.accuracy = bc_accuracy(policy, branches, data);
  return report;
}

}  // namespace trackrl
