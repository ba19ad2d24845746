#include "trackrl/distributions.hpp"

#include <cmath>

namespace trackrl {

Action sample_action(const Eigen::Ref<const Eigen::VectorXd>& log_probs, std::span<const int> branches,
                     Pcg32& rng) {
  Action action;
  action.branches.reserve(branches.size());
  Eigen::Index offset = 0;
  for (int size : branches) {
    const double u = rng.uniform();
    double cumulative = 0.0;
    int chosen = size - 1;
    for (int i = 0; i < size; ++i) {
      cumulative += std::exp(log_probs[offset + i]);
      if (u < cumulative) {
        chosen = i;
        break;
      }
    }
    action.branches.push_back(chosen);
    offset += size;
  }
  return action;
}

Action argmax_action(const Eigen::Ref<const Eigen::VectorXd>& log_probs, std::span<const int> branches) {
  Action action;
  Eigen::Index offset = 0;
  for (int size : branches) {
    Eigen::Index best = 0;
    log_probs.segment(offset, size).maxCoeff(&best);
    action.branches.push_back(static_cast<int>(best));
    offset += size;
  }
  return action;
}

ActionBatch to_action_batch(std::span<const Action> actions, std::size_t branch_count) {
  ActionBatch batch(static_cast<Eigen::Index>(branch_count), static_cast<Eigen::Index>(actions.size()));
  for (std::size_t j = 0; j < actions.size(); ++j) {
    if (actions[j].size() != branch_count) throw std::invalid_argument("action branch count mismatch");
    for (std::size_t b = 0; b < branch_count; ++b) {
      batch(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(j)) = actions[j][b];
    }
  }
  return batch;
}

}  // namespace trackrl
