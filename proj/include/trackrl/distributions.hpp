#pragma once

#include <Eigen/Core>
#include <span>
#include <stdexcept>

#include "trackrl/env.hpp"
#include "trackrl/mlp.hpp"

// Multi-categorical action heads. A logits column concatenates one block of
// logits per action branch; each block is normalized independently.
namespace trackrl {

using ActionBatch = Eigen::MatrixXi;  // branches x batch

template <typename Scalar>
MatrixX<Scalar> log_softmax(const MatrixX<Scalar>& logits, std::span<const int> branches) {
  MatrixX<Scalar> out(logits.rows(), logits.cols());
  Eigen::Index offset = 0;
  for (int size : branches) {
    auto block = logits.middleRows(offset, size);
    const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> max = block.colwise().maxCoeff();
    MatrixX<Scalar> shifted = block.rowwise() - max;
    const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> lse =
        shifted.array().exp().colwise().sum().log().matrix();
    out.middleRows(offset, size) = shifted.rowwise() - lse;
    offset += size;
  }
  if (offset != logits.rows()) throw std::invalid_argument("logits rows do not match action branches");
  return out;
}

// Sum over branches of the selected log-probabilities, one per column.
template <typename Scalar>
VectorX<Scalar> log_prob(const MatrixX<Scalar>& log_probs, const ActionBatch& actions,
                         std::span<const int> branches) {
  if (actions.rows() != static_cast<Eigen::Index>(branches.size()) || actions.cols() != log_probs.cols()) {
    throw std::invalid_argument("action batch shape mismatch");
  }
  VectorX<Scalar> out = VectorX<Scalar>::Zero(log_probs.cols());
  for (Eigen::Index j = 0; j < log_probs.cols(); ++j) {
    Eigen::Index offset = 0;
    for (std::size_t b = 0; b < branches.size(); ++b) {
      const int a = actions(static_cast<Eigen::Index>(b), j);
      if (a < 0 || a >= branches[b]) throw std::invalid_argument("action value outside its branch");
      out[j] += log_probs(offset + a, j);
      offset += branches[b];
    }
  }
  return out;
}

// Summed per-branch entropy, one per column.
template <typename Scalar>
VectorX<Scalar> entropy(const MatrixX<Scalar>& log_probs) {
  return -(log_probs.array().exp() * log_probs.array()).colwise().sum().transpose().matrix();
}

// d log_prob / d logits for each column: one-hot minus softmax per branch.
template <typename Scalar>
MatrixX<Scalar> log_prob_grad(const MatrixX<Scalar>& log_probs, const ActionBatch& actions,
                              std::span<const int> branches) {
  MatrixX<Scalar> grad = -log_probs.array().exp().matrix();
  for (Eigen::Index j = 0; j < log_probs.cols(); ++j) {
    Eigen::Index offset = 0;
    for (std::size_t b = 0; b < branches.size(); ++b) {
      grad(offset + actions(static_cast<Eigen::Index>(b), j), j) += Scalar(1);
      offset += branches[b];
    }
  }
  return grad;
}

// d entropy / d logits: -p_i (log p_i + H_branch) per branch.
template <typename Scalar>
MatrixX<Scalar> entropy_grad(const MatrixX<Scalar>& log_probs, std::span<const int> branches) {
  MatrixX<Scalar> grad(log_probs.rows(), log_probs.cols());
  Eigen::Index offset = 0;
  for (int size : branches) {
    const auto lp = log_probs.middleRows(offset, size).array();
    const auto p = lp.exp();
    const Eigen::Array<Scalar, 1, Eigen::Dynamic> h = -(p * lp).colwise().sum();
    grad.middleRows(offset, size) = (-(p * (lp.rowwise() + h))).matrix();
    offset += size;
  }
  return grad;
}

Action sample_action(const Eigen::Ref<const Eigen::VectorXd>& log_probs, std::span<const int> branches,
                     Pcg32& rng);
Action argmax_action(const Eigen::Ref<const Eigen::VectorXd>& log_probs, std::span<const int> branches);

ActionBatch to_action_batch(std::span<const Action> actions, std::size_t branch_count);

}  // namespace trackrl
