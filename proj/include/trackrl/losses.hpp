#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>

#include "trackrl/distributions.hpp"

// Batch losses over logits (columns are samples). Each returns the mean loss
// and its gradient with respect to its network-output argument so callers
// can chain through Mlp::backward.
namespace trackrl {

template <typename Scalar>
struct LossAndGrad {
  Scalar loss = Scalar(0);
  MatrixX<Scalar> grad;
};

template <typename Scalar>
struct PolicyLoss {
  Scalar loss = Scalar(0);
  MatrixX<Scalar> grad;
  Scalar clip_fraction = Scalar(0);
  Scalar approx_kl = Scalar(0);
};

// PPO clipped surrogate: -mean(min(r A, clip(r, 1-eps, 1+eps) A)) with
// r = exp(log pi_new - log pi_old).
template <typename Scalar>
PolicyLoss<Scalar> clipped_policy_loss(const MatrixX<Scalar>& logits, const ActionBatch& actions,
                                       const VectorX<Scalar>& old_log_probs,
                                       const VectorX<Scalar>& advantages, Scalar clip,
                                       std::span<const int> branches) {
  const Eigen::Index n = logits.cols();
  if (old_log_probs.size() != n || advantages.size() != n) {
    throw std::invalid_argument("clipped_policy_loss batch size mismatch");
  }
  const MatrixX<Scalar> lp = log_softmax(logits, branches);
  const VectorX<Scalar> new_log_probs = log_prob(lp, actions, branches);
  const MatrixX<Scalar> dlogp = log_prob_grad(lp, actions, branches);

  PolicyLoss<Scalar> out;
  out.grad = MatrixX<Scalar>::Zero(logits.rows(), n);
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Scalar log_ratio = new_log_probs[j] - old_log_probs[j];
    const Scalar ratio = std::exp(log_ratio);
    const Scalar clipped = std::clamp(ratio, Scalar(1) - clip, Scalar(1) + clip);
    const Scalar unclipped_obj = ratio * advantages[j];
    const Scalar clipped_obj = clipped * advantages[j];
    if (unclipped_obj <= clipped_obj) {
      out.loss -= unclipped_obj * inv_n;
      out.grad.col(j) = (-advantages[j] * ratio * inv_n) * dlogp.col(j);
    } else {
      out.loss -= clipped_obj * inv_n;
    }
    if (std::abs(ratio - Scalar(1)) > clip) out.clip_fraction += inv_n;
    out.approx_kl += ((ratio - Scalar(1)) - log_ratio) * inv_n;
  }
  return out;
}

// Mean squared error between value predictions (1 x n) and returns.
template <typename Scalar>
LossAndGrad<Scalar> value_loss(const MatrixX<Scalar>& predictions, const VectorX<Scalar>& returns) {
  if (predictions.rows() != 1 || predictions.cols() != returns.size()) {
    throw std::invalid_argument("value_loss shape mismatch");
  }
  const auto n = static_cast<Scalar>(returns.size());
  const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> diff = predictions.row(0) - returns.transpose();
  return {diff.squaredNorm() / n, (Scalar(2) / n) * diff};
}

// Mean summed-branch entropy (a bonus: callers subtract it).
template <typename Scalar>
LossAndGrad<Scalar> mean_entropy(const MatrixX<Scalar>& logits, std::span<const int> branches) {
  const MatrixX<Scalar> lp = log_softmax(logits, branches);
  const auto n = static_cast<Scalar>(logits.cols());
  return {entropy(lp).sum() / n, entropy_grad(lp, branches) / n};
}

// Expert cross-entropy H(pi_E, pi) = -sum_a pi_E(a|s) log pi(a|s), summed
// over branches, averaged over the batch. `expert_probs` holds the expert's
// full per-branch distributions in the same layout as `logits`.
template <typename Scalar>
LossAndGrad<Scalar> action_loss(const MatrixX<Scalar>& expert_probs, const MatrixX<Scalar>& logits,
                                std::span<const int> branches) {
  if (expert_probs.rows() != logits.rows() || expert_probs.cols() != logits.cols()) {
    throw std::invalid_argument("action_loss: expert and policy supports differ");
  }
  const MatrixX<Scalar> lp = log_softmax(logits, branches);
  const auto n = static_cast<Scalar>(logits.cols());
  LossAndGrad<Scalar> out;
  out.loss = -(expert_probs.array() * lp.array()).sum() / n;
  out.grad.resize(logits.rows(), logits.cols());
  Eigen::Index offset = 0;
  for (int size : branches) {
    const auto q = expert_probs.middleRows(offset, size).array();
    const auto p = lp.middleRows(offset, size).array().exp();
    const Eigen::Array<Scalar, 1, Eigen::Dynamic> mass = q.colwise().sum();
    out.grad.middleRows(offset, size) = ((p.rowwise() * mass - q) / n).matrix();
    offset += size;
  }
  return out;
}

// Mean negative log-likelihood of demonstrated actions (behavior cloning).
template <typename Scalar>
LossAndGrad<Scalar> nll_loss(const MatrixX<Scalar>& logits, const ActionBatch& actions,
                             std::span<const int> branches) {
  const MatrixX<Scalar> lp = log_softmax(logits, branches);
  const auto n = static_cast<Scalar>(logits.cols());
  return {-log_prob(lp, actions, branches).sum() / n, -log_prob_grad(lp, actions, branches) / n};
}

template <typename Scalar>
Scalar combined_loss(Scalar policy, Scalar value, Scalar action, Scalar w1, Scalar w2, Scalar w3) {
  return w1 * policy + w2 * value + w3 * action;
}

// Zero mean, unit (population) standard deviation; unchanged for n < 2.
template <typename Scalar>
VectorX<Scalar> normalize_advantages(const VectorX<Scalar>& advantages) {
  if (advantages.size() < 2) return advantages;
  const Scalar mean = advantages.mean();
  const VectorX<Scalar> centered = advantages.array() - mean;
  const Scalar std = std::sqrt(centered.squaredNorm() / static_cast<Scalar>(advantages.size()));
  return centered / (std + Scalar(1e-8));
}

}  // namespace trackrl
