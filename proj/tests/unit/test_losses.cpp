#include <doctest.h>

#include <cmath>
#include <vector>

#include "support.hpp"
#include "trackrl/losses.hpp"
#include "trackrl/ppo.hpp"

using namespace trackrl;
using trackrl::test::gradient_error;
using trackrl::test::random_matrix;

namespace {

const std::vector<int> kBranches = {3, 2, 4};
constexpr int kLogits = 9;

ActionBatch random_actions(Pcg32& rng, int n) {
  ActionBatch a(3, n);
  for (int j = 0; j < n; ++j) {
    for (int b = 0; b < 3; ++b) a(b, j) = static_cast<int>(rng.uniform_int(static_cast<std::uint32_t>(kBranches[b])));
  }
  return a;
}

Eigen::MatrixXd random_distributions(Pcg32& rng, int n) {
  return log_softmax<double>(random_matrix(rng, kLogits, n, 2.0), kBranches).array().exp();
}

Eigen::MatrixXd as_matrix(const Eigen::VectorXd& flat, Eigen::Index rows) {
  return Eigen::Map<const Eigen::MatrixXd>(flat.data(), rows, flat.size() / rows);
}

Eigen::VectorXd flatten(const Eigen::MatrixXd& m) { return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()); }

// Per-branch probabilities computed directly from exponentials.
double prob(const Eigen::MatrixXd& logits, int j, int offset, int size, int a) {
  double z = 0.0;
  for (int q = 0; q < size; ++q) z += std::exp(logits(offset + q, j));
  return std::exp(logits(offset + a, j)) / z;
}

double direct_log_prob(const Eigen::MatrixXd& logits, const ActionBatch& a, int j) {
  return std::log(prob(logits, j, 0, 3, a(0, j))) + std::log(prob(logits, j, 3, 2, a(1, j))) +
         std::log(prob(logits, j, 5, 4, a(2, j)));
}

}  // namespace

TEST_CASE("NLL gradient and value") {
  Pcg32 rng = Pcg32::stream(1, "nll");
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd logits = random_matrix(rng, kLogits, 6, 2.0);
    const ActionBatch a = random_actions(rng, 6);
    const auto out = nll_loss<double>(logits, a, kBranches);
    double expected = 0.0;
    for (int j = 0; j < 6; ++j) expected -= direct_log_prob(logits, a, j) / 6.0;
    CHECK(out.loss == doctest::Approx(expected).epsilon(1e-12));
    auto f = [&](const Eigen::VectorXd& x) { return nll_loss<double>(as_matrix(x, kLogits), a, kBranches).loss; };
    CHECK(gradient_error(f, flatten(logits), flatten(out.grad)) < 1e-4);
  }
}

TEST_CASE("clipped surrogate gradient and value") {
  Pcg32 rng = Pcg32::stream(2, "clipped");
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 8;
    const Eigen::MatrixXd logits = random_matrix(rng, kLogits, n, 1.0);
    const ActionBatch a = random_actions(rng, n);
    Eigen::VectorXd old(n);
    Eigen::VectorXd adv(n);
    for (int j = 0; j < n; ++j) {
      old[j] = direct_log_prob(logits, a, j) + 0.4 * rng.normal();
      adv[j] = rng.normal();
    }
    const auto out = clipped_policy_loss<double>(logits, a, old, adv, 0.2, kBranches);
    double expected = 0.0;
    double clipped_count = 0.0;
    for (int j = 0; j < n; ++j) {
      const double r = std::exp(direct_log_prob(logits, a, j) - old[j]);
      expected -= std::min(r * adv[j], std::clamp(r, 0.8, 1.2) * adv[j]) / n;
      clipped_count += std::abs(r - 1.0) > 0.2;
    }
    CHECK(out.loss == doctest::Approx(expected).epsilon(1e-12));
    CHECK(out.clip_fraction == doctest::Approx(clipped_count / n));
    CHECK(out.clip_fraction >= 0.0);
    CHECK(out.clip_fraction <= 1.0);
    CHECK(out.approx_kl >= 0.0);
    auto f = [&](const Eigen::VectorXd& x) {
      return clipped_policy_loss<double>(as_matrix(x, kLogits), a, old, adv, 0.2, kBranches).loss;
    };
    CHECK(gradient_error(f, flatten(logits), flatten(out.grad)) < 1e-4);
  }
}

TEST_CASE("ratio one reduces to the vanilla policy gradient") {
  Pcg32 rng = Pcg32::stream(3, "rho1");
  const int n = 5;
  const Eigen::MatrixXd logits = random_matrix(rng, kLogits, n);
  const ActionBatch a = random_actions(rng, n);
  const Eigen::MatrixXd lp = log_softmax<double>(logits, kBranches);
  const Eigen::VectorXd old = log_prob<double>(lp, a, kBranches);
  const Eigen::VectorXd adv = random_matrix(rng, n, 1);
  const auto out = clipped_policy_loss<double>(logits, a, old, adv, 0.2, kBranches);
  CHECK(out.loss == doctest::Approx(-adv.mean()).epsilon(1e-12));
  Eigen::MatrixXd vanilla = log_prob_grad<double>(lp, a, kBranches);
  for (int j = 0; j < n; ++j) vanilla.col(j) *= -adv[j] / n;
  CHECK((out.grad - vanilla).norm() < 1e-12);
  CHECK(out.clip_fraction == 0.0);
  CHECK(out.approx_kl == doctest::Approx(0.0));
}

TEST_CASE("clipped branch has zero gradient") {
  const std::vector<int> five = {5};
  Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(5, 1);
  logits(1, 0) = 2.0;
  ActionBatch a(1, 1);
  a << 1;
  const double new_lp = log_prob<double>(log_softmax<double>(logits, five), a, five)[0];
  Eigen::VectorXd old(1);
  old << new_lp - std::log(1.5);  // ratio 1.5 > 1.2
  Eigen::VectorXd adv(1);
  adv << 2.0;
  const auto out = clipped_policy_loss<double>(logits, a, old, adv, 0.2, five);
  CHECK(out.loss == doctest::Approx(-1.2 * 2.0));
  CHECK(out.grad.isZero());
  CHECK(out.clip_fraction == 1.0);
  // Negative advantage with the same ratio takes the unclipped branch.
  adv << -2.0;
  const auto neg = clipped_policy_loss<double>(logits, a, old, adv, 0.2, five);
  CHECK(neg.loss == doctest::Approx(1.5 * 2.0));
  CHECK_FALSE(neg.grad.isZero());
}

TEST_CASE("value loss gradient and value") {
  Pcg32 rng = Pcg32::stream(4, "value");
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd pred = random_matrix(rng, 1, 7);
    const Eigen::VectorXd ret = random_matrix(rng, 7, 1);
    const auto out = value_loss<double>(pred, ret);
    CHECK(out.loss == doctest::Approx((pred.transpose() - ret).squaredNorm() / 7).epsilon(1e-12));
    auto f = [&](const Eigen::VectorXd& x) { return value_loss<double>(as_matrix(x, 1), ret).loss; };
    CHECK(gradient_error(f, flatten(pred), flatten(out.grad)) < 1e-4);
  }
  CHECK_THROWS_AS(value_loss<double>(Eigen::MatrixXd::Zero(1, 3), Eigen::VectorXd::Zero(2)), std::invalid_argument);
}

TEST_CASE("entropy gradient and value") {
  Pcg32 rng = Pcg32::stream(5, "entropy");
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd logits = random_matrix(rng, kLogits, 4, 2.0);
    const auto out = mean_entropy<double>(logits, kBranches);
    double expected = 0.0;
    for (int j = 0; j < 4; ++j) {
      int offset = 0;
      for (int size : kBranches) {
        for (int q = 0; q < size; ++q) {
          const double p = prob(logits, j, offset, size, q);
          expected -= p * std::log(p) / 4;
        }
        offset += size;
      }
    }
    CHECK(out.loss == doctest::Approx(expected).epsilon(1e-12));
    auto f = [&](const Eigen::VectorXd& x) { return mean_entropy<double>(as_matrix(x, kLogits), kBranches).loss; };
    CHECK(gradient_error(f, flatten(logits), flatten(out.grad)) < 1e-4);
  }
}

TEST_CASE("action cross-entropy gradient, value and Gibbs inequality") {
  Pcg32 rng = Pcg32::stream(6, "action");
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd logits = random_matrix(rng, kLogits, 5, 2.0);
    const Eigen::MatrixXd expert = random_distributions(rng, 5);
    const auto out = action_loss<double>(expert, logits, kBranches);
    double expected = 0.0;
    double expert_entropy = 0.0;
    for (int j = 0; j < 5; ++j) {
      int offset = 0;
      for (int size : kBranches) {
        for (int q = 0; q < size; ++q) {
          expected -= expert(offset + q, j) * std::log(prob(logits, j, offset, size, q)) / 5;
          expert_entropy -= expert(offset + q, j) * std::log(expert(offset + q, j)) / 5;
        }
        offset += size;
      }
    }
    CHECK(out.loss == doctest::Approx(expected).epsilon(1e-12));
    CHECK(out.loss > expert_entropy);
    auto f = [&](const Eigen::VectorXd& x) { return action_loss<double>(expert, as_matrix(x, kLogits), kBranches).loss; };
    CHECK(gradient_error(f, flatten(logits), flatten(out.grad)) < 1e-4);

    // Equality case: the policy is the expert.
    const Eigen::MatrixXd expert_logits = expert.array().log();
    const auto same = action_loss<double>(expert, expert_logits, kBranches);
    CHECK(same.loss == doctest::Approx(expert_entropy).epsilon(1e-12));
    CHECK(same.grad.norm() < 1e-12);
  }
  CHECK_THROWS_AS(action_loss<double>(Eigen::MatrixXd::Zero(5, 2), Eigen::MatrixXd::Zero(9, 2), kBranches),
                  std::invalid_argument);
}

TEST_CASE("action cross-entropy examples") {
  const std::vector<int> five = {5};
  Eigen::MatrixXd logits(5, 1);
  logits << 0.1, 1.3, -0.4, 0.0, 2.0;
  Eigen::MatrixXd one_hot = Eigen::MatrixXd::Zero(5, 1);
  one_hot(1, 0) = 1.0;
  const double p = prob(logits, 0, 0, 5, 1);
  CHECK(action_loss<double>(one_hot, logits, five).loss == doctest::Approx(-std::log(p)));
  const Eigen::MatrixXd uniform = Eigen::MatrixXd::Constant(5, 1, 0.2);
  CHECK(action_loss<double>(uniform, Eigen::MatrixXd::Zero(5, 1), five).loss == doctest::Approx(std::log(5.0)));
  CHECK(std::log(5.0) == doctest::Approx(1.6094).epsilon(1e-4));
}

TEST_CASE("combined loss arithmetic") {
  CHECK(combined_loss(0.5, 0.2, 1.0, 1.0, 1.0, 1.0) == doctest::Approx(1.7));
  CHECK(combined_loss(0.5, 0.2, 1.0, 1.0, 1.0, 0.0) == doctest::Approx(0.7));
  const double action = 0.37;
  CHECK(combined_loss(0.5, 0.2, action, 1.0, 1.0, 1.0) - combined_loss(0.5, 0.2, action, 1.0, 1.0, 0.2) ==
        doctest::Approx(0.8 * action));
}

TEST_CASE("full PPO objective gradients through both networks") {
  Pcg32 rng = Pcg32::stream(7, "objective");
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 6;
    const int obs_dim = 4;
    Mlp<double> policy({obs_dim, 5, kLogits});
    Mlp<double> value({obs_dim, 5, 1});
    for (Eigen::Index i = 0; i < policy.num_parameters(); ++i) policy.parameters()[i] = 0.5 * rng.normal();
    for (Eigen::Index i = 0; i < value.num_parameters(); ++i) value.parameters()[i] = 0.5 * rng.normal();
    PpoBatch<double> batch;
    batch.observations = random_matrix(rng, obs_dim, n);
    batch.actions = random_actions(rng, n);
    const Eigen::MatrixXd lp = log_softmax<double>(policy.forward(batch.observations), kBranches);
    batch.old_log_probs = log_prob<double>(lp, batch.actions, kBranches) + 0.3 * random_matrix(rng, n, 1);
    batch.advantages = normalize_advantages<double>(random_matrix(rng, n, 1));
    batch.returns = random_matrix(rng, n, 1);
    batch.expert_probs = random_distributions(rng, n);
    const double w3 = trial % 2 == 0 ? 1.0 : 0.2;
    const double entropy_coef = trial % 3 == 0 ? 0.01 : 0.0;
    const auto out = ppo_objective<double>(policy, value, batch, 0.2, 1.0, 1.0, w3, entropy_coef, kBranches);

    auto total_for = [&](const Mlp<double>& p, const Mlp<double>& v) {
      return ppo_objective<double>(p, v, batch, 0.2, 1.0, 1.0, w3, entropy_coef, kBranches).total;
    };
    auto f_policy = [&](const Eigen::VectorXd& x) {
      Mlp<double> p = policy;
      p.parameters() = x;
      return total_for(p, value);
    };
    auto f_value = [&](const Eigen::VectorXd& x) {
      Mlp<double> v = value;
      v.parameters() = x;
      return total_for(policy, v);
    };
    CHECK(gradient_error(f_policy, policy.parameters(), out.policy_grad) < 1e-4);
    CHECK(gradient_error(f_value, value.parameters(), out.value_grad) < 1e-4);
    CHECK(out.total == doctest::Approx(out.policy - entropy_coef * out.entropy + out.value + w3 * out.action));

    const auto plain = ppo_objective<double>(policy, value, batch, 0.2, 1.0, 1.0, 0.0, entropy_coef, kBranches);
    CHECK(plain.action == 0.0);
    CHECK(plain.total == doctest::Approx(out.policy - entropy_coef * out.entropy + out.value));
  }
}

TEST_CASE("advantage normalization") {
  Pcg32 rng = Pcg32::stream(8, "normalize");
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd adv = 5.0 * random_matrix(rng, 2 + static_cast<int>(rng.uniform_int(100)), 1).array() + 3.0;
    const Eigen::VectorXd z = normalize_advantages<double>(adv);
    const double mean = z.mean();
    const double std = std::sqrt((z.array() - mean).square().mean());
    REQUIRE(std::abs(mean) < 1e-6);
    REQUIRE(std::abs(std - 1.0) < 1e-6);
  }
  Eigen::VectorXd single(1);
  single << 4.0;
  CHECK(normalize_advantages<double>(single) == single);
}
