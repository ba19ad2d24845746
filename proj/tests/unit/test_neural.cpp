#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "support.hpp"
#include "trackrl/adam.hpp"
#include "trackrl/distributions.hpp"
#include "trackrl/mlp.hpp"

using namespace trackrl;
using trackrl::test::gradient_error;
using trackrl::test::random_matrix;

namespace {

Mlp<double> random_net(Pcg32& rng, std::vector<int> dims) {
  Mlp<double> net(std::move(dims));
  for (Eigen::Index i = 0; i < net.num_parameters(); ++i) net.parameters()[i] = 0.5 * rng.normal();
  return net;
}

// Straight matrix-product evaluation with its own parameter unpacking.
Eigen::MatrixXd oracle_forward(const Mlp<double>& net, const Eigen::MatrixXd& x) {
  const auto& dims = net.dims();
  const double* p = net.parameters().data();
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Eigen::MatrixXd w(dims[l + 1], dims[l]);
    for (int r = 0; r < dims[l + 1]; ++r) {
      for (int c = 0; c < dims[l]; ++c) w(r, c) = *p++;
    }
    Eigen::VectorXd b(dims[l + 1]);
    for (int r = 0; r < dims[l + 1]; ++r) b[r] = *p++;
    Eigen::MatrixXd z = w * a;
    for (Eigen::Index j = 0; j < z.cols(); ++j) z.col(j) += b;
    if (l + 2 < dims.size()) {
      for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = std::tanh(z.data()[i]);
    }
    a = z;
  }
  return a;
}

std::vector<int> int_dims(std::initializer_list<int> d) { return d; }

}  // namespace

TEST_CASE("forward matches a hand-rolled evaluation") {
  Pcg32 rng = Pcg32::stream(1, "forward");
  for (int trial = 0; trial < 20; ++trial) {
    Mlp<double> net = random_net(rng, {7, 9, 6, 4});
    const Eigen::MatrixXd x = random_matrix(rng, 7, 5);
    CHECK((net.forward(x) - oracle_forward(net, x)).norm() < 1e-12);
    MlpCache<double> cache;
    CHECK((net.forward(x, cache) - oracle_forward(net, x)).norm() < 1e-12);
  }
}

TEST_CASE("zero and identity networks") {
  Mlp<double> zero({4, 8, 3});
  Pcg32 rng = Pcg32::stream(2, "zero");
  CHECK(zero.forward(random_matrix(rng, 4, 6)).isZero());

  Mlp<double> identity({3, 3});
  identity.weight(0) = Eigen::Matrix3d::Identity();
  const Eigen::MatrixXd x = random_matrix(rng, 3, 4);
  CHECK(identity.forward(x) == x);
}

TEST_CASE("shape errors") {
  Mlp<double> net({4, 3});
  CHECK_THROWS_AS(net.forward(Eigen::MatrixXd::Zero(5, 1)), std::invalid_argument);
  CHECK_THROWS_AS(Mlp<double>(int_dims({4})), std::invalid_argument);
  CHECK_THROWS_AS(Mlp<double>(int_dims({4, 0, 2})), std::invalid_argument);
  MlpCache<double> empty;
  CHECK_THROWS_AS(net.backward(empty, Eigen::MatrixXd::Zero(3, 1)), std::logic_error);
  MlpCache<double> cache;
  net.forward(Eigen::MatrixXd::Zero(4, 2), cache);
  CHECK_THROWS_AS(net.backward(cache, Eigen::MatrixXd::Zero(3, 3)), std::invalid_argument);
}

TEST_CASE("backward matches central differences on 20 random nets") {
  Pcg32 rng = Pcg32::stream(3, "backward");
  for (int trial = 0; trial < 20; ++trial) {
    const int depth = 1 + static_cast<int>(rng.uniform_int(3));
    std::vector<int> dims = {2 + static_cast<int>(rng.uniform_int(6))};
    for (int l = 0; l < depth; ++l) dims.push_back(2 + static_cast<int>(rng.uniform_int(8)));
    Mlp<double> net = random_net(rng, dims);
    const Eigen::MatrixXd x = random_matrix(rng, dims.front(), 3);
    const Eigen::MatrixXd g = random_matrix(rng, dims.back(), 3);
    MlpCache<double> cache;
    net.forward(x, cache);
    Eigen::MatrixXd input_grad;
    const Eigen::VectorXd analytic = net.backward(cache, g, &input_grad);

    auto objective = [&](const Eigen::VectorXd& params) {
      Mlp<double> probe = net;
      probe.parameters() = params;
      return (probe.forward(x).array() * g.array()).sum();
    };
    CHECK(gradient_error(objective, net.parameters(), analytic) < 1e-4);

    auto input_objective = [&](const Eigen::VectorXd& flat) {
      const Eigen::MatrixXd xi = Eigen::Map<const Eigen::MatrixXd>(flat.data(), x.rows(), x.cols());
      return (net.forward(xi).array() * g.array()).sum();
    };
    const Eigen::VectorXd flat_x = Eigen::Map<const Eigen::VectorXd>(x.data(), x.size());
    const Eigen::VectorXd flat_grad = Eigen::Map<const Eigen::VectorXd>(input_grad.data(), input_grad.size());
    CHECK(gradient_error(input_objective, flat_x, flat_grad) < 1e-4);
  }
}

TEST_CASE("backward special cases") {
  Pcg32 rng = Pcg32::stream(4, "special");
  Mlp<double> net = random_net(rng, {5, 6, 3});
  MlpCache<double> cache;
  net.forward(random_matrix(rng, 5, 4), cache);
  CHECK(net.backward(cache, Eigen::MatrixXd::Zero(3, 4)).isZero());

  Mlp<double> linear = random_net(rng, {4, 2});
  const Eigen::VectorXd x = random_matrix(rng, 4, 1);
  const Eigen::VectorXd g = random_matrix(rng, 2, 1);
  linear.forward(x, cache);
  const Eigen::VectorXd grad = linear.backward(cache, g);
  const Eigen::MatrixXd outer = g * x.transpose();
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 4; ++c) CHECK(grad[r * 4 + c] == doctest::Approx(outer(r, c)));
    CHECK(grad[8 + r] == doctest::Approx(g[r]));
  }
}

TEST_CASE("orthogonal init has orthonormal rows or columns scaled by the gain") {
  Pcg32 rng = Pcg32::stream(5, "init");
  Mlp<double> net({25, 64, 64, 5});
  net.init_orthogonal(rng, std::sqrt(2.0), 0.01);
  const Eigen::MatrixXd w0 = net.weight(0);
  CHECK((w0.transpose() * w0 - 2.0 * Eigen::MatrixXd::Identity(25, 25)).norm() < 1e-9);
  const Eigen::MatrixXd w2 = net.weight(2);
  CHECK((w2 * w2.transpose() - 1e-4 * Eigen::MatrixXd::Identity(5, 5)).norm() < 1e-12);
  CHECK(net.bias(1).isZero());
  CHECK(net.parameters().allFinite());
}

TEST_CASE("log_prob examples") {
  const std::vector<int> five = {5};
  const Eigen::MatrixXd uniform5 = Eigen::MatrixXd::Zero(5, 1);
  ActionBatch a(1, 1);
  a << 3;
  CHECK(log_prob<double>(log_softmax<double>(uniform5, five), a, five)[0] == doctest::Approx(std::log(0.2)));

  const std::vector<int> four_by_three = {3, 3, 3, 3};
  const Eigen::MatrixXd uniform12 = Eigen::MatrixXd::Constant(12, 1, 0.7);
  ActionBatch b(4, 1);
  b << 0, 1, 2, 1;
  CHECK(log_prob<double>(log_softmax<double>(uniform12, four_by_three), b, four_by_three)[0] ==
        doctest::Approx(-4.3944).epsilon(1e-4));
  CHECK(4 * std::log(1.0 / 3.0) == doctest::Approx(-4.3944).epsilon(1e-4));
}

TEST_CASE("log_prob matches softmax-then-log and enumerates to one") {
  Pcg32 rng = Pcg32::stream(6, "logprob");
  const std::vector<int> branches = {3, 2, 4};
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::MatrixXd logits = random_matrix(rng, 9, 1, 3.0);
    const Eigen::MatrixXd lp = log_softmax<double>(logits, branches);
    double total = 0.0;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 2; ++j) {
        for (int k = 0; k < 4; ++k) {
          ActionBatch a(3, 1);
          a << i, j, k;
          const double got = log_prob<double>(lp, a, branches)[0];
          auto p = [&](int offset, int size, int idx) {
            double z = 0.0;
            for (int q = 0; q < size; ++q) z += std::exp(logits(offset + q, 0));
            return std::exp(logits(offset + idx, 0)) / z;
          };
          const double expected = std::log(p(0, 3, i)) + std::log(p(3, 2, j)) + std::log(p(5, 4, k));
          REQUIRE(got == doctest::Approx(expected).epsilon(1e-12));
          REQUIRE(got <= 0.0);
          total += std::exp(got);
        }
      }
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
  ActionBatch bad(3, 1);
  bad << 3, 0, 0;
  CHECK_THROWS_AS(log_prob<double>(log_softmax<double>(Eigen::MatrixXd::Zero(9, 1), branches), bad, branches),
                  std::invalid_argument);
  CHECK_THROWS_AS(log_softmax<double>(Eigen::MatrixXd::Zero(8, 1), branches), std::invalid_argument);
}

TEST_CASE("softmax normalization on 1000 random logit vectors") {
  Pcg32 rng = Pcg32::stream(7, "softmax");
  const std::vector<int> branches = {3, 3, 3, 3};
  const Eigen::MatrixXd logits = random_matrix(rng, 12, 1000, 20.0);
  const Eigen::MatrixXd p = log_softmax<double>(logits, branches).array().exp();
  for (int j = 0; j < 1000; ++j) {
    for (int b = 0; b < 4; ++b) REQUIRE(std::abs(p.col(j).segment(3 * b, 3).sum() - 1.0) < 1e-6);
  }
}

TEST_CASE("entropy examples") {
  const std::vector<int> five = {5};
  CHECK(entropy<double>(log_softmax<double>(Eigen::MatrixXd::Zero(5, 1), five))[0] ==
        doctest::Approx(std::log(5.0)));
  Eigen::MatrixXd peaked = Eigen::MatrixXd::Zero(5, 1);
  peaked(2, 0) = 100.0;
  const Eigen::MatrixXd lp = log_softmax<double>(peaked, five);
  CHECK(entropy<double>(lp)[0] < 1e-30);
  Pcg32 rng = Pcg32::stream(8, "peaked");
  for (int i = 0; i < 1000; ++i) REQUIRE(sample_action(lp.col(0), five, rng) == Action::single(2));
  CHECK(argmax_action(lp.col(0), five) == Action::single(2));
}

TEST_CASE("sampling frequencies follow the probabilities") {
  const std::vector<int> branches = {3, 2};
  Eigen::VectorXd logits(5);
  logits << std::log(0.2), std::log(0.5), std::log(0.3), std::log(0.9), std::log(0.1);
  const Eigen::MatrixXd lp = log_softmax<double>(logits, branches);
  Pcg32 rng = Pcg32::stream(9, "sample");
  std::vector<int> first(3, 0);
  std::vector<int> second(2, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const Action a = sample_action(lp.col(0), branches, rng);
    ++first[a[0]];
    ++second[a[1]];
  }
  CHECK(first[0] / double(n) == doctest::Approx(0.2).epsilon(0.02));
  CHECK(first[1] / double(n) == doctest::Approx(0.5).epsilon(0.02));
  CHECK(second[0] / double(n) == doctest::Approx(0.9).epsilon(0.01));
}

TEST_CASE("Adam first step by hand") {
  AdamSettings s;
  s.lr = 0.01;
  AdamState<double> state(3, s);
  Eigen::VectorXd params(3);
  params << 1.0, -2.0, 0.5;
  Eigen::VectorXd g(3);
  g << 0.3, -4.0, 0.0;
  adam_step(state, params, g);
  // m_hat = g, v_hat = g^2, so each step is -lr * g / (|g| + eps).
  CHECK(params[0] == doctest::Approx(1.0 - 0.01 * 0.3 / (0.3 + 1e-8)).epsilon(1e-14));
  CHECK(params[1] == doctest::Approx(-2.0 + 0.01 * 4.0 / (4.0 + 1e-8)).epsilon(1e-14));
  CHECK(params[2] == 0.5);
  CHECK(state.step == 1);
  CHECK(state.m[1] == doctest::Approx(-0.4));
  CHECK(state.v[1] == doctest::Approx(0.016));

  adam_step(state, params, g);
  const double m = 0.9 * 0.03 + 0.1 * 0.3;
  const double v = 0.999 * 0.001 * 0.09 + 0.001 * 0.09;
  const double step = 0.01 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.999 * 0.999)) + 1e-8);
  CHECK(params[0] == doctest::Approx(1.0 - 0.01 * 0.3 / (0.3 + 1e-8) - step).epsilon(1e-12));
  Eigen::VectorXd wrong(2);
  CHECK_THROWS_AS(adam_step(state, params, wrong), std::invalid_argument);
}

TEST_CASE("weight files round-trip bit-exactly") {
  Pcg32 rng = Pcg32::stream(10, "weights");
  Mlp<float> net({25, 64, 64, 5});
  net.init_orthogonal(rng, 1.4f, 0.01f);
  net.parameters()[7] = -0.0f;
  const auto bytes = encode_weights(net);
  const Mlp<float> back = decode_weights(bytes);
  CHECK(back.dims() == net.dims());
  CHECK(std::memcmp(back.parameters().data(), net.parameters().data(),
                    sizeof(float) * static_cast<std::size_t>(net.num_parameters())) == 0);
  CHECK(encode_weights(back) == bytes);
  CHECK(bytes[0] == 'T');
  CHECK(bytes.size() == 4 + 4 + 4 + 4 * 4 + 8 + 4 * static_cast<std::size_t>(net.num_parameters()));

  const auto path = std::filesystem::temp_directory_path() / "trackrl_weights_test.bin";
  save_weights(net, path.string());
  CHECK(encode_weights(load_weights(path.string())) == bytes);
  std::filesystem::remove(path);

  VectorX<float> moments = VectorX<float>::LinSpaced(10, -1.0f, 1.0f);
  CHECK(decode_vector(encode_vector(moments)) == moments);
}

TEST_CASE("corrupt weight files are rejected") {
  Mlp<float> net({3, 2});
  auto bytes = encode_weights(net);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS(decode_weights(magic));
  auto version = bytes;
  version[4] = 9;
  CHECK_THROWS(decode_weights(version));
  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS(decode_weights(truncated));
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS(decode_weights(trailing));
  CHECK_THROWS(load_weights("/nonexistent/weights.bin"));
}
