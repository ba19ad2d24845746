#pragma once

#include <Eigen/Core>
#include <Eigen/QR>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "trackrl/random.hpp"

namespace trackrl {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Per-layer activations kept by a caching forward pass. activations[0] is the
// input batch, activations[l] the tanh output of hidden layer l.
template <typename Scalar>
struct MlpCache {
  std::vector<MatrixX<Scalar>> activations;
};

// Fully connected network: tanh hidden layers, linear output. Samples are
// matrix columns. All parameters live in one flat vector, layer by layer as
// (row-major weight, bias); this is also the weight-file payload order.
template <typename Scalar>
class Mlp {
 public:
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;
  using WeightMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstWeightMap =
      Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using BiasMap = Eigen::Map<Vector>;
  using ConstBiasMap = Eigen::Map<const Vector>;

  Mlp() = default;
  explicit Mlp(std::vector<int> dims) : dims_(std::move(dims)) {
    if (dims_.size() < 2) throw std::invalid_argument("Mlp needs at least input and output dims");
    Eigen::Index total = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      if (dims_[l] <= 0 || dims_[l + 1] <= 0) throw std::invalid_argument("Mlp dims must be positive");
      offsets_.push_back(total);
      total += static_cast<Eigen::Index>(dims_[l + 1]) * (dims_[l] + 1);
    }
    params_ = Vector::Zero(total);
  }

  const std::vector<int>& dims() const { return dims_; }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  int num_layers() const { return static_cast<int>(dims_.size()) - 1; }
  Eigen::Index num_parameters() const { return params_.size(); }

  Vector& parameters() { return params_; }
  const Vector& parameters() const { return params_; }

  WeightMap weight(int l) { return WeightMap(params_.data() + offsets_[l], dims_[l + 1], dims_[l]); }
  ConstWeightMap weight(int l) const {
    return ConstWeightMap(params_.data() + offsets_[l], dims_[l + 1], dims_[l]);
  }
  BiasMap bias(int l) { return BiasMap(params_.data() + bias_offset(l), dims_[l + 1]); }
  ConstBiasMap bias(int l) const { return ConstBiasMap(params_.data() + bias_offset(l), dims_[l + 1]); }

  // Orthogonal initialization: gain `hidden_gain` on hidden layers,
  // `output_gain` on the output layer, zero biases.
  void init_orthogonal(Pcg32& rng, Scalar hidden_gain, Scalar output_gain) {
    for (int l = 0; l < num_layers(); ++l) {
      const int rows = dims_[l + 1];
      const int cols = dims_[l];
      const int big = std::max(rows, cols);
      const int small = std::min(rows, cols);
      Eigen::MatrixXd gaussian(big, small);
      for (int j = 0; j < small; ++j) {
        for (int i = 0; i < big; ++i) gaussian(i, j) = rng.normal();
      }
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian);
      Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
      // Sign fix so the factorization is unique.
      const Eigen::VectorXd diag = qr.matrixQR().diagonal();
      for (int j = 0; j < small; ++j) {
        if (diag[j] < 0) q.col(j) *= -1.0;
      }
      const double gain = static_cast<double>(l + 1 == num_layers() ? output_gain : hidden_gain);
      const Eigen::MatrixXd w = rows >= cols ? Eigen::MatrixXd(q) : Eigen::MatrixXd(q.transpose());
      weight(l) = (gain * w).template cast<Scalar>();
      bias(l).setZero();
    }
  }

  template <typename Derived>
  Matrix forward(const Eigen::MatrixBase<Derived>& input) const {
    check_input(input.rows());
    Matrix a = input.template cast<Scalar>();
    for (int l = 0; l < num_layers(); ++l) {
      Matrix z = weight(l) * a;
      z.colwise() += bias(l);
      a = l + 1 < num_layers() ? Matrix(z.array().tanh()) : std::move(z);
    }
    return a;
  }

  template <typename Derived>
  Matrix forward(const Eigen::MatrixBase<Derived>& input, MlpCache<Scalar>& cache) const {
    check_input(input.rows());
    cache.activations.resize(static_cast<std::size_t>(num_layers()));
    cache.activations[0] = input.template cast<Scalar>();
    Matrix out;
    for (int l = 0; l < num_layers(); ++l) {
      Matrix z = weight(l) * cache.activations[static_cast<std::size_t>(l)];
      z.colwise() += bias(l);
      if (l + 1 < num_layers()) {
        cache.activations[static_cast<std::size_t>(l + 1)] = z.array().tanh();
      } else {
        out = std::move(z);
      }
    }
    return out;
  }

  // Reverse-mode gradient of sum over the batch of <output_grad, output>
  // with respect to the flat parameter vector. If `input_grad` is non-null it
  // receives the gradient with respect to the input batch.
  Vector backward(const MlpCache<Scalar>& cache, const Matrix& output_grad,
                  Matrix* input_grad = nullptr) const {
    if (cache.activations.size() != static_cast<std::size_t>(num_layers())) {
      throw std::logic_error("Mlp::backward requires a cached forward pass");
    }
    if (output_grad.rows() != output_dim() || output_grad.cols() != cache.activations[0].cols()) {
      throw std::invalid_argument("Mlp::backward output gradient shape mismatch");
    }
    Vector grads = Vector::Zero(params_.size());
    Matrix delta = output_grad;
    for (int l = num_layers() - 1; l >= 0; --l) {
      const Matrix& a = cache.activations[static_cast<std::size_t>(l)];
      WeightMap(grads.data() + offsets_[l], dims_[l + 1], dims_[l]).noalias() = delta * a.transpose();
      BiasMap(grads.data() + bias_offset(l), dims_[l + 1]) = delta.rowwise().sum();
      if (l > 0) {
        Matrix back = weight(l).transpose() * delta;
        delta = back.array() * (Scalar(1) - a.array().square());
      } else if (input_grad != nullptr) {
        *input_grad = weight(l).transpose() * delta;
      }
    }
    return grads;
  }

  template <typename Other>
  Mlp<Other> cast() const {
    Mlp<Other> out(dims_);
    out.parameters() = params_.template cast<Other>();
    return out;
  }

 private:
  Eigen::Index bias_offset(int l) const {
    return offsets_[static_cast<std::size_t>(l)] + static_cast<Eigen::Index>(dims_[l + 1]) * dims_[l];
  }
  void check_input(Eigen::Index rows) const {
    if (rows != input_dim()) {
      throw std::invalid_argument("Mlp input has " + std::to_string(rows) + " rows, expected " +
                                  std::to_string(input_dim()));
    }
  }

  std::vector<int> dims_;
  std::vector<Eigen::Index> offsets_;
  Vector params_;
};

// Flat binary weight file, little-endian:
//   "TRKW" | u32 version (1) | u32 dim count | u32 dims[] | u64 parameter count
//   | f32 parameters[] (the flat Mlp parameter order)
void save_weights(const Mlp<float>& net, const std::string& path);
Mlp<float> load_weights(const std::string& path);
std::vector<unsigned char> encode_weights(const Mlp<float>& net);
Mlp<float> decode_weights(const std::vector<unsigned char>& bytes);
// Raw float vectors (optimizer moments) in the same container format with a
// single dim entry.
std::vector<unsigned char> encode_vector(const VectorX<float>& values);
VectorX<float> decode_vector(const std::vector<unsigned char>& bytes);

}  // namespace trackrl
