#pragma once

#include <Eigen/Core>
#include <cmath>
#include <functional>

#include "trackrl/random.hpp"

namespace trackrl::test {

inline Eigen::MatrixXd random_matrix(Pcg32& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

inline Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                        const Eigen::VectorXd& x, double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// |numeric - analytic| / (|numeric| + |analytic|) over the whole gradient.
inline double gradient_error(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& analytic, double h = 1e-6) {
  const Eigen::VectorXd numeric = numeric_gradient(f, x, h);
  const double scale = numeric.norm() + analytic.norm();
  return scale < 1e-12 ? 0.0 : (numeric - analytic).norm() / scale;
}

}  // namespace trackrl::test
