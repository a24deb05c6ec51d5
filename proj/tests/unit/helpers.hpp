#pragma once

#include <cmath>
#include <functional>

#include <Eigen/Dense>

#include "fol/rng.hpp"

namespace testutil {

inline Eigen::VectorXd random_vector(int n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  fol::Rng rng(seed, 77);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.uniform(lo, hi);
  return v;
}

// central difference of a scalar function along direction d
inline double fd_directional(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& x, const Eigen::VectorXd& d, double h = 1e-6) {
  return (f(x + h * d) - f(x - h * d)) / (2.0 * h);
}

inline Eigen::VectorXd fd_vector(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, const Eigen::VectorXd& d, double h = 1e-6) {
  return (f(x + h * d) - f(x - h * d)) / (2.0 * h);
}

inline double rel(double a, double b) { return std::abs(a - b) / std::max(1e-300, std::max(std::abs(a), std::abs(b))); }

inline double rel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double s = std::max(a.norm(), b.norm());
  return s == 0.0 ? 0.0 : (a - b).norm() / s;
}

}  // namespace testutil
