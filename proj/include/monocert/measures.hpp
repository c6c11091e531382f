#pragma once

#include <cmath>
#include <span>

#include <Eigen/Dense>

#include "monocert/error.hpp"
#include "monocert/weights.hpp"

namespace monocert {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Matrix measure induced by the l1 norm: max_j (A_jj + sum_{i != j} |A_ij|).
inline double mu1(const Matrix& A) {
  double best = -kInf;
  for (Eigen::Index j = 0; j < A.cols(); ++j) {
    double s = A(j, j);
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      if (i != j) s += std::abs(A(i, j));
    }
    best = std::max(best, s);
  }
  return A.cols() == 0 ? 0.0 : best;
}

/// Matrix measure induced by the l-infinity norm: the row analogue of mu1.
inline double mu_inf(const Matrix& A) {
  double best = -kInf;
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    double s = A(i, i);
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
      if (i != j) s += std::abs(A(i, j));
    }
    best = std::max(best, s);
  }
  return A.rows() == 0 ? 0.0 : best;
}

enum class Norm { kL1, kLinf };

inline const char* to_string(Norm n) { return n == Norm::kL1 ? "l1" : "linf"; }

inline double mu(const Matrix& A, Norm norm) { return norm == Norm::kL1 ? mu1(A) : mu_inf(A); }

inline constexpr double kMetzlerTol = 1e-9;

inline bool is_metzler(const Matrix& A, double tol = kMetzlerTol) {
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
      if (i != j && A(i, j) < -tol) return false;
    }
  }
  return true;
}

/// Generalized Jacobian Theta' Theta^-1 + Theta J Theta^-1 for the diagonal
/// metric of `w` at `x`, where Theta'_ii = theta_i'(x_i) f_i(x).  Omega
/// families use theta_i = 1/omega_i.
inline Matrix weighted_jacobian(const Matrix& J, const WeightFamily& w, std::span<const double> x,
                                std::span<const double> f_at_x) {
  const auto n = J.rows();
  if (J.cols() != n || static_cast<std::size_t>(n) != w.size() || x.size() != w.size() ||
      f_at_x.size() != w.size()) {
    throw InvalidArgument("weighted_jacobian: dimension mismatch");
  }
  Vector theta(n);
  Vector dtheta(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double raw = w.value(k, x[k]);
    if (!(raw > 0.0)) throw InvalidArgument("weight is not positive at the evaluation point");
    theta(i) = w.theta(k, x[k]);
    dtheta(i) = w.theta_prime(k, x[k]) * f_at_x[k];
  }
  Matrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) out(i, j) = theta(i) * J(i, j) / theta(j);
    out(i, i) += dtheta(i) / theta(i);
  }
  return out;
}

}  // namespace monocert
