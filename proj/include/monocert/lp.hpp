#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "monocert/error.hpp"

namespace monocert {

/// maximize c^T x subject to A x <= b, with x free.
class LinearProgram {
 public:
  explicit LinearProgram(std::size_t num_vars) : objective_(num_vars, 0.0) {}

  std::size_t num_vars() const { return objective_.size(); }
  std::size_t num_rows() const { return rows_.size(); }
  const std::vector<double>& objective() const { return objective_; }
  const std::vector<std::vector<double>>& rows() const { return rows_; }
  const std::vector<double>& rhs() const { return rhs_; }

  void set_objective(std::vector<double> c) {
    if (c.size() != num_vars()) throw InvalidArgument("objective has the wrong length");
    objective_ = std::move(c);
  }

  /// Adds coeffs^T x <= rhs.
  void add_row(std::vector<double> coeffs, double rhs) {
    if (coeffs.size() != num_vars()) throw InvalidArgument("constraint row has the wrong length");
    for (double v : coeffs) {
      if (!std::isfinite(v)) throw InvalidArgument("constraint row is not finite");
    }
    if (!std::isfinite(rhs)) throw InvalidArgument("constraint bound is not finite");
    rows_.push_back(std::move(coeffs));
    rhs_.push_back(rhs);
  }

  void add_equality(const std::vector<double>& coeffs, double rhs) {
    add_row(coeffs, rhs);
    std::vector<double> neg(coeffs);
    for (double& v : neg) v = -v;
    add_row(std::move(neg), -rhs);
  }

 private:
  std::vector<double> objective_;
  std::vector<std::vector<double>> rows_;
  std::vector<double> rhs_;
};

enum class LpStatus { kOptimal, kInfeasible, kUnbounded };

inline const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::kOptimal: return "optimal";
    case LpStatus::kInfeasible: return "infeasible";
    case LpStatus::kUnbounded: return "unbounded";
  }
  return "?";
}

struct LpResult {
  LpStatus status = LpStatus::kInfeasible;
  std::vector<double> x;
  double objective = 0.0;
  std::size_t iterations = 0;
};

namespace detail {

/// Dense tableau for min cost^T y, M y = r (r >= 0), y >= 0, with one
/// artificial column per row appended after the structural columns.
class Tableau {
 public:
  static constexpr double kTol = 1e-9;
  static constexpr std::size_t kMaxIterations = 200000;

  Tableau(const Eigen::MatrixXd& M, const Eigen::VectorXd& r) : rows_(M.rows()), cols_(M.cols()) {
    T_ = Eigen::MatrixXd::Zero(rows_ + 1, cols_ + rows_ + 1);
    T_.topLeftCorner(rows_, cols_) = M;
    T_.block(0, cols_, rows_, rows_).setIdentity();
    T_.topRightCorner(rows_, 1) = r;
    basis_.resize(static_cast<std::size_t>(rows_));
    for (Eigen::Index i = 0; i < rows_; ++i) basis_[static_cast<std::size_t>(i)] = cols_ + i;
  }

  /// Phase 1: minimizes the sum of artificials; returns that minimum.
  double phase_one(std::size_t& iterations) {
    Eigen::VectorXd cost = Eigen::VectorXd::Zero(cols_ + rows_);
    cost.tail(rows_).setOnes();
    cost_ = cost;
    price();
    const bool bounded = run(cols_ + rows_, iterations);
    if (!bounded) throw Error("simplex phase one is unbounded");
    const double infeas = -T_(rows_, cols_ + rows_);
    drive_out_artificials();
    return infeas;
  }

  /// Phase 2 over structural columns only; returns false when unbounded.
  bool phase_two(const Eigen::VectorXd& cost, std::size_t& iterations) {
    Eigen::VectorXd full = Eigen::VectorXd::Zero(cols_ + rows_);
    full.head(cols_) = cost;
    cost_ = full;
    price();
    return run(cols_, iterations);
  }

  double objective() const { return -T_(rows_, cols_ + rows_); }

  /// Simplex multiplier of equality row i (minus the artificial's reduced cost).
  double multiplier(Eigen::Index i) const { return -T_(rows_, cols_ + i); }

 private:
  /// Recomputes the reduced-cost row from the basis, discarding drift.
  void price() {
    const Eigen::Index width = cols_ + rows_;
    T_.row(rows_).head(width) = cost_.transpose();
    T_(rows_, width) = 0.0;
    for (Eigen::Index i = 0; i < rows_; ++i) {
      const double cb = cost_(basis_[static_cast<std::size_t>(i)]);
      if (cb != 0.0) T_.row(rows_) -= cb * T_.row(i);
    }
  }

  void pivot(Eigen::Index r, Eigen::Index c) {
    T_.row(r) /= T_(r, c);
    for (Eigen::Index i = 0; i <= rows_; ++i) {
      if (i != r && T_(i, c) != 0.0) T_.row(i) -= T_(i, c) * T_.row(r);
    }
    basis_[static_cast<std::size_t>(r)] = c;
  }

  /// Bland's rule: lowest-index improving column; ratio ties go to the
  /// lowest basic index.  Reduced costs are compared relative to the
  /// column's magnitude.
  bool run(Eigen::Index enter_limit, std::size_t& iterations) {
    const Eigen::Index rhs = cols_ + rows_;
    for (;;) {
      Eigen::Index enter = -1;
      for (Eigen::Index j = 0; j < enter_limit; ++j) {
        const double d = T_(rows_, j);
        if (d < -kTol && d < -kTol * (1.0 + T_.col(j).head(rows_).cwiseAbs().maxCoeff())) {
          enter = j;
          break;
        }
      }
      if (enter < 0) return true;
      Eigen::Index leave = -1;
      double best = 0.0;
      for (Eigen::Index i = 0; i < rows_; ++i) {
        const double a = T_(i, enter);
        if (a <= kTol) continue;
        const double ratio = T_(i, rhs) / a;
        if (leave < 0 || ratio < best - kTol ||
            (ratio <= best + kTol && basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leave)])) {
          leave = i;
          best = ratio;
        }
      }
      if (leave < 0) return false;
      pivot(leave, enter);
      price();
      if (++iterations > kMaxIterations) throw Error("simplex iteration limit reached");
    }
  }

  /// Replaces basic artificials at level zero by structural columns so that
  /// phase two cannot move them; rows with no structural entry are redundant.
  void drive_out_artificials() {
    for (Eigen::Index i = 0; i < rows_; ++i) {
      if (basis_[static_cast<std::size_t>(i)] < cols_) continue;
      for (Eigen::Index j = 0; j < cols_; ++j) {
        if (std::abs(T_(i, j)) > kTol) {
          pivot(i, j);
          break;
        }
      }
    }
  }

  Eigen::Index rows_;
  Eigen::Index cols_;
  Eigen::MatrixXd T_;
  Eigen::VectorXd cost_;
  std::vector<Eigen::Index> basis_;
};

}  // namespace detail

/// Solves the program through its dual, min b^T y s.t. A^T y = c, y >= 0, with a
/// two-phase tableau simplex under Bland's rule.  The primal optimum is read
/// from the simplex multipliers.  Rows are scaled to unit max-norm and exact
/// duplicates dropped first.
inline LpResult solve(const LinearProgram& lp) {
  const std::size_t n = lp.num_vars();
  std::vector<std::vector<double>> rows;
  std::vector<double> rhs;
  {
    std::map<std::vector<double>, std::size_t> seen;
    for (std::size_t k = 0; k < lp.num_rows(); ++k) {
      std::vector<double> row = lp.rows()[k];
      double scale = 0.0;
      for (double v : row) scale = std::max(scale, std::abs(v));
      double b = lp.rhs()[k];
      if (scale == 0.0) {
        if (b < -detail::Tableau::kTol) return LpResult{LpStatus::kInfeasible, {}, 0.0, 0};
        continue;
      }
      for (double& v : row) v /= scale;
      b /= scale;
      const auto [it, fresh] = seen.try_emplace(row, rows.size());
      if (fresh) {
        rows.push_back(std::move(row));
        rhs.push_back(b);
      } else {
        rhs[it->second] = std::min(rhs[it->second], b);
      }
    }
  }
  const auto m = static_cast<Eigen::Index>(rows.size());
  const auto nn = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd At(nn, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = 0; i < nn; ++i) At(i, j) = rows[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
  }
  Eigen::VectorXd b(m);
  for (Eigen::Index j = 0; j < m; ++j) b(j) = rhs[static_cast<std::size_t>(j)];

  LpResult out;
  auto dual = [&](const Eigen::VectorXd& c, Eigen::VectorXd& sign, bool& feasible, bool& bounded) {
    Eigen::MatrixXd M = At;
    Eigen::VectorXd r = c;
    sign = Eigen::VectorXd::Ones(nn);
    for (Eigen::Index i = 0; i < nn; ++i) {
      if (r(i) < 0) {
        M.row(i) *= -1.0;
        r(i) = -r(i);
        sign(i) = -1.0;
      }
    }
    detail::Tableau t(M, r);
    const double scale = 1.0 + (nn > 0 ? r.cwiseAbs().maxCoeff() : 0.0);
    feasible = t.phase_one(out.iterations) <= 1e-9 * scale;
    bounded = feasible && t.phase_two(b, out.iterations);
    return t;
  };

  Eigen::VectorXd c(nn);
  for (Eigen::Index i = 0; i < nn; ++i) c(i) = lp.objective()[static_cast<std::size_t>(i)];
  Eigen::VectorXd sign;
  bool feasible = false;
  bool bounded = false;
  const detail::Tableau t = dual(c, sign, feasible, bounded);
  if (feasible && !bounded) {
    out.status = LpStatus::kInfeasible;
    return out;
  }
  if (!feasible) {
    // The dual is infeasible, so the primal is infeasible or unbounded; the
    // primal is feasible exactly when the zero-objective dual is bounded.
    Eigen::VectorXd s0;
    bool f0 = false;
    bool b0 = false;
    dual(Eigen::VectorXd::Zero(nn), s0, f0, b0);
    out.status = b0 ? LpStatus::kUnbounded : LpStatus::kInfeasible;
    return out;
  }
  out.status = LpStatus::kOptimal;
  out.x.resize(n);
  for (Eigen::Index i = 0; i < nn; ++i) out.x[static_cast<std::size_t>(i)] = t.multiplier(i) * sign(i);
  out.objective = 0.0;
  for (std::size_t i = 0; i < n; ++i) out.objective += lp.objective()[i] * out.x[i];
  return out;
}

}  // namespace monocert
