#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "monocert/error.hpp"
#include "monocert/expr.hpp"
#include "monocert/measures.hpp"
#include "monocert/system.hpp"

namespace monocert {

/// n x n matrix of expressions, row-major.
struct ExprMatrix {
  std::size_t n = 0;
  std::vector<Expr> entries;

  const Expr& operator()(std::size_t i, std::size_t j) const { return entries[i * n + j]; }
};

inline constexpr double kTieTol = 1e-9;

/// Whether a and b are equal up to the min/max tie tolerance.
inline bool is_tie(double a, double b) {
  return std::abs(a - b) <= kTieTol * (1.0 + std::max(std::abs(a), std::abs(b)));
}

/// Compiled vector field f(t, x).
class CompiledField {
 public:
  CompiledField() = default;
  explicit CompiledField(const SystemDef& sys) {
    for (const Expr& e : sys.f) f_.emplace_back(e);
  }

  std::size_t dim() const { return f_.size(); }

  void operator()(std::span<const double> x, double t, std::span<double> out) const {
    for (std::size_t i = 0; i < f_.size(); ++i) out[i] = f_[i](x, t);
  }

  std::vector<double> operator()(std::span<const double> x, double t = 0.0) const {
    std::vector<double> out(f_.size());
    (*this)(x, t, out);
    return out;
  }

 private:
  std::vector<CompiledExpr> f_;
};

/// Jacobian of a system, split into smooth branches at every min/max node.
///
/// Each distinct min/max node is a switch; a branch fixes which argument every
/// switch selects, and its predicates (each required <= 0) say where that
/// selection is active.  Systems without min/max have exactly one branch.
class Jacobian {
 public:
  struct Branch {
    std::uint32_t pattern = 0;
    std::vector<Expr> predicates;
    ExprMatrix matrix;
  };

  /// Jacobian samples at one point: every branch active there, more than one
  /// when a switch is tied.
  struct Sample {
    std::vector<Matrix> matrices;
    bool tie = false;
  };

  static constexpr std::size_t kMaxSwitches = 12;

  explicit Jacobian(const SystemDef& sys) : n_(sys.dim()) {
    for (const Expr& e : sys.f) collect_switches(e);
    if (switches_.size() > kMaxSwitches) {
      throw InvalidArgument("too many min/max switches (" + std::to_string(switches_.size()) + ")");
    }
    for (const Expr& s : switches_) {
      switch_args_.push_back({CompiledExpr(s.arg(0)), CompiledExpr(s.arg(1))});
    }
    const std::uint32_t count = 1u << switches_.size();
    for (std::uint32_t pattern = 0; pattern < count; ++pattern) {
      Branch b;
      b.pattern = pattern;
      for (std::size_t k = 0; k < switches_.size(); ++k) {
        const Expr& s = switches_[k];
        const bool second = (pattern >> k) & 1u;
        // min picks a where a - b <= 0; max picks a where b - a <= 0.
        const bool is_min = s.op() == Op::kMin;
        const Expr& chosen = s.arg(second ? 1 : 0);
        const Expr& other = s.arg(second ? 0 : 1);
        b.predicates.push_back(is_min ? sub(select(chosen, pattern), select(other, pattern))
                                      : sub(select(other, pattern), select(chosen, pattern)));
      }
      b.matrix.n = n_;
      for (std::size_t i = 0; i < n_; ++i) {
        const Expr fi = select(sys.f[i], pattern);
        for (std::size_t j = 0; j < n_; ++j) b.matrix.entries.push_back(differentiate(fi, static_cast<int>(j)));
      }
      std::vector<CompiledExpr> compiled;
      for (const Expr& e : b.matrix.entries) compiled.emplace_back(e);
      compiled_.push_back(std::move(compiled));
      branches_.push_back(std::move(b));
    }
  }

  std::size_t dim() const { return n_; }
  std::size_t switch_count() const { return switches_.size(); }
  const std::vector<Expr>& switches() const { return switches_; }
  const std::vector<Branch>& branches() const { return branches_; }

  /// Single-branch Jacobian as expressions; throws if the system has switches.
  const ExprMatrix& smooth() const {
    if (!switches_.empty()) throw BranchRequired("system has min/max switches");
    return branches_.front().matrix;
  }

  /// Branch patterns active at (x, t), all tied combinations included.
  std::vector<std::uint32_t> active_patterns(std::span<const double> x, double t, bool* tie) const {
    std::vector<std::uint32_t> patterns{0};
    bool any_tie = false;
    for (std::size_t k = 0; k < switches_.size(); ++k) {
      const double a = switch_args_[k].first(x, t);
      const double b = switch_args_[k].second(x, t);
      bool first = false;
      bool second = false;
      if (is_tie(a, b)) {
        first = second = true;
        any_tie = true;
      } else if (switches_[k].op() == Op::kMin) {
        (a < b ? first : second) = true;
      } else {
        (a > b ? first : second) = true;
      }
      std::vector<std::uint32_t> next;
      for (std::uint32_t p : patterns) {
        if (first) next.push_back(p);
        if (second) next.push_back(p | (1u << k));
      }
      patterns = std::move(next);
    }
    if (tie) *tie = any_tie;
    return patterns;
  }

  Matrix evaluate_branch(std::uint32_t pattern, std::span<const double> x, double t = 0.0) const {
    const auto& c = compiled_.at(pattern);
    Matrix J(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) {
        J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c[i * n_ + j](x, t);
      }
    }
    return J;
  }

  Sample evaluate(std::span<const double> x, double t = 0.0) const {
    Sample s;
    for (std::uint32_t p : active_patterns(x, t, &s.tie)) s.matrices.push_back(evaluate_branch(p, x, t));
    return s;
  }

 private:
  void collect_switches(const Expr& e) {
    for (std::size_t i = 0; i < e.arity(); ++i) collect_switches(e.arg(i));
    if (e.op() == Op::kMin || e.op() == Op::kMax) {
      const std::string key = to_string(e);
      if (switch_index_.emplace(key, switches_.size()).second) switches_.push_back(e);
    }
  }

  Expr select(const Expr& e, std::uint32_t pattern) const {
    if (e.arity() == 0) return e;
    if (e.op() == Op::kMin || e.op() == Op::kMax) {
      const std::size_t k = switch_index_.at(to_string(e));
      return select(e.arg((pattern >> k) & 1u), pattern);
    }
    std::vector<Expr> args;
    for (std::size_t i = 0; i < e.arity(); ++i) args.push_back(select(e.arg(i), pattern));
    return rebuild(e, args);
  }

  std::size_t n_;
  std::vector<Expr> switches_;
  std::map<std::string, std::size_t> switch_index_;
  std::vector<std::pair<CompiledExpr, CompiledExpr>> switch_args_;
  std::vector<Branch> branches_;
  std::vector<std::vector<CompiledExpr>> compiled_;
};

}  // namespace monocert
