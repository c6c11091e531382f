#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "monocert/error.hpp"
#include "monocert/expr.hpp"

namespace monocert {

/// Exponent vector, one entry per variable.
using Monomial = std::vector<int>;

inline int total_degree(const Monomial& m) {
  int d = 0;
  for (int e : m) d += e;
  return d;
}

/// Graded lexicographic order: lower total degree first, then x0 before x1
/// within a degree (x0^2 < x0*x1 < x1^2).
struct GradedLex {
  bool operator()(const Monomial& a, const Monomial& b) const {
    const int da = total_degree(a);
    const int db = total_degree(b);
    if (da != db) return da < db;
    return b < a;
  }
};

/// All monomials in `nvars` variables of total degree <= `degree`, graded-lex ordered.
inline std::vector<Monomial> monomials_up_to(int nvars, int degree) {
  std::vector<Monomial> out;
  Monomial m(static_cast<std::size_t>(nvars), 0);
  for (int d = 0; d <= degree; ++d) {
    // Enumerate exponent vectors of total degree d with x0 descending.
    auto rec = [&](auto&& self, int var, int left) -> void {
      if (var == nvars - 1) {
        m[static_cast<std::size_t>(var)] = left;
        out.push_back(m);
        return;
      }
      for (int e = left; e >= 0; --e) {
        m[static_cast<std::size_t>(var)] = e;
        self(self, var + 1, left - e);
      }
    };
    if (nvars == 0) {
      if (d == 0) out.push_back(m);
      continue;
    }
    rec(rec, 0, d);
  }
  return out;
}

inline Monomial monomial_product(const Monomial& a, const Monomial& b) {
  Monomial r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
  return r;
}

/// Sparse multivariate polynomial with real coefficients.
class Polynomial {
 public:
  using Terms = std::map<Monomial, double, GradedLex>;

  explicit Polynomial(int nvars = 0) : nvars_(nvars) {}

  static Polynomial constant(int nvars, double c) {
    Polynomial p(nvars);
    p.add_term(Monomial(static_cast<std::size_t>(nvars), 0), c);
    return p;
  }

  static Polynomial variable(int nvars, int i) {
    Polynomial p(nvars);
    Monomial m(static_cast<std::size_t>(nvars), 0);
    m.at(static_cast<std::size_t>(i)) = 1;
    p.add_term(m, 1.0);
    return p;
  }

  int nvars() const { return nvars_; }
  const Terms& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }

  int degree() const {
    int d = 0;
    for (const auto& [m, c] : terms_) d = std::max(d, total_degree(m));
    return d;
  }

  double coefficient(const Monomial& m) const {
    auto it = terms_.find(m);
    return it == terms_.end() ? 0.0 : it->second;
  }

  void add_term(const Monomial& m, double c) {
    if (c == 0.0) return;
    auto [it, inserted] = terms_.emplace(m, c);
    if (!inserted) {
      it->second += c;
      if (it->second == 0.0) terms_.erase(it);
    }
  }

  bool is_constant() const {
    return terms_.empty() || (terms_.size() == 1 && total_degree(terms_.begin()->first) == 0);
  }

  double constant_term() const { return coefficient(Monomial(static_cast<std::size_t>(nvars_), 0)); }

  bool depends_on(int var) const {
    for (const auto& [m, c] : terms_) {
      if (m[static_cast<std::size_t>(var)] > 0) return true;
    }
    return false;
  }

  Polynomial operator+(const Polynomial& o) const {
    Polynomial r = *this;
    for (const auto& [m, c] : o.terms_) r.add_term(m, c);
    return r;
  }

  Polynomial operator-(const Polynomial& o) const { return *this + o.scaled(-1.0); }

  Polynomial operator*(const Polynomial& o) const {
    Polynomial r(nvars_);
    for (const auto& [ma, ca] : terms_) {
      for (const auto& [mb, cb] : o.terms_) r.add_term(monomial_product(ma, mb), ca * cb);
    }
    return r;
  }

  Polynomial scaled(double s) const {
    Polynomial r(nvars_);
    for (const auto& [m, c] : terms_) r.add_term(m, c * s);
    return r;
  }

  Polynomial power(int k) const {
    Polynomial r = constant(nvars_, 1.0);
    for (int i = 0; i < k; ++i) r = r * *this;
    return r;
  }

  Polynomial derivative(int var) const {
    Polynomial r(nvars_);
    const auto v = static_cast<std::size_t>(var);
    for (const auto& [m, c] : terms_) {
      if (m[v] == 0) continue;
      Monomial d = m;
      d[v] -= 1;
      r.add_term(d, c * m[v]);
    }
    return r;
  }

  double evaluate(std::span<const double> x) const {
    double s = 0.0;
    for (const auto& [m, c] : terms_) {
      double term = c;
      for (std::size_t i = 0; i < m.size(); ++i) {
        for (int k = 0; k < m[i]; ++k) term *= x[i];
      }
      s += term;
    }
    return s;
  }

  /// Sum of terms in graded-lex order.
  Expr to_expr() const {
    Expr e = Expr::constant(0.0);
    for (const auto& [m, c] : terms_) {
      const bool minus = c < 0 && !e.is_constant(0.0);
      Expr term = Expr::constant(minus ? -c : c);
      for (std::size_t i = 0; i < m.size(); ++i) {
        term = mul(term, pow(Expr::variable(static_cast<int>(i)), m[i]));
      }
      e = minus ? sub(e, term) : add(e, term);
    }
    return e;
  }

 private:
  int nvars_;
  Terms terms_;
};

/// Expands `e` as a polynomial in `nvars` variables, or nullopt when `e`
/// involves time, min/max, transcendental functions, or a non-constant divisor.
inline std::optional<Polynomial> to_polynomial(const Expr& e, int nvars) {
  auto both = [&](auto&& combine) -> std::optional<Polynomial> {
    auto a = to_polynomial(e.arg(0), nvars);
    if (!a) return std::nullopt;
    auto b = to_polynomial(e.arg(1), nvars);
    if (!b) return std::nullopt;
    return combine(*a, *b);
  };
  switch (e.op()) {
    case Op::kConst:
      return Polynomial::constant(nvars, e.value());
    case Op::kVar:
      if (e.index() >= nvars) return std::nullopt;
      return Polynomial::variable(nvars, e.index());
    case Op::kNeg: {
      auto a = to_polynomial(e.arg(0), nvars);
      if (!a) return std::nullopt;
      return a->scaled(-1.0);
    }
    case Op::kAdd:
      return both([](const Polynomial& a, const Polynomial& b) { return a + b; });
    case Op::kSub:
      return both([](const Polynomial& a, const Polynomial& b) { return a - b; });
    case Op::kMul:
      return both([](const Polynomial& a, const Polynomial& b) { return a * b; });
    case Op::kDiv: {
      auto a = to_polynomial(e.arg(0), nvars);
      auto b = to_polynomial(e.arg(1), nvars);
      if (!a || !b || !b->is_constant() || b->constant_term() == 0.0) return std::nullopt;
      return a->scaled(1.0 / b->constant_term());
    }
    case Op::kPow: {
      auto a = to_polynomial(e.arg(0), nvars);
      if (!a) return std::nullopt;
      return a->power(e.exponent());
    }
    default:
      return std::nullopt;
  }
}

/// Ascending coefficients of a polynomial that depends on `var` alone.
inline std::vector<double> univariate_coefficients(const Polynomial& p, int var) {
  std::vector<double> coeffs(static_cast<std::size_t>(p.degree()) + 1, 0.0);
  for (const auto& [m, c] : p.terms()) {
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (static_cast<int>(i) != var && m[i] != 0) {
        throw InvalidArgument("polynomial depends on more than one variable");
      }
    }
    coeffs[static_cast<std::size_t>(m[static_cast<std::size_t>(var)])] = c;
  }
  return coeffs;
}

/// Expression for sum_k c_k * x_var^k with ascending `coeffs`.
inline Expr univariate_expr(const std::vector<double>& coeffs, int var) {
  Expr e = Expr::constant(0.0);
  const Expr x = Expr::variable(var);
  for (std::size_t k = 0; k < coeffs.size(); ++k) {
    const double c = coeffs[k];
    const Expr xk = pow(x, static_cast<int>(k));
    e = c < 0 && !e.is_constant(0.0) ? sub(e, mul(Expr::constant(-c), xk)) : add(e, mul(Expr::constant(c), xk));
  }
  return e;
}

/// Antiderivative in `var` with zero constant term.  `p` must be a polynomial
/// in `var` only; anything else throws InvalidArgument.
inline Expr antiderivative_univariate(const Expr& p, int var) {
  const int nvars = std::max(var, max_var_index(p)) + 1;
  auto poly = to_polynomial(p, nvars);
  if (!poly) throw InvalidArgument("antiderivative needs a polynomial, got " + to_string(p));
  const std::vector<double> c = univariate_coefficients(*poly, var);
  std::vector<double> integral(c.size() + 1, 0.0);
  for (std::size_t k = 0; k < c.size(); ++k) integral[k + 1] = c[k] / static_cast<double>(k + 1);
  return univariate_expr(integral, var);
}

}  // namespace monocert
