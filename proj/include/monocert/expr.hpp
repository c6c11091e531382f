#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "monocert/error.hpp"

namespace monocert {

enum class Op : std::uint8_t {
  kConst,
  kVar,
  kTime,
  kNeg,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kPow,
  kMin,
  kMax,
  kExp,
  kSin,
  kCos,
};

/// Immutable symbolic expression over the state variables x0..x(n-1) and time t.
///
/// The factory functions simplify as they build: constants fold, and additive
/// or multiplicative identities vanish.  Nothing else is rewritten.
class Expr {
 public:
  /// The constant 0.
  Expr();

  static Expr constant(double value);
  static Expr variable(int index);
  static Expr time();

  Op op() const;
  double value() const;
  int index() const;
  int exponent() const;
  std::size_t arity() const;
  const Expr& arg(std::size_t i) const;

  bool is_constant() const { return op() == Op::kConst; }
  bool is_constant(double v) const { return is_constant() && value() == v; }

  /// Identity of the shared node, for memoization.
  const void* id() const { return node_.get(); }

 private:
  struct Node;
  explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  static Expr make(Op op, double value, int index, std::vector<Expr> args);

  std::shared_ptr<const Node> node_;

  friend Expr neg(const Expr&);
  friend Expr add(const Expr&, const Expr&);
  friend Expr sub(const Expr&, const Expr&);
  friend Expr mul(const Expr&, const Expr&);
  friend Expr div(const Expr&, const Expr&);
  friend Expr pow(const Expr&, int);
  friend Expr min(const Expr&, const Expr&);
  friend Expr max(const Expr&, const Expr&);
  friend Expr exp(const Expr&);
  friend Expr sin(const Expr&);
  friend Expr cos(const Expr&);
};

struct Expr::Node {
  Op op;
  double value;
  int index;  // variable index, or the exponent of kPow
  std::vector<Expr> args;
};

inline Expr Expr::make(Op op, double value, int index, std::vector<Expr> args) {
  return Expr(std::make_shared<const Node>(Node{op, value, index, std::move(args)}));
}

inline Expr::Expr() : Expr(constant(0.0)) {}

inline Expr Expr::constant(double value) {
  if (!std::isfinite(value)) throw EvalError("non-finite constant in expression");
  // Normalize -0 so structurally equal trees print and compare the same way.
  if (value == 0.0) value = 0.0;
  return make(Op::kConst, value, 0, {});
}

inline Expr Expr::variable(int index) {
  if (index < 0) throw InvalidArgument("negative variable index");
  return make(Op::kVar, 0.0, index, {});
}

inline Expr Expr::time() { return make(Op::kTime, 0.0, 0, {}); }

inline Op Expr::op() const { return node_->op; }
inline double Expr::value() const { return node_->value; }
inline int Expr::index() const { return node_->index; }
inline int Expr::exponent() const { return node_->index; }
inline std::size_t Expr::arity() const { return node_->args.size(); }
inline const Expr& Expr::arg(std::size_t i) const { return node_->args.at(i); }

inline Expr neg(const Expr& a) {
  if (a.is_constant()) return Expr::constant(-a.value());
  if (a.op() == Op::kNeg) return a.arg(0);
  return Expr::make(Op::kNeg, 0.0, 0, {a});
}

inline Expr add(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() + b.value());
  if (a.is_constant(0.0)) return b;
  if (b.is_constant(0.0)) return a;
  return Expr::make(Op::kAdd, 0.0, 0, {a, b});
}

inline Expr sub(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() - b.value());
  if (b.is_constant(0.0)) return a;
  if (a.is_constant(0.0)) return neg(b);
  return Expr::make(Op::kSub, 0.0, 0, {a, b});
}

inline Expr mul(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() * b.value());
  if (a.is_constant(0.0) || b.is_constant(0.0)) return Expr::constant(0.0);
  if (a.is_constant(1.0)) return b;
  if (b.is_constant(1.0)) return a;
  return Expr::make(Op::kMul, 0.0, 0, {a, b});
}

inline Expr div(const Expr& a, const Expr& b) {
  if (b.is_constant(0.0)) throw InvalidArgument("division by constant zero");
  if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() / b.value());
  if (a.is_constant(0.0)) return Expr::constant(0.0);
  if (b.is_constant(1.0)) return a;
  return Expr::make(Op::kDiv, 0.0, 0, {a, b});
}

inline Expr pow(const Expr& a, int k) {
  if (k < 0) throw InvalidArgument("negative exponent");
  if (k == 0) return Expr::constant(1.0);
  if (k == 1) return a;
  if (a.is_constant()) return Expr::constant(std::pow(a.value(), k));
  return Expr::make(Op::kPow, 0.0, k, {a});
}

inline Expr min(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr::constant(std::fmin(a.value(), b.value()));
  return Expr::make(Op::kMin, 0.0, 0, {a, b});
}

inline Expr max(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr::constant(std::fmax(a.value(), b.value()));
  return Expr::make(Op::kMax, 0.0, 0, {a, b});
}

inline Expr exp(const Expr& a) {
  if (a.is_constant()) return Expr::constant(std::exp(a.value()));
  return Expr::make(Op::kExp, 0.0, 0, {a});
}

inline Expr sin(const Expr& a) {
  if (a.is_constant()) return Expr::constant(std::sin(a.value()));
  return Expr::make(Op::kSin, 0.0, 0, {a});
}

inline Expr cos(const Expr& a) {
  if (a.is_constant()) return Expr::constant(std::cos(a.value()));
  return Expr::make(Op::kCos, 0.0, 0, {a});
}

inline Expr operator-(const Expr& a) { return neg(a); }
inline Expr operator+(const Expr& a, const Expr& b) { return add(a, b); }
inline Expr operator-(const Expr& a, const Expr& b) { return sub(a, b); }
inline Expr operator*(const Expr& a, const Expr& b) { return mul(a, b); }
inline Expr operator/(const Expr& a, const Expr& b) { return div(a, b); }
inline Expr operator+(double a, const Expr& b) { return add(Expr::constant(a), b); }
inline Expr operator+(const Expr& a, double b) { return add(a, Expr::constant(b)); }
inline Expr operator-(double a, const Expr& b) { return sub(Expr::constant(a), b); }
inline Expr operator-(const Expr& a, double b) { return sub(a, Expr::constant(b)); }
inline Expr operator*(double a, const Expr& b) { return mul(Expr::constant(a), b); }
inline Expr operator*(const Expr& a, double b) { return mul(a, Expr::constant(b)); }
inline Expr operator/(double a, const Expr& b) { return div(Expr::constant(a), b); }
inline Expr operator/(const Expr& a, double b) { return div(a, Expr::constant(b)); }

/// Structural equality; constants compare bitwise-equal values.
inline bool structurally_equal(const Expr& a, const Expr& b) {
  if (a.id() == b.id()) return true;
  if (a.op() != b.op() || a.arity() != b.arity()) return false;
  switch (a.op()) {
    case Op::kConst:
      return a.value() == b.value();
    case Op::kVar:
    case Op::kPow:
      if (a.index() != b.index()) return false;
      break;
    default:
      break;
  }
  for (std::size_t i = 0; i < a.arity(); ++i) {
    if (!structurally_equal(a.arg(i), b.arg(i))) return false;
  }
  return true;
}

inline bool depends_on_var(const Expr& e, int var) {
  if (e.op() == Op::kVar) return e.index() == var;
  for (std::size_t i = 0; i < e.arity(); ++i) {
    if (depends_on_var(e.arg(i), var)) return true;
  }
  return false;
}

inline bool depends_on_time(const Expr& e) {
  if (e.op() == Op::kTime) return true;
  for (std::size_t i = 0; i < e.arity(); ++i) {
    if (depends_on_time(e.arg(i))) return true;
  }
  return false;
}

inline bool contains_minmax(const Expr& e) {
  if (e.op() == Op::kMin || e.op() == Op::kMax) return true;
  for (std::size_t i = 0; i < e.arity(); ++i) {
    if (contains_minmax(e.arg(i))) return true;
  }
  return false;
}

/// Largest variable index referenced, or -1.
inline int max_var_index(const Expr& e) {
  int m = e.op() == Op::kVar ? e.index() : -1;
  for (std::size_t i = 0; i < e.arity(); ++i) m = std::max(m, max_var_index(e.arg(i)));
  return m;
}

namespace detail {

inline double eval_node(const Expr& e, std::span<const double> x, double t) {
  switch (e.op()) {
    case Op::kConst:
      return e.value();
    case Op::kVar:
      return x[static_cast<std::size_t>(e.index())];
    case Op::kTime:
      return t;
    case Op::kNeg:
      return -eval_node(e.arg(0), x, t);
    case Op::kAdd:
      return eval_node(e.arg(0), x, t) + eval_node(e.arg(1), x, t);
    case Op::kSub:
      return eval_node(e.arg(0), x, t) - eval_node(e.arg(1), x, t);
    case Op::kMul:
      return eval_node(e.arg(0), x, t) * eval_node(e.arg(1), x, t);
    case Op::kDiv: {
      const double den = eval_node(e.arg(1), x, t);
      if (den == 0.0) throw EvalError("division by zero");
      return eval_node(e.arg(0), x, t) / den;
    }
    case Op::kPow: {
      const double base = eval_node(e.arg(0), x, t);
      double r = 1.0;
      for (int k = 0; k < e.exponent(); ++k) r *= base;
      return r;
    }
    case Op::kMin:
      return std::fmin(eval_node(e.arg(0), x, t), eval_node(e.arg(1), x, t));
    case Op::kMax:
      return std::fmax(eval_node(e.arg(0), x, t), eval_node(e.arg(1), x, t));
    case Op::kExp:
      return std::exp(eval_node(e.arg(0), x, t));
    case Op::kSin:
      return std::sin(eval_node(e.arg(0), x, t));
    case Op::kCos:
      return std::cos(eval_node(e.arg(0), x, t));
  }
  return 0.0;
}

}  // namespace detail

/// Evaluates `e` at state `x` and time `t`. Throws EvalError on division by
/// zero or a non-finite result.
inline double evaluate(const Expr& e, std::span<const double> x, double t = 0.0) {
  if (max_var_index(e) >= static_cast<int>(x.size())) {
    throw InvalidArgument("evaluation point has too few coordinates");
  }
  const double r = detail::eval_node(e, x, t);
  if (!std::isfinite(r)) throw EvalError("non-finite value");
  return r;
}

/// Partial derivative with respect to state `var`, simplified.
/// Throws BranchRequired if a min/max node depends on `var`.
inline Expr differentiate(const Expr& e, int var) {
  switch (e.op()) {
    case Op::kConst:
    case Op::kTime:
      return Expr::constant(0.0);
    case Op::kVar:
      return Expr::constant(e.index() == var ? 1.0 : 0.0);
    case Op::kNeg:
      return neg(differentiate(e.arg(0), var));
    case Op::kAdd:
      return add(differentiate(e.arg(0), var), differentiate(e.arg(1), var));
    case Op::kSub:
      return sub(differentiate(e.arg(0), var), differentiate(e.arg(1), var));
    case Op::kMul: {
      const Expr& a = e.arg(0);
      const Expr& b = e.arg(1);
      return add(mul(differentiate(a, var), b), mul(a, differentiate(b, var)));
    }
    case Op::kDiv: {
      const Expr& a = e.arg(0);
      const Expr& b = e.arg(1);
      const Expr da = differentiate(a, var);
      const Expr db = differentiate(b, var);
      if (db.is_constant(0.0)) return div(da, b);
      return div(sub(mul(da, b), mul(a, db)), pow(b, 2));
    }
    case Op::kPow: {
      const Expr& a = e.arg(0);
      const int k = e.exponent();
      return mul(mul(Expr::constant(k), pow(a, k - 1)), differentiate(a, var));
    }
    case Op::kMin:
    case Op::kMax:
      if (!depends_on_var(e, var)) return Expr::constant(0.0);
      throw BranchRequired("derivative through min/max");
    case Op::kExp:
      return mul(e, differentiate(e.arg(0), var));
    case Op::kSin:
      return mul(cos(e.arg(0)), differentiate(e.arg(0), var));
    case Op::kCos:
      return neg(mul(sin(e.arg(0)), differentiate(e.arg(0), var)));
  }
  return Expr::constant(0.0);
}

/// Same operator as `e` applied to `args`, through the simplifying factories.
inline Expr rebuild(const Expr& e, const std::vector<Expr>& args) {
  switch (e.op()) {
    case Op::kConst:
    case Op::kVar:
    case Op::kTime:
      return e;
    case Op::kNeg:
      return neg(args.at(0));
    case Op::kAdd:
      return add(args.at(0), args.at(1));
    case Op::kSub:
      return sub(args.at(0), args.at(1));
    case Op::kMul:
      return mul(args.at(0), args.at(1));
    case Op::kDiv:
      return div(args.at(0), args.at(1));
    case Op::kPow:
      return pow(args.at(0), e.exponent());
    case Op::kMin:
      return min(args.at(0), args.at(1));
    case Op::kMax:
      return max(args.at(0), args.at(1));
    case Op::kExp:
      return exp(args.at(0));
    case Op::kSin:
      return sin(args.at(0));
    case Op::kCos:
      return cos(args.at(0));
  }
  return e;
}

/// Replaces every state variable i by `values[i]`.
inline Expr substitute(const Expr& e, const std::vector<Expr>& values) {
  if (e.op() == Op::kVar) return values.at(static_cast<std::size_t>(e.index()));
  if (e.arity() == 0) return e;
  std::vector<Expr> args;
  for (std::size_t i = 0; i < e.arity(); ++i) args.push_back(substitute(e.arg(i), values));
  return rebuild(e, args);
}

/// Shortest decimal text that reads back to exactly `v`.
inline std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline int precedence(const Expr& e) {
  switch (e.op()) {
    case Op::kAdd:
    case Op::kSub:
      return 1;
    case Op::kMul:
    case Op::kDiv:
      return 2;
    case Op::kNeg:
      return 3;
    case Op::kPow:
      return 4;
    case Op::kConst:
      return e.value() < 0 ? 3 : 5;
    default:
      return 5;
  }
}

inline void print(const Expr& e, const std::vector<std::string>& names, int required,
                  std::string& out) {
  const bool parens = precedence(e) < required;
  if (parens) out += '(';
  auto binary = [&](const char* sym, int lhs, int rhs) {
    print(e.arg(0), names, lhs, out);
    out += sym;
    print(e.arg(1), names, rhs, out);
  };
  auto call = [&](const char* fn) {
    out += fn;
    out += '(';
    for (std::size_t i = 0; i < e.arity(); ++i) {
      if (i) out += ", ";
      print(e.arg(i), names, 0, out);
    }
    out += ')';
  };
  switch (e.op()) {
    case Op::kConst:
      out += format_number(e.value());
      break;
    case Op::kVar: {
      const auto i = static_cast<std::size_t>(e.index());
      out += i < names.size() ? names[i] : "x" + std::to_string(i);
      break;
    }
    case Op::kTime:
      out += 't';
      break;
    case Op::kNeg:
      out += '-';
      print(e.arg(0), names, 3, out);
      break;
    case Op::kAdd:
      binary(" + ", 1, 2);
      break;
    case Op::kSub:
      binary(" - ", 1, 2);
      break;
    case Op::kMul:
      binary("*", 2, 3);
      break;
    case Op::kDiv:
      binary("/", 2, 3);
      break;
    case Op::kPow:
      print(e.arg(0), names, 5, out);
      out += '^';
      out += std::to_string(e.exponent());
      break;
    case Op::kMin:
      call("min");
      break;
    case Op::kMax:
      call("max");
      break;
    case Op::kExp:
      call("exp");
      break;
    case Op::kSin:
      call("sin");
      break;
    case Op::kCos:
      call("cos");
      break;
  }
  if (parens) out += ')';
}

}  // namespace detail

/// Infix text in the system-file expression syntax; reparses to the same tree.
inline std::string to_string(const Expr& e, const std::vector<std::string>& names = {}) {
  std::string out;
  detail::print(e, names, 0, out);
  return out;
}

/// Flat stack program for repeated evaluation of one expression.
class CompiledExpr {
 public:
  CompiledExpr() = default;
  explicit CompiledExpr(const Expr& e) {
    if (stack_need(e) > kMaxStack) throw InvalidArgument("expression nests too deeply");
    emit(e);
    max_var_ = max_var_index(e);
  }

  /// Same semantics as evaluate(), without the per-call tree walk.
  double operator()(std::span<const double> x, double t = 0.0) const {
    if (code_.empty()) return 0.0;
    if (max_var_ >= static_cast<int>(x.size())) {
      throw InvalidArgument("evaluation point has too few coordinates");
    }
    double stack[kMaxStack];
    int sp = 0;
    for (const Instr& in : code_) {
      switch (in.op) {
        case Op::kConst:
          stack[sp++] = in.value;
          break;
        case Op::kVar:
          stack[sp++] = x[static_cast<std::size_t>(in.index)];
          break;
        case Op::kTime:
          stack[sp++] = t;
          break;
        case Op::kNeg:
          stack[sp - 1] = -stack[sp - 1];
          break;
        case Op::kAdd:
          --sp;
          stack[sp - 1] += stack[sp];
          break;
        case Op::kSub:
          --sp;
          stack[sp - 1] -= stack[sp];
          break;
        case Op::kMul:
          --sp;
          stack[sp - 1] *= stack[sp];
          break;
        case Op::kDiv:
          --sp;
          if (stack[sp] == 0.0) throw EvalError("division by zero");
          stack[sp - 1] /= stack[sp];
          break;
        case Op::kPow: {
          const double base = stack[sp - 1];
          double r = 1.0;
          for (int k = 0; k < in.index; ++k) r *= base;
          stack[sp - 1] = r;
          break;
        }
        case Op::kMin:
          --sp;
          stack[sp - 1] = std::fmin(stack[sp - 1], stack[sp]);
          break;
        case Op::kMax:
          --sp;
          stack[sp - 1] = std::fmax(stack[sp - 1], stack[sp]);
          break;
        case Op::kExp:
          stack[sp - 1] = std::exp(stack[sp - 1]);
          break;
        case Op::kSin:
          stack[sp - 1] = std::sin(stack[sp - 1]);
          break;
        case Op::kCos:
          stack[sp - 1] = std::cos(stack[sp - 1]);
          break;
      }
    }
    if (!std::isfinite(stack[0])) throw EvalError("non-finite value");
    return stack[0];
  }

 private:
  static constexpr int kMaxStack = 64;
  struct Instr {
    Op op;
    int index;
    double value;
  };

  void emit(const Expr& e) {
    for (std::size_t i = 0; i < e.arity(); ++i) emit(e.arg(i));
    code_.push_back(Instr{e.op(), e.index(), e.value()});
  }

  static int stack_need(const Expr& e) {
    if (e.arity() == 0) return 1;
    if (e.arity() == 1) return stack_need(e.arg(0));
    return std::max(stack_need(e.arg(0)), 1 + stack_need(e.arg(1)));
  }

  std::vector<Instr> code_;
  int max_var_ = -1;
};

}  // namespace monocert
