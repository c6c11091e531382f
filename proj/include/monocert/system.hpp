#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "monocert/error.hpp"
#include "monocert/expr.hpp"

namespace monocert {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Real interval with open/closed ends; infinite ends are always open.
struct Interval {
  double lo = -kInf;
  double hi = kInf;
  bool lo_closed = false;
  bool hi_closed = false;

  static Interval closed(double a, double b) { return {a, b, std::isfinite(a), std::isfinite(b)}; }

  bool finite() const { return std::isfinite(lo) && std::isfinite(hi); }

  /// Membership with slack `tol` at the ends (open ends are treated as closed
  /// when tol > 0).
  bool contains(double v, double tol = 0.0) const {
    if (tol > 0.0) return v >= lo - tol && v <= hi + tol;
    const bool above = lo_closed ? v >= lo : v > lo;
    const bool below = hi_closed ? v <= hi : v < hi;
    return above && below;
  }

  bool operator==(const Interval&) const = default;
};

inline std::string to_string(const Interval& iv) {
  return std::string(iv.lo_closed ? "[" : "(") + format_number(iv.lo) + ", " +
         format_number(iv.hi) + (iv.hi_closed ? "]" : ")");
}

/// A parsed ODE x' = f(t, x) on a rectangular domain.
struct SystemDef {
  std::string name;
  std::vector<std::string> states;
  std::vector<Interval> bounds;
  std::vector<Expr> f;
  std::optional<std::vector<double>> equilibrium;
  std::optional<double> period;
  /// Default finite box for grid-based commands; not part of the model itself.
  std::optional<std::vector<Interval>> box;

  std::size_t dim() const { return states.size(); }

  bool time_varying() const {
    for (const Expr& e : f) {
      if (depends_on_time(e)) return true;
    }
    return false;
  }

  std::vector<double> eval_f(std::span<const double> x, double t = 0.0) const {
    std::vector<double> out(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) out[i] = evaluate(f[i], x, t);
    return out;
  }

  bool in_domain(std::span<const double> x, double tol = 0.0) const {
    for (std::size_t i = 0; i < bounds.size(); ++i) {
      if (!bounds[i].contains(x[i], tol)) return false;
    }
    return true;
  }
};

inline constexpr double kEquilibriumTol = 1e-9;

/// Checks the structural invariants of `sys`; throws InvalidArgument.
inline void validate(const SystemDef& sys) {
  const std::size_t n = sys.dim();
  if (n == 0) throw InvalidArgument("system has no states");
  if (sys.bounds.size() != n || sys.f.size() != n) {
    throw InvalidArgument("dimension mismatch between states, bounds and equations");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Interval& iv = sys.bounds[i];
    if (!(iv.lo < iv.hi)) throw InvalidArgument("empty interval for state " + sys.states[i]);
    if (max_var_index(sys.f[i]) >= static_cast<int>(n)) {
      throw InvalidArgument("equation for " + sys.states[i] + " references an unknown state");
    }
  }
  if (sys.equilibrium) {
    const auto& xs = *sys.equilibrium;
    if (xs.size() != n) throw InvalidArgument("equilibrium has wrong dimension");
    for (std::size_t i = 0; i < n; ++i) {
      if (!sys.bounds[i].contains(xs[i])) {
        throw InvalidArgument("equilibrium coordinate " + sys.states[i] + " lies outside the domain");
      }
    }
    if (!sys.time_varying()) {
      const auto fx = sys.eval_f(xs);
      for (std::size_t i = 0; i < n; ++i) {
        if (std::abs(fx[i]) >= kEquilibriumTol) {
          throw InvalidArgument("f(" + sys.states[i] + ") = " + format_number(fx[i]) +
                                " at the declared equilibrium");
        }
      }
    }
  }
  if (sys.period) {
    if (!(*sys.period > 0.0)) throw InvalidArgument("period must be positive");
    if (!sys.time_varying()) throw InvalidArgument("period declared but f does not depend on t");
  }
  if (sys.box) {
    if (sys.box->size() != n) throw InvalidArgument("box has wrong dimension");
    for (std::size_t i = 0; i < n; ++i) {
      const Interval& b = (*sys.box)[i];
      if (!b.finite() || !(b.lo < b.hi)) throw InvalidArgument("box must be finite and nonempty");
      if (!sys.bounds[i].contains(b.lo, 1e-12) || !sys.bounds[i].contains(b.hi, 1e-12)) {
        throw InvalidArgument("box leaves the domain along " + sys.states[i]);
      }
    }
  }
}

/// System-file text for `sys`; parse_system() of the result rebuilds the same system.
inline std::string to_text(const SystemDef& sys) {
  std::string out = "system " + sys.name + " {\n  states ";
  for (std::size_t i = 0; i < sys.dim(); ++i) {
    if (i) out += ", ";
    out += sys.states[i] + " in " + to_string(sys.bounds[i]);
  }
  out += '\n';
  for (std::size_t i = 0; i < sys.dim(); ++i) {
    out += "  d" + sys.states[i] + " = " + to_string(sys.f[i], sys.states) + '\n';
  }
  if (sys.equilibrium) {
    out += "  equilibrium (";
    for (std::size_t i = 0; i < sys.equilibrium->size(); ++i) {
      if (i) out += ", ";
      out += format_number((*sys.equilibrium)[i]);
    }
    out += ")\n";
  }
  if (sys.period) out += "  period " + format_number(*sys.period) + '\n';
  if (sys.box) {
    out += "  box ";
    for (std::size_t i = 0; i < sys.box->size(); ++i) {
      if (i) out += ", ";
      out += to_string((*sys.box)[i]);
    }
    out += '\n';
  }
  out += "}\n";
  return out;
}

inline bool structurally_equal(const SystemDef& a, const SystemDef& b) {
  if (a.name != b.name || a.states != b.states || a.bounds != b.bounds ||
      a.equilibrium != b.equilibrium || a.period != b.period || a.box != b.box ||
      a.f.size() != b.f.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.f.size(); ++i) {
    if (!structurally_equal(a.f[i], b.f[i])) return false;
  }
  return true;
}

}  // namespace monocert
