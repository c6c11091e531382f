#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "monocert/jacobian.hpp"
#include "monocert/measures.hpp"
#include "monocert/parallel.hpp"
#include "monocert/system.hpp"
#include "monocert/weights.hpp"

namespace monocert {

inline constexpr int kDefaultResolution = 41;
inline constexpr double kDefaultEps = 0.01;
/// Slack allowed on "<= 0" conditions at grid points.
inline constexpr double kConditionTol = 1e-9;

/// Finite rectangle sampled on a uniform grid with `resolution[i]` points per axis.
struct WorkingBox {
  std::vector<Interval> axes;
  std::vector<int> resolution;

  std::size_t dim() const { return axes.size(); }

  std::size_t point_count() const {
    std::size_t n = 1;
    for (int r : resolution) n *= static_cast<std::size_t>(r);
    return n;
  }

  /// Grid point by flat index; axis 0 varies slowest, so flat order is
  /// lexicographic order of grid indices.
  void point(std::size_t index, std::span<double> out) const {
    for (std::size_t k = dim(); k-- > 0;) {
      const auto r = static_cast<std::size_t>(resolution[k]);
      const std::size_t i = index % r;
      index /= r;
      const Interval& a = axes[k];
      out[k] = i + 1 == r ? a.hi : a.lo + (a.hi - a.lo) * static_cast<double>(i) / static_cast<double>(r - 1);
    }
  }

  std::vector<double> point(std::size_t index) const {
    std::vector<double> x(dim());
    point(index, x);
    return x;
  }

  /// The grid with every cell halved; it contains this grid's points.
  WorkingBox refined() const {
    WorkingBox b = *this;
    for (int& r : b.resolution) r = 2 * (r - 1) + 1;
    return b;
  }

  bool operator==(const WorkingBox&) const = default;
};

/// Parses "lo:hi,lo:hi,..." into closed intervals.
inline std::vector<Interval> parse_box(const std::string& text) {
  std::vector<Interval> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw InvalidArgument("box axis '" + item + "' is not of the form lo:hi");
    try {
      std::size_t used = 0;
      const std::string a = item.substr(0, colon);
      const std::string b = item.substr(colon + 1);
      const double lo = std::stod(a, &used);
      if (used != a.size()) throw std::invalid_argument(a);
      const double hi = std::stod(b, &used);
      if (used != b.size()) throw std::invalid_argument(b);
      out.push_back(Interval::closed(lo, hi));
    } catch (const std::logic_error&) {
      throw InvalidArgument("box axis '" + item + "' has a malformed number");
    }
  }
  if (out.empty()) throw InvalidArgument("empty box");
  return out;
}

/// Working box for `sys` from explicit axes; checks finiteness, containment in
/// the domain and that the equilibrium (if any) lies inside.
inline WorkingBox make_box(const SystemDef& sys, const std::vector<Interval>& axes,
                           int resolution = kDefaultResolution) {
  const std::size_t n = sys.dim();
  if (axes.size() != n) {
    throw InvalidArgument("box has " + std::to_string(axes.size()) + " axes, system has " + std::to_string(n));
  }
  if (resolution < 2) throw InvalidArgument("grid resolution must be at least 2");
  WorkingBox box;
  for (std::size_t i = 0; i < n; ++i) {
    const Interval& a = axes[i];
    if (!a.finite() || !(a.lo < a.hi)) {
      throw InvalidArgument("box axis " + sys.states[i] + " must be a finite interval with lo < hi");
    }
    const Interval& d = sys.bounds[i];
    if (a.lo < d.lo - 1e-12 || a.hi > d.hi + 1e-12) {
      throw InvalidArgument("box axis " + sys.states[i] + " leaves the domain " + to_string(d));
    }
    box.axes.push_back(Interval::closed(a.lo, a.hi));
    box.resolution.push_back(resolution);
  }
  if (sys.equilibrium) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!box.axes[i].contains((*sys.equilibrium)[i], kEquilibriumTol)) {
        throw InvalidArgument("box does not contain the equilibrium");
      }
    }
  }
  return box;
}

/// Working box from the system's own box clause, else its domain when finite.
inline WorkingBox make_box(const SystemDef& sys, int resolution = kDefaultResolution) {
  if (sys.box) return make_box(sys, *sys.box, resolution);
  for (const Interval& d : sys.bounds) {
    if (!d.finite()) throw InvalidArgument("system '" + sys.name + "' has an unbounded domain; give a working box");
  }
  return make_box(sys, sys.bounds, resolution);
}

enum class Verdict { kPass, kPassWithMargin, kFail };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::kPass: return "pass";
    case Verdict::kPassWithMargin: return "pass-with-margin";
    case Verdict::kFail: return "fail";
  }
  return "?";
}

/// Outcome of one sampled check.  `worst_margin` is the largest value over the
/// grid of the quantity that must be <= 0.
struct CertReport {
  std::string condition;
  Verdict verdict = Verdict::kFail;
  double worst_margin = 0.0;
  std::vector<double> witness;
  WorkingBox box;
  std::size_t points = 0;
  std::size_t branch_ties = 0;
  double eps = kDefaultEps;
  std::optional<double> equilibrium_margin;
  std::optional<WeightBound> weight_bound;
  std::optional<nlohmann::json> weights;
  bool global = false;

  bool passed() const { return verdict != Verdict::kFail; }
};

inline nlohmann::ordered_json to_json(const CertReport& r) {
  // Adding 0.0 turns -0 into +0 so reports do not depend on rounding sign.
  auto num = [](double v) { return v + 0.0; };
  nlohmann::ordered_json j;
  j["condition"] = r.condition;
  j["verdict"] = to_string(r.verdict);
  j["worst_margin"] = num(r.worst_margin);
  nlohmann::ordered_json w = nlohmann::ordered_json::array();
  for (double v : r.witness) w.push_back(num(v));
  j["witness"] = w;
  nlohmann::ordered_json box = nlohmann::ordered_json::array();
  for (const Interval& a : r.box.axes) box.push_back({a.lo, a.hi});
  j["box"] = box;
  j["resolution"] = r.box.resolution;
  j["points"] = r.points;
  j["eps"] = r.eps;
  j["branch_ties"] = r.branch_ties;
  if (r.equilibrium_margin) j["equilibrium_margin"] = num(*r.equilibrium_margin);
  if (r.weight_bound) j["weight_bound"] = {{"min", r.weight_bound->min}, {"max", r.weight_bound->max}};
  if (r.weights) j["weights"] = *r.weights;
  if (r.global) j["global"] = true;
  return j;
}

/// Column condition theta(x)^T J + theta_dot^T with theta_dot_j = theta_j'(x_j) f_j(x).
/// Omega families are read through their theta view.
inline Vector column_condition(const Matrix& J, const WeightFamily& theta, std::span<const double> x,
                               std::span<const double> f) {
  const auto n = J.rows();
  Vector th(n);
  for (Eigen::Index i = 0; i < n; ++i) th(i) = theta.theta(static_cast<std::size_t>(i), x[static_cast<std::size_t>(i)]);
  Vector c = J.transpose() * th;
  if (!theta.is_constant()) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto k = static_cast<std::size_t>(j);
      c(j) += theta.theta_prime(k, x[k]) * f[k];
    }
  }
  return c;
}

/// Row condition J omega(x) - omega_dot with omega_dot_i = omega_i'(x_i) f_i(x).
inline Vector row_condition(const Matrix& J, const WeightFamily& omega, std::span<const double> x,
                            std::span<const double> f) {
  const auto n = J.rows();
  Vector om(n);
  for (Eigen::Index i = 0; i < n; ++i) om(i) = omega.value(static_cast<std::size_t>(i), x[static_cast<std::size_t>(i)]);
  Vector c = J * om;
  if (!omega.is_constant()) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i);
      c(i) -= omega.derivative(k, x[k]) * f[k];
    }
  }
  return c;
}

enum class Side { kColumn, kRow };

namespace detail {

inline std::string point_text(std::span<const double> x) {
  std::string s = "(";
  for (std::size_t i = 0; i < x.size(); ++i) s += (i ? ", " : "") + format_number(x[i]);
  return s + ")";
}

struct PointValue {
  double margin;
  bool tie;
};

struct Scan {
  double worst = -kInf;
  std::size_t witness = 0;
  std::size_t ties = 0;
};

/// Evaluates fn at every grid point and keeps the largest margin; equal
/// margins keep the lowest grid index.
template <class Fn>
Scan scan_grid(const WorkingBox& box, Fn&& fn) {
  const std::size_t count = box.point_count();
  const std::size_t chunks = std::max<std::size_t>(1, std::min<std::size_t>(count, worker_count() * 8));
  std::vector<Scan> partial(chunks);
  parallel_chunks(count, chunks, [&](std::size_t c, std::size_t begin, std::size_t end) {
    Scan s;
    std::vector<double> x(box.dim());
    for (std::size_t k = begin; k < end; ++k) {
      box.point(k, x);
      PointValue v{};
      try {
        v = fn(std::span<const double>(x));
      } catch (const Error& e) {
        throw EvalError("evaluation failed at x = " + point_text(x) + ": " + e.what());
      }
      if (v.tie) ++s.ties;
      if (v.margin > s.worst || k == begin) {
        s.worst = v.margin;
        s.witness = k;
      }
    }
    partial[c] = s;
  });
  Scan out = partial.front();
  for (std::size_t c = 1; c < chunks; ++c) {
    out.ties += partial[c].ties;
    if (partial[c].worst > out.worst) {
      out.worst = partial[c].worst;
      out.witness = partial[c].witness;
    }
  }
  return out;
}

inline void require_autonomous_jacobian(const Jacobian& jac) {
  for (const auto& b : jac.branches()) {
    for (const Expr& e : b.matrix.entries) {
      if (depends_on_time(e)) throw InvalidArgument("certification needs a time-independent Jacobian");
    }
    for (const Expr& e : b.predicates) {
      if (depends_on_time(e)) throw InvalidArgument("certification needs time-independent switches");
    }
  }
}

inline const std::vector<double>& require_equilibrium(const SystemDef& sys) {
  if (!sys.equilibrium) throw InvalidArgument("system '" + sys.name + "' declares no equilibrium");
  return *sys.equilibrium;
}

inline Verdict decide(double worst, std::optional<double> eq, double eps, bool global) {
  if (worst > kConditionTol || (eq && *eq > -eps) || (global && worst > -eps)) return Verdict::kFail;
  return worst <= -eps ? Verdict::kPassWithMargin : Verdict::kPass;
}

inline CertReport make_report(std::string condition, const WorkingBox& box, const Scan& s, double eps) {
  CertReport r;
  r.condition = std::move(condition);
  r.worst_margin = s.worst;
  r.witness = box.point(s.witness);
  r.box = box;
  r.points = box.point_count();
  r.branch_ties = s.ties;
  r.eps = eps;
  return r;
}

/// Largest condition component over every tied branch at x.
inline PointValue weighted_margin(const Jacobian& jac, const CompiledField& field, const WeightFamily& w, Side side,
                                  std::span<const double> x) {
  const auto sample = jac.evaluate(x);
  std::vector<double> f;
  if (!w.is_constant()) f = field(x);
  double m = -kInf;
  for (const Matrix& J : sample.matrices) {
    const Vector c = side == Side::kColumn ? column_condition(J, w, x, f) : row_condition(J, w, x, f);
    m = std::max(m, c.maxCoeff());
  }
  return {m, sample.tie};
}

inline PointValue measure_margin(const Jacobian& jac, const CompiledField& field, const WeightFamily& w, Norm norm,
                                 std::span<const double> x) {
  const auto sample = jac.evaluate(x);
  std::vector<double> f;
  if (!w.is_constant()) f = field(x);
  else f.assign(x.size(), 0.0);
  double m = -kInf;
  for (const Matrix& J : sample.matrices) m = std::max(m, mu(weighted_jacobian(J, w, x, f), norm));
  return {m, sample.tie};
}

inline void check_family(const SystemDef& sys, const WeightFamily& w) {
  if (w.size() != sys.dim()) {
    throw InvalidArgument("weights have " + std::to_string(w.size()) + " entries, system has " +
                          std::to_string(sys.dim()) + " states");
  }
  if (!w.is_constant() && sys.time_varying()) {
    throw InvalidArgument("state-dependent weights need an autonomous vector field");
  }
}

inline WeightFamily positive_vector(const std::vector<double>& v, WeightKind kind, const char* what) {
  for (double c : v) {
    if (!(c > 0.0) || !std::isfinite(c)) throw WeightError(std::string(what) + " must be strictly positive");
  }
  return WeightFamily::constant(kind, v);
}

inline CertReport check_weighted(const SystemDef& sys, const WeightFamily& w, Side side, const WorkingBox& box,
                                 double eps, bool global, std::string condition) {
  check_family(sys, w);
  const WeightBound bound = w.check_on_box(box.axes);
  const auto& xs = require_equilibrium(sys);
  const Jacobian jac(sys);
  require_autonomous_jacobian(jac);
  const CompiledField field(sys);
  const Scan s = scan_grid(box, [&](std::span<const double> x) { return weighted_margin(jac, field, w, side, x); });
  CertReport r = make_report(std::move(condition), box, s, eps);
  r.equilibrium_margin = weighted_margin(jac, field, w, side, xs).margin;
  r.weight_bound = bound;
  r.weights = to_json(w);
  r.global = global;
  r.verdict = decide(r.worst_margin, r.equilibrium_margin, eps, global);
  return r;
}

}  // namespace detail

/// Condition vectors at x, one per Jacobian branch active there.
inline std::vector<Vector> condition_vectors(const SystemDef& sys, const WeightFamily& w, Side side,
                                             std::span<const double> x) {
  const Jacobian jac(sys);
  const std::vector<double> f = sys.eval_f(x);
  std::vector<Vector> out;
  for (const Matrix& J : jac.evaluate(x).matrices) {
    out.push_back(side == Side::kColumn ? column_condition(J, w, x, f) : row_condition(J, w, x, f));
  }
  return out;
}

/// Kamke condition: the Jacobian is Metzler at every grid point and tied branch.
inline CertReport check_kamke(const SystemDef& sys, const WorkingBox& box) {
  const Jacobian jac(sys);
  detail::require_autonomous_jacobian(jac);
  const auto n = static_cast<Eigen::Index>(sys.dim());
  const detail::Scan s = detail::scan_grid(box, [&](std::span<const double> x) {
    const auto sample = jac.evaluate(x);
    // A scalar system has no off-diagonal entries and passes vacuously.
    double m = n == 1 ? 0.0 : -kInf;
    for (const Matrix& J : sample.matrices) {
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
          if (i != j) m = std::max(m, -J(i, j));
        }
      }
    }
    return detail::PointValue{m, sample.tie};
  });
  CertReport r = detail::make_report("kamke", box, s, 0.0);
  r.verdict = r.worst_margin > kMetzlerTol ? Verdict::kFail : Verdict::kPass;
  return r;
}

/// Sum-separable certificate with state-dependent theta:
/// theta^T J + theta_dot^T <= 0 on the grid and <= -eps at the equilibrium.
inline CertReport check_sum_weights(const SystemDef& sys, const WeightFamily& theta, const WorkingBox& box,
                                    double eps = kDefaultEps) {
  if (theta.kind() != WeightKind::kTheta) throw InvalidArgument("column condition needs theta weights");
  return detail::check_weighted(sys, theta, Side::kColumn, box, eps, false, "sum_weights");
}

/// Max-separable certificate with state-dependent omega:
/// J omega - omega_dot <= 0 on the grid and <= -eps at the equilibrium.
inline CertReport check_max_weights(const SystemDef& sys, const WeightFamily& omega, const WorkingBox& box,
                                    double eps = kDefaultEps) {
  if (omega.kind() != WeightKind::kOmega) throw InvalidArgument("row condition needs omega weights");
  return detail::check_weighted(sys, omega, Side::kRow, box, eps, false, "max_weights");
}

/// Constant column weights v > 0: v^T J <= 0, strict at the equilibrium, and
/// with `global` set, v^T J <= -eps everywhere on the grid.
inline CertReport check_sum_const(const SystemDef& sys, const std::vector<double>& v, const WorkingBox& box,
                                  double eps = kDefaultEps, bool global = false) {
  const WeightFamily w = detail::positive_vector(v, WeightKind::kTheta, "v");
  return detail::check_weighted(sys, w, Side::kColumn, box, eps, global, "sum_const");
}

/// Row analogue of check_sum_const for w > 0: J w <= 0.
inline CertReport check_max_const(const SystemDef& sys, const std::vector<double>& w, const WorkingBox& box,
                                  double eps = kDefaultEps, bool global = false) {
  const WeightFamily family = detail::positive_vector(w, WeightKind::kOmega, "w");
  return detail::check_weighted(sys, family, Side::kRow, box, eps, global, "max_const");
}

/// Weighted matrix measure: mu(J~(x)) <= 0 on the grid and <= -eps at the equilibrium.
inline CertReport check_measure(const SystemDef& sys, const WeightFamily& w, Norm norm, const WorkingBox& box,
                                double eps = kDefaultEps) {
  detail::check_family(sys, w);
  const WeightBound bound = w.check_on_box(box.axes);
  const auto& xs = detail::require_equilibrium(sys);
  const Jacobian jac(sys);
  detail::require_autonomous_jacobian(jac);
  const CompiledField field(sys);
  const detail::Scan s = detail::scan_grid(
      box, [&](std::span<const double> x) { return detail::measure_margin(jac, field, w, norm, x); });
  CertReport r = detail::make_report(std::string("measure_") + to_string(norm), box, s, eps);
  r.equilibrium_margin = detail::measure_margin(jac, field, w, norm, xs).margin;
  r.weight_bound = bound;
  r.weights = to_json(w);
  r.verdict = detail::decide(r.worst_margin, r.equilibrium_margin, eps, false);
  return r;
}

/// Weights supplied to certify_all.
struct CertifyInputs {
  std::vector<WeightFamily> families;
  std::optional<std::vector<double>> v;
  std::optional<std::vector<double>> w;
  bool global = false;
  double eps = kDefaultEps;
};

/// Kamke check, then for each theta family the column and l1 measure checks,
/// for each omega family the row and linf measure checks, then constant v and w.
inline std::vector<CertReport> certify_all(const SystemDef& sys, const WorkingBox& box, const CertifyInputs& in) {
  std::vector<CertReport> out{check_kamke(sys, box)};
  for (const WeightFamily& f : in.families) {
    if (f.kind() == WeightKind::kTheta) {
      out.push_back(check_sum_weights(sys, f, box, in.eps));
      out.push_back(check_measure(sys, f, Norm::kL1, box, in.eps));
    } else {
      out.push_back(check_max_weights(sys, f, box, in.eps));
      out.push_back(check_measure(sys, f, Norm::kLinf, box, in.eps));
    }
  }
  if (in.v) out.push_back(check_sum_const(sys, *in.v, box, in.eps, in.global));
  if (in.w) out.push_back(check_max_const(sys, *in.w, box, in.eps, in.global));
  return out;
}

}  // namespace monocert
