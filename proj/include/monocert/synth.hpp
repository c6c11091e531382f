#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "monocert/certify.hpp"
#include "monocert/lp.hpp"

namespace monocert {

enum class SynthMode { kSum, kMax };

inline const char* to_string(SynthMode m) { return m == SynthMode::kSum ? "sum" : "max"; }

/// Synthesized weights with their LP margin and the post-hoc report on the
/// refined grid.  `ok` is false when no certificate was found; `diagnosis`
/// then says why.
struct SynthResult {
  bool ok = false;
  WeightFamily weights;
  double margin = 0.0;
  std::optional<CertReport> report;
  std::string diagnosis;
  LpStatus lp_status = LpStatus::kInfeasible;
  /// 1: margin required on the whole grid; 2: only at the equilibrium.
  int stage = 0;

  std::vector<double> constant_vector() const {
    std::vector<double> v;
    for (const auto& w : weights.weights()) v.push_back(w.value(0.0));
    return v;
  }
};

namespace detail {

struct SynthProblem {
  const SystemDef& sys;
  const Jacobian& jac;
  const CompiledField& field;
  int degree;
  SynthMode mode;

  std::size_t n() const { return sys.dim(); }
  std::size_t coeffs() const { return n() * static_cast<std::size_t>(degree + 1); }
  std::size_t var(std::size_t i, int k) const { return i * static_cast<std::size_t>(degree + 1) + static_cast<std::size_t>(k); }

  /// Coefficient rows of the condition vector at x, one per component and
  /// active branch; the margin column is left zero.
  std::vector<std::vector<double>> condition_rows(std::span<const double> x) const {
    const auto sample = jac.evaluate(x);
    std::vector<double> f;
    if (degree > 0) f = field(x);
    std::vector<std::vector<double>> rows;
    for (const Matrix& J : sample.matrices) {
      for (std::size_t c = 0; c < n(); ++c) {
        std::vector<double> row(coeffs() + 1, 0.0);
        for (std::size_t i = 0; i < n(); ++i) {
          // sum: column c gets theta_i J(i, c); max: row c gets J(c, i) omega_i.
          const double Jv = mode == SynthMode::kSum ? J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c))
                                                    : J(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i));
          double p = 1.0;
          for (int k = 0; k <= degree; ++k) {
            row[var(i, k)] += Jv * p;
            p *= x[i];
          }
        }
        if (degree > 0) {
          const double sign = mode == SynthMode::kSum ? 1.0 : -1.0;
          double p = 1.0;
          for (int k = 1; k <= degree; ++k) {
            row[var(c, k)] += sign * k * p * f[c];
            p *= x[c];
          }
        }
        rows.push_back(std::move(row));
      }
    }
    return rows;
  }
};

/// Grid condition rows in grid order, assembled in parallel.
inline std::vector<std::vector<double>> grid_rows(const SynthProblem& p, const WorkingBox& box) {
  const std::size_t count = box.point_count();
  const std::size_t chunks = std::max<std::size_t>(1, std::min<std::size_t>(count, worker_count() * 4));
  std::vector<std::vector<std::vector<double>>> parts(chunks);
  parallel_chunks(count, chunks, [&](std::size_t c, std::size_t begin, std::size_t end) {
    std::vector<double> x(box.dim());
    for (std::size_t k = begin; k < end; ++k) {
      box.point(k, x);
      try {
        for (auto& r : p.condition_rows(x)) parts[c].push_back(std::move(r));
      } catch (const Error& e) {
        throw EvalError("evaluation failed at x = " + point_text(x) + ": " + e.what());
      }
    }
  });
  std::vector<std::vector<double>> rows;
  for (auto& part : parts) {
    for (auto& r : part) rows.push_back(std::move(r));
  }
  return rows;
}

struct LpOutcome {
  LpResult result;
  double margin = 0.0;
};

/// Builds and solves the margin LP over [coefficients, s, t].  `tau` scales
/// the margin on grid rows (1: uniform margin, 0: only <= 0); equilibrium rows
/// always carry it.  With `keep` set, s >= keep is imposed and the weighted
/// magnitude of the non-constant coefficients (bounded by t) is minimized
/// instead, which picks the simplest weights among near-optimal ones.
inline LpOutcome solve_margin_lp(const SynthProblem& p, const std::vector<std::vector<double>>& grid,
                                 const WorkingBox& box, double tau, double positivity,
                                 std::optional<double> keep = std::nullopt) {
  const std::size_t nc = p.coeffs();
  const std::size_t s = nc;
  const std::size_t nt = keep ? p.n() * static_cast<std::size_t>(p.degree) : 0;
  const std::size_t nv = nc + 1 + nt;
  auto tvar = [&](std::size_t i, int k) { return nc + 1 + i * static_cast<std::size_t>(p.degree) + static_cast<std::size_t>(k - 1); };
  auto widen = [&](const std::vector<double>& r) {
    std::vector<double> row(nv, 0.0);
    std::copy(r.begin(), r.end(), row.begin());
    return row;
  };
  LinearProgram lp(nv);
  std::vector<double> obj(nv, 0.0);
  if (keep) {
    for (std::size_t i = 0; i < p.n(); ++i) {
      const double m = std::max({std::abs(box.axes[i].lo), std::abs(box.axes[i].hi), 1.0});
      double w = 1.0;
      for (int k = 1; k <= p.degree; ++k) {
        w *= m;
        obj[tvar(i, k)] = -w;
        std::vector<double> up(nv, 0.0);
        up[p.var(i, k)] = 1.0;
        up[tvar(i, k)] = -1.0;
        lp.add_row(up, 0.0);
        std::vector<double> down(nv, 0.0);
        down[p.var(i, k)] = -1.0;
        down[tvar(i, k)] = -1.0;
        lp.add_row(std::move(down), 0.0);
      }
    }
    std::vector<double> floor(nv, 0.0);
    floor[s] = -1.0;
    lp.add_row(std::move(floor), -*keep);
  } else {
    obj[s] = 1.0;
  }
  lp.set_objective(obj);
  for (const auto& g : grid) {
    std::vector<double> row = widen(g);
    row[s] = tau;
    lp.add_row(std::move(row), 0.0);
  }
  // Positivity is sampled eight times finer than the grid along each axis.
  for (std::size_t i = 0; i < p.n(); ++i) {
    const Interval& a = box.axes[i];
    const int r = 8 * (box.resolution[i] - 1) + 1;
    for (int q = 0; q < r; ++q) {
      const double t = q + 1 == r ? a.hi : a.lo + (a.hi - a.lo) * q / (r - 1);
      std::vector<double> row(nv, 0.0);
      double pw = 1.0;
      for (int k = 0; k <= p.degree; ++k) {
        row[p.var(i, k)] = -pw;
        pw *= t;
      }
      lp.add_row(std::move(row), -positivity);
    }
  }
  std::vector<double> norm(nv, 0.0);
  if (p.sys.equilibrium) {
    const auto& xs = *p.sys.equilibrium;
    for (const auto& r : p.condition_rows(xs)) {
      std::vector<double> row = widen(r);
      row[s] = 1.0;
      lp.add_row(std::move(row), 0.0);
    }
    for (std::size_t i = 0; i < p.n(); ++i) {
      double pw = 1.0;
      for (int k = 0; k <= p.degree; ++k) {
        norm[p.var(i, k)] = pw;
        pw *= xs[i];
      }
    }
  } else {
    for (std::size_t i = 0; i < p.n(); ++i) norm[p.var(i, 0)] = 1.0;
  }
  lp.add_equality(norm, static_cast<double>(p.n()));
  LpOutcome out;
  out.result = solve(lp);
  if (out.result.status == LpStatus::kOptimal) out.margin = out.result.x[s];
  return out;
}

/// Weight family from LP coefficients.  Coefficients at round-off level are
/// zeroed; with `prune` > 0, so are non-constant terms whose size on the box
/// is below `prune` times that of the whole weight.
inline WeightFamily family_from(const SynthProblem& p, const std::vector<double>& x, const WorkingBox& box,
                                double prune = 0.0) {
  double scale = 0.0;
  for (std::size_t j = 0; j < p.coeffs(); ++j) scale = std::max(scale, std::abs(x[j]));
  std::vector<ScalarWeight> ws;
  for (std::size_t i = 0; i < p.n(); ++i) {
    const double m = std::max(std::abs(box.axes[i].lo), std::abs(box.axes[i].hi));
    std::vector<double> c;
    std::vector<double> size;
    double total = 0.0;
    double pw = 1.0;
    for (int k = 0; k <= p.degree; ++k) {
      const double v = x[p.var(i, k)];
      c.push_back(std::abs(v) <= 1e-12 * scale ? 0.0 : v);
      size.push_back(std::abs(c.back()) * pw);
      total += size.back();
      pw *= m;
    }
    for (std::size_t k = 1; k < c.size(); ++k) {
      if (size[k] <= prune * total) c[k] = 0.0;
    }
    ws.push_back(ScalarWeight::polynomial(c));
  }
  return WeightFamily(p.mode == SynthMode::kSum ? WeightKind::kTheta : WeightKind::kOmega, ws);
}

/// Divisor that makes the leading coefficient of the last non-constant weight
/// +-1, or the smallest weight 1 when all are constant.
inline double normalizer(const WeightFamily& w) {
  for (std::size_t i = w.size(); i-- > 0;) {
    if (!w[i].is_constant()) return std::abs(w[i].coefficients().back());
  }
  double lo = kInf;
  for (const auto& s : w.weights()) lo = std::min(lo, s.coefficients().front());
  return lo;
}

inline SynthResult kamke_failure(const CertReport& k) {
  SynthResult r;
  r.diagnosis = "system is not monotone on the box (Jacobian off-diagonal " + format_number(-k.worst_margin) +
                " at x = " + point_text(k.witness) + ")";
  r.report = k;
  return r;
}

inline std::string lp_failure(const LpOutcome& o) {
  if (o.result.status != LpStatus::kOptimal) return std::string("margin LP is ") + to_string(o.result.status);
  return "best margin s = " + format_number(o.margin) + " is not positive";
}

/// One synthesis attempt: margin LP, simplification LP, normalization and
/// post-hoc certification on the refined grid.
inline SynthResult attempt(const SynthProblem& p, const std::vector<std::vector<double>>& grid, const WorkingBox& box,
                           int stage, double positivity, double eps, bool constant_check) {
  SynthResult r;
  r.stage = stage;
  const double tau = stage == 1 ? 1.0 : 0.0;
  LpOutcome o = solve_margin_lp(p, grid, box, tau, positivity);
  r.lp_status = o.result.status;
  r.margin = o.margin;
  if (o.result.status != LpStatus::kOptimal || !(o.margin > 0.0)) {
    r.diagnosis = lp_failure(o);
    return r;
  }
  if (p.degree > 0) {
    const LpOutcome simple = solve_margin_lp(p, grid, box, tau, positivity, (1.0 - 1e-6) * o.margin);
    if (simple.result.status == LpStatus::kOptimal) o = simple;
  }
  const double margin = o.margin;
  auto finish = [&](const WeightFamily& w) {
    SynthResult out = r;
    const double scale = normalizer(w);
    if (!(scale > 0.0)) {
      out.diagnosis = "LP weights are not strictly positive";
      return out;
    }
    out.weights = w.scaled(1.0 / scale);
    out.margin = margin / scale;
    const WorkingBox fine = box.refined();
    try {
      if (constant_check) {
        const std::vector<double> v = out.constant_vector();
        out.report =
            p.mode == SynthMode::kSum ? check_sum_const(p.sys, v, fine, eps) : check_max_const(p.sys, v, fine, eps);
      } else {
        out.report = p.mode == SynthMode::kSum ? check_sum_weights(p.sys, out.weights, fine, eps)
                                               : check_max_weights(p.sys, out.weights, fine, eps);
      }
    } catch (const WeightError& e) {
      out.diagnosis = std::string("synthesized weights are not positive on the box: ") + e.what();
      return out;
    }
    out.ok = out.report->passed();
    if (!out.ok) {
      out.diagnosis = "post-hoc certification failed: worst margin " + format_number(out.report->worst_margin) +
                      " at x = " + point_text(out.report->witness) + ", equilibrium margin " +
                      format_number(*out.report->equilibrium_margin);
    }
    return out;
  };
  const WeightFamily raw = family_from(p, o.result.x, box);
  const WeightFamily pruned = family_from(p, o.result.x, box, 1e-6);
  if (!(pruned == raw)) {
    SynthResult simple = finish(pruned);
    if (simple.ok) return simple;
  }
  return finish(raw);
}

inline SynthResult synthesize(const SystemDef& sys, const WorkingBox& box, int degree, SynthMode mode, double eps,
                              bool constant) {
  const CertReport kamke = check_kamke(sys, box);
  if (!kamke.passed()) return kamke_failure(kamke);
  const Jacobian jac(sys);
  const CompiledField field(sys);
  const SynthProblem p{sys, jac, field, degree, mode};
  const auto grid = grid_rows(p, box);
  SynthResult first = attempt(p, grid, box, 1, constant ? 0.0 : eps, eps, constant);
  if (first.ok || !sys.equilibrium) return first;
  SynthResult second = attempt(p, grid, box, 2, eps, eps, constant);
  if (second.ok) return second;
  first.diagnosis = "uniform margin: " + first.diagnosis + "; equilibrium margin only: " + second.diagnosis;
  return first;
}

}  // namespace detail

/// Constant weights by linear programming: maximize s subject to
/// v^T J(x_g) <= -s at every grid point (rows J w <= -s for mode max),
/// v >= 0 and sum(v) = n.  When that certificate fails, a second LP asks
/// only v^T J <= 0 on the grid with margin s at the equilibrium and v >= eps.
/// The result is rescaled to min(v) = 1 and certified on the refined grid.
inline SynthResult synth_const(const SystemDef& sys, const WorkingBox& box, SynthMode mode,
                               double eps = kDefaultEps) {
  return detail::synthesize(sys, box, 0, mode, eps, true);
}

/// Univariate polynomial weights of the given degree by linear programming.
/// Constraints at each grid point: theta_i(x_i) >= eps (sampled finer along
/// each axis), every condition component <= -s (stage 1) or <= 0 (stage 2,
/// tried when stage 1 yields no certificate), <= -s at the equilibrium, and
/// sum_i theta_i(x*_i) = n.  Among weights within 0.1% of the best margin the
/// one with the smallest non-constant coefficients is kept.  The result is
/// scaled so that the leading coefficient of the last non-constant weight has
/// magnitude 1 (or the smallest weight is 1 when all are constant) and
/// certified on the refined grid.
inline SynthResult synth_poly(const SystemDef& sys, const WorkingBox& box, int degree, SynthMode mode,
                              double eps = kDefaultEps) {
  if (degree < 0) throw InvalidArgument("degree must be nonnegative");
  if (!sys.equilibrium) throw InvalidArgument("system '" + sys.name + "' declares no equilibrium");
  if (degree > 0 && sys.time_varying()) throw InvalidArgument("state-dependent weights need an autonomous vector field");
  return detail::synthesize(sys, box, degree, mode, eps, false);
}

inline nlohmann::ordered_json to_json(const SynthResult& r) {
  nlohmann::ordered_json j;
  j["ok"] = r.ok;
  j["stage"] = r.stage;
  j["lp_status"] = to_string(r.lp_status);
  j["margin"] = r.margin + 0.0;
  if (r.ok || r.weights.size() > 0) j["weights"] = to_json(r.weights);
  if (r.report) j["report"] = to_json(*r.report);
  if (!r.diagnosis.empty()) j["diagnosis"] = r.diagnosis;
  return j;
}

}  // namespace monocert
