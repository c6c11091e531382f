#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "monocert/certify.hpp"
#include "monocert/jacobian.hpp"
#include "monocert/lyap.hpp"
#include "monocert/measures.hpp"
#include "monocert/parallel.hpp"
#include "monocert/system.hpp"

namespace monocert {

inline constexpr double kDefaultDt = 1e-3;
/// Distance a state may stray outside the domain before the run is aborted.
inline constexpr double kInvarianceTol = 1e-9;

/// Samples x(t_k) on the uniform grid t_k = t0 + k dt.
struct Trajectory {
  double t0 = 0.0;
  double dt = kDefaultDt;
  std::vector<double> t;
  std::vector<std::vector<double>> x;
  /// Largest step-doubling estimate of the local error.
  double max_step_error = 0.0;
  /// Set when the state left the domain; samples stop before the exit.
  std::optional<std::string> aborted;

  std::size_t size() const { return t.size(); }
  const std::vector<double>& back() const { return x.back(); }
};

namespace detail {

inline void rk4_step(const CompiledField& f, std::span<const double> x, double t, double h, std::span<double> out,
                     std::vector<double>& k1, std::vector<double>& k2, std::vector<double>& k3,
                     std::vector<double>& k4, std::vector<double>& tmp) {
  const std::size_t n = x.size();
  f(x, t, k1);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
  f(tmp, t + 0.5 * h, k2);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
  f(tmp, t + 0.5 * h, k3);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + h * k3[i];
  f(tmp, t + h, k4);
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

inline std::size_t step_count(double span, double dt) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(span / dt - 1e-9)));
}

}  // namespace detail

/// Classical fixed-step RK4 from x0 over [t0, t0 + t_end].  The step is
/// t_end / ceil(t_end / dt), so the grid ends exactly at t_end.  Every step is
/// repeated as two half steps to estimate the local error.
inline Trajectory integrate(const SystemDef& sys, std::span<const double> x0, double t_end, double dt = kDefaultDt,
                            double t0 = 0.0) {
  if (x0.size() != sys.dim()) throw InvalidArgument("initial state has the wrong dimension");
  if (!(t_end > 0.0) || !std::isfinite(t_end)) throw InvalidArgument("t_end must be positive");
  if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
  if (!sys.in_domain(x0, kInvarianceTol)) throw InvalidArgument("initial state " + detail::point_text(x0) + " is outside the domain");
  const CompiledField f(sys);
  const std::size_t steps = detail::step_count(t_end, dt);
  const std::size_t n = sys.dim();
  Trajectory tr;
  tr.t0 = t0;
  tr.dt = t_end / static_cast<double>(steps);
  tr.t.reserve(steps + 1);
  tr.x.reserve(steps + 1);
  tr.t.push_back(t0);
  tr.x.emplace_back(x0.begin(), x0.end());
  std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n), full(n), half(n), twice(n);
  const double h = tr.dt;
  for (std::size_t s = 0; s < steps; ++s) {
    const double t = t0 + h * static_cast<double>(s);
    const std::vector<double>& x = tr.x.back();
    detail::rk4_step(f, x, t, h, full, k1, k2, k3, k4, tmp);
    detail::rk4_step(f, x, t, 0.5 * h, half, k1, k2, k3, k4, tmp);
    detail::rk4_step(f, half, t + 0.5 * h, 0.5 * h, twice, k1, k2, k3, k4, tmp);
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(full[i])) {
        throw EvalError("state is not finite at t = " + format_number(t + h));
      }
      err = std::max(err, std::abs(full[i] - twice[i]) / 15.0);
    }
    tr.max_step_error = std::max(tr.max_step_error, err);
    if (!sys.in_domain(full, kInvarianceTol)) {
      tr.aborted = "state left the domain at t = " + format_number(t + h) + ", x = " + detail::point_text(full);
      break;
    }
    tr.t.push_back(t0 + h * static_cast<double>(s + 1));
    tr.x.push_back(full);
  }
  return tr;
}

/// CSV with header t,x1,...,xn and optionally V.
inline void write_csv(std::ostream& out, const Trajectory& tr, const std::vector<std::string>& names,
                      const LyapFn* v = nullptr) {
  out << "t";
  for (const auto& s : names) out << "," << s;
  if (v) out << ",V";
  out << "\n";
  for (std::size_t k = 0; k < tr.size(); ++k) {
    out << format_number(tr.t[k]);
    for (double e : tr.x[k]) out << "," << format_number(e);
    if (v) out << "," << format_number((*v)(tr.x[k], tr.t[k]));
    out << "\n";
  }
}

using ScalarFn = std::function<double(std::span<const double>, double)>;

struct DecreaseOptions {
  /// Allowed increment per step, relative to 1 + V.
  double tol = 1e-9;
  /// Required V(end) / V(start).
  double converge_ratio = 1e-6;
};

struct DecreaseReport {
  bool passed = false;
  double max_increment = 0.0;
  std::optional<double> first_violation;
  double initial_value = 0.0;
  double terminal_value = 0.0;
  bool converged = false;
};

/// V must not grow between consecutive samples (beyond tol (1 + V)) and must
/// end below converge_ratio times its initial value.
inline DecreaseReport verify_decrease(const ScalarFn& v, const Trajectory& tr, const DecreaseOptions& opt = {}) {
  if (tr.size() == 0) throw InvalidArgument("empty trajectory");
  DecreaseReport r;
  double prev = v(tr.x[0], tr.t[0]);
  r.initial_value = prev;
  bool ok = true;
  for (std::size_t k = 1; k < tr.size(); ++k) {
    const double cur = v(tr.x[k], tr.t[k]);
    const double inc = cur - prev;
    r.max_increment = std::max(r.max_increment, inc);
    if (inc > opt.tol * (1.0 + std::abs(prev))) {
      ok = false;
      if (!r.first_violation) r.first_violation = tr.t[k];
    }
    prev = cur;
  }
  r.terminal_value = prev;
  r.converged = std::abs(r.terminal_value) <= opt.converge_ratio * std::abs(r.initial_value);
  r.passed = ok && r.converged && !tr.aborted;
  return r;
}

inline DecreaseReport verify_decrease(const LyapFn& v, const Trajectory& tr, const DecreaseOptions& opt = {}) {
  return verify_decrease([&v](std::span<const double> x, double t) { return v(x, t); }, tr, opt);
}

inline nlohmann::ordered_json to_json(const DecreaseReport& r) {
  nlohmann::ordered_json j;
  j["verdict"] = r.passed ? "pass" : "fail";
  j["max_increment"] = r.max_increment + 0.0;
  j["first_violation"] = r.first_violation ? nlohmann::ordered_json(*r.first_violation) : nlohmann::ordered_json();
  j["initial_value"] = r.initial_value;
  j["terminal_value"] = r.terminal_value;
  j["converged"] = r.converged;
  return j;
}

/// Least-squares slope of log(y) against t over samples with y > floor.
inline std::optional<double> log_slope(const std::vector<double>& t, const std::vector<double>& y,
                                       double floor = 1e-10) {
  double n = 0, st = 0, sy = 0, stt = 0, sty = 0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (!(y[k] > floor)) continue;
    const double ly = std::log(y[k]);
    n += 1;
    st += t[k];
    sy += ly;
    stt += t[k] * t[k];
    sty += t[k] * ly;
  }
  const double den = n * stt - st * st;
  if (n < 2 || den <= 0.0) return std::nullopt;
  return (n * sty - st * sy) / den;
}

struct ContractionOptions {
  std::size_t pairs = 20;
  double t_end = 5.0;
  double dt = kDefaultDt;
  std::uint64_t seed = 1;
};

struct ContractionReport {
  /// c = -max mu(J~) over the grid; the certificate is d(t) <= e^(-ct) d(0).
  double certified_rate = 0.0;
  /// Smallest fitted decay exponent over pairs that had one.
  std::optional<double> observed_rate;
  /// Largest d(t) / (e^(-ct) d(0)) seen; <= 1 + 1e-6 when the bound holds.
  double worst_distance_ratio = 0.0;
  /// Same for |Theta(x) f(x)| along single trajectories.
  double worst_flow_ratio = 0.0;
  std::size_t pairs = 0;
  std::size_t aborted = 0;
  std::size_t left_box = 0;
  bool passed = false;
};

/// Integrates random pairs drawn uniformly in the box and compares weighted
/// distances and weighted flow norms with the certified exponential bound.
inline ContractionReport estimate_contraction_rate(const SystemDef& sys, const WeightFamily& w, Norm norm,
                                                   const WorkingBox& box, const ContractionOptions& opt = {}) {
  if (opt.pairs < 1) throw InvalidArgument("need at least one pair");
  w.check_on_box(box.axes);
  const CertReport mu = check_measure(sys, w, norm, box);
  ContractionReport rep;
  rep.certified_rate = -mu.worst_margin;
  rep.pairs = opt.pairs;
  const double c = rep.certified_rate;
  const WeightFamily theta = w.as_theta();
  std::mt19937_64 rng(opt.seed);
  std::vector<std::vector<double>> starts;
  for (std::size_t p = 0; p < 2 * opt.pairs; ++p) {
    std::vector<double> x(box.dim());
    for (std::size_t i = 0; i < box.dim(); ++i) {
      std::uniform_real_distribution<double> u(box.axes[i].lo, box.axes[i].hi);
      x[i] = u(rng);
    }
    starts.push_back(std::move(x));
  }
  std::vector<Trajectory> runs(starts.size());
  parallel_for(starts.size(), [&](std::size_t k) { runs[k] = integrate(sys, starts[k], opt.t_end, opt.dt); });

  auto in_box = [&](const std::vector<double>& x) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] < box.axes[i].lo - kInvarianceTol || x[i] > box.axes[i].hi + kInvarianceTol) return false;
    }
    return true;
  };
  auto flow_norm = [&](const std::vector<double>& x, double t) {
    const auto f = sys.eval_f(x, t);
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double e = std::abs(theta.value(i, x[i]) * f[i]);
      acc = norm == Norm::kL1 ? acc + e : std::max(acc, e);
    }
    return acc;
  };
  const CompiledField field(sys);
  for (std::size_t p = 0; p < opt.pairs; ++p) {
    const Trajectory& a = runs[2 * p];
    const Trajectory& b = runs[2 * p + 1];
    if (a.aborted || b.aborted) {
      ++rep.aborted;
      continue;
    }
    bool outside = false;
    const double d0 = weighted_distance(w, a.x[0], b.x[0], norm);
    std::vector<double> ts;
    std::vector<double> ds;
    for (const Trajectory* tr : {&a, &b}) {
      const double g0 = flow_norm(tr->x[0], tr->t[0]);
      for (std::size_t k = 0; k < tr->size(); ++k) {
        if (!in_box(tr->x[k])) outside = true;
        const double bound = std::exp(-c * (tr->t[k] - tr->t0)) * g0;
        const double g = flow_norm(tr->x[k], tr->t[k]);
        if (g0 > 0.0) rep.worst_flow_ratio = std::max(rep.worst_flow_ratio, g / bound);
      }
    }
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double d = weighted_distance(w, a.x[k], b.x[k], norm);
      ts.push_back(a.t[k]);
      ds.push_back(d);
      if (d0 > 0.0) rep.worst_distance_ratio = std::max(rep.worst_distance_ratio, d / (std::exp(-c * a.t[k]) * d0));
    }
    if (outside) ++rep.left_box;
    if (auto slope = log_slope(ts, ds)) {
      rep.observed_rate = rep.observed_rate ? std::min(*rep.observed_rate, -*slope) : -*slope;
    }
  }
  rep.passed = rep.aborted == 0 && rep.worst_distance_ratio <= 1.0 + 1e-6 && rep.worst_flow_ratio <= 1.0 + 1e-6;
  return rep;
}

inline nlohmann::ordered_json to_json(const ContractionReport& r) {
  nlohmann::ordered_json j;
  j["verdict"] = r.passed ? "pass" : "fail";
  j["certified_rate"] = r.certified_rate + 0.0;
  j["observed_rate"] = r.observed_rate ? nlohmann::ordered_json(*r.observed_rate) : nlohmann::ordered_json();
  j["worst_distance_ratio"] = r.worst_distance_ratio;
  j["worst_flow_ratio"] = r.worst_flow_ratio;
  j["pairs"] = r.pairs;
  j["aborted"] = r.aborted;
  j["left_box"] = r.left_box;
  return j;
}

struct EntrainmentOptions {
  int periods = 40;
  double dt = kDefaultDt;
  /// Mutual distance allowed at the final time.
  double final_tol = 1e-4;
};

struct EntrainmentReport {
  /// (a) pairwise distances at t = kT never grow.
  bool distances_nonincreasing = false;
  /// (b) the Poincaré residual max(|x(kT) - x((k-1)T)|, pairwise distance)
  /// decays geometrically over the last half of the horizon.
  bool geometric = false;
  /// (c) all trajectories agree at the final time.
  bool converged = false;
  /// Fitted per-period factor of the Poincaré residual.
  std::optional<double> rate_per_period;
  double final_spread = 0.0;
  std::vector<double> residuals;
  /// Largest |x(kT) - x((k-1)T)| over the trajectories, k = 1..periods.
  std::vector<double> increments;
  std::optional<std::string> aborted;
  bool passed() const { return distances_nonincreasing && geometric && converged && !aborted; }
};

/// Integrates every initial condition for `periods` periods and checks that
/// they entrain to one periodic solution.
inline EntrainmentReport entrainment_test(const SystemDef& sys, const std::vector<std::vector<double>>& x0s,
                                          const EntrainmentOptions& opt = {}) {
  if (!sys.period) throw InvalidArgument("system '" + sys.name + "' declares no period");
  if (x0s.size() < 2) throw InvalidArgument("entrainment needs at least two initial conditions");
  if (opt.periods < 2) throw InvalidArgument("entrainment needs at least two periods");
  const double T = *sys.period;
  const std::size_t per = detail::step_count(T, opt.dt);
  const double h = T / static_cast<double>(per);
  std::vector<Trajectory> runs(x0s.size());
  parallel_for(x0s.size(), [&](std::size_t k) { runs[k] = integrate(sys, x0s[k], T * opt.periods, h); });
  EntrainmentReport rep;
  for (const auto& r : runs) {
    if (r.aborted) {
      rep.aborted = r.aborted;
      return rep;
    }
  }
  auto dist = [](const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
  };
  const auto K = static_cast<std::size_t>(opt.periods);
  auto at = [&](std::size_t r, std::size_t k) -> const std::vector<double>& { return runs[r].x[k * per]; };
  std::vector<double> spread(K + 1, 0.0);
  rep.distances_nonincreasing = true;
  std::vector<std::vector<double>> pair_prev;
  for (std::size_t k = 0; k <= K; ++k) {
    for (std::size_t a = 0; a < runs.size(); ++a) {
      for (std::size_t b = a + 1; b < runs.size(); ++b) spread[k] = std::max(spread[k], dist(at(a, k), at(b, k)));
    }
    if (k == 0) continue;
    for (std::size_t a = 0; a < runs.size(); ++a) {
      for (std::size_t b = a + 1; b < runs.size(); ++b) {
        const double now = dist(at(a, k), at(b, k));
        const double before = dist(at(a, k - 1), at(b, k - 1));
        if (now > before * (1.0 + 1e-9) + 1e-12) rep.distances_nonincreasing = false;
      }
    }
  }
  rep.residuals.assign(K + 1, 0.0);
  for (std::size_t k = 1; k <= K; ++k) {
    double inc = 0.0;
    for (std::size_t r = 0; r < runs.size(); ++r) inc = std::max(inc, dist(at(r, k), at(r, k - 1)));
    rep.increments.push_back(inc);
    rep.residuals[k] = std::max(spread[k], inc);
  }
  double scale = 0.0;
  for (const auto& x0 : x0s) {
    for (double e : x0) scale = std::max(scale, std::abs(e));
  }
  const double floor = 1e-12 * (1.0 + scale);
  std::vector<double> idx;
  for (std::size_t k = 0; k <= K; ++k) idx.push_back(static_cast<double>(k));
  std::vector<double> tail_k(idx.begin() + static_cast<std::ptrdiff_t>(K / 2), idx.end());
  std::vector<double> tail_r(rep.residuals.begin() + static_cast<std::ptrdiff_t>(K / 2), rep.residuals.end());
  std::vector<double> head_k(idx.begin() + 1, idx.end());
  std::vector<double> head_r(rep.residuals.begin() + 1, rep.residuals.end());
  if (auto slope = log_slope(head_k, head_r, floor)) rep.rate_per_period = std::exp(*slope);
  const bool settled = std::all_of(tail_r.begin(), tail_r.end(), [&](double r) { return r <= floor; });
  const auto tail_slope = log_slope(tail_k, tail_r, floor);
  rep.geometric = settled || (tail_slope && *tail_slope < -1e-6 && tail_r.back() < tail_r.front());
  rep.final_spread = spread[K];
  rep.converged = spread[K] < opt.final_tol;
  return rep;
}

inline nlohmann::ordered_json to_json(const EntrainmentReport& r) {
  nlohmann::ordered_json j;
  j["verdict"] = r.passed() ? "pass" : "fail";
  j["distances_nonincreasing"] = r.distances_nonincreasing;
  j["geometric"] = r.geometric;
  j["converged"] = r.converged;
  j["rate_per_period"] = r.rate_per_period ? nlohmann::ordered_json(*r.rate_per_period) : nlohmann::ordered_json();
  j["final_spread"] = r.final_spread;
  if (r.aborted) j["aborted"] = *r.aborted;
  return j;
}

}  // namespace monocert
