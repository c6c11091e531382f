#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "monocert/jacobian.hpp"
#include "monocert/measures.hpp"
#include "monocert/system.hpp"
#include "monocert/weights.hpp"

namespace monocert {

enum class LyapVariant { kStateSum, kFlowSum, kStateMax, kFlowMax };
enum class LyapScope { kGlobal, kLocal };

inline const char* to_string(LyapVariant v) {
  switch (v) {
    case LyapVariant::kStateSum: return "state-sum";
    case LyapVariant::kFlowSum: return "flow-sum";
    case LyapVariant::kStateMax: return "state-max";
    case LyapVariant::kFlowMax: return "flow-max";
  }
  return "?";
}

inline LyapVariant parse_lyap_variant(const std::string& s) {
  for (auto v : {LyapVariant::kStateSum, LyapVariant::kFlowSum, LyapVariant::kStateMax, LyapVariant::kFlowMax}) {
    if (s == to_string(v)) return v;
  }
  throw InvalidArgument("unknown Lyapunov variant '" + s + "' (state-sum, flow-sum, state-max, flow-max)");
}

inline const char* to_string(LyapScope s) { return s == LyapScope::kGlobal ? "global" : "local"; }

inline bool is_sum(LyapVariant v) { return v == LyapVariant::kStateSum || v == LyapVariant::kFlowSum; }
inline bool is_state(LyapVariant v) { return v == LyapVariant::kStateSum || v == LyapVariant::kStateMax; }

namespace detail {

/// 1/c stored as a reciprocal constant becomes the plain constant.
inline ScalarWeight canonical(const ScalarWeight& w) {
  if (w.is_reciprocal() && w.is_constant()) return ScalarWeight::constant(1.0 / w.coefficients()[0]);
  return w;
}

inline WeightFamily canonical(const WeightFamily& w) {
  std::vector<ScalarWeight> out;
  for (const auto& s : w.weights()) out.push_back(canonical(s));
  return WeightFamily(w.kind(), out);
}

}  // namespace detail

/// |(int_{x_i}^{y_i} theta_i)_i| in the chosen norm.  Omega families are read
/// as theta = 1/omega.
inline double weighted_distance(const WeightFamily& w, std::span<const double> x, std::span<const double> y,
                                Norm norm) {
  if (x.size() != w.size() || y.size() != w.size()) throw InvalidArgument("point has the wrong dimension");
  const WeightFamily theta = detail::canonical(w.as_theta());
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double d = std::abs(theta[i].integral(x[i], y[i]));
    acc = norm == Norm::kL1 ? acc + d : std::max(acc, d);
  }
  return acc;
}

/// Separable Lyapunov function built from certified weights.
///   state-sum  V = sum_i |int_{x*_i}^{x_i} theta_i|
///   flow-sum   V = sum_i theta_i(x_i) |f_i(x)|
///   state-max  V = max_i |int_{x*_i}^{x_i} 1/omega_i|
///   flow-max   V = max_i |f_i(x)| / omega_i(x_i)
class LyapFn {
 public:
  LyapFn(const SystemDef& sys, const WeightFamily& w, LyapVariant variant, LyapScope scope)
      : variant_(variant), scope_(scope), weights_(w), metric_(detail::canonical(w.as_theta())),
        xstar_(*sys.equilibrium), names_(sys.states), field_(sys) {
    if (is_state(variant_)) {
      for (std::size_t i = 0; i < metric_.size(); ++i) {
        const ScalarWeight& m = metric_[i];
        std::vector<double> c;
        if (!m.is_reciprocal()) {
          // Antiderivative with Theta_i(x*_i) subtracted.
          c.assign(m.coefficients().size() + 1, 0.0);
          for (std::size_t k = 0; k < m.coefficients().size(); ++k) {
            c[k + 1] = m.coefficients()[k] / static_cast<double>(k + 1);
          }
          c[0] = -horner(c, xstar_[i]);
        }
        antiderivative_.push_back(std::move(c));
      }
    }
  }

  LyapVariant variant() const { return variant_; }
  LyapScope scope() const { return scope_; }
  const WeightFamily& weights() const { return weights_; }
  const std::vector<double>& equilibrium() const { return xstar_; }

  /// Per-coordinate terms V_i; V is their sum or maximum.
  std::vector<double> terms(std::span<const double> x, double t = 0.0) const {
    if (x.size() != xstar_.size()) throw InvalidArgument("point has the wrong dimension");
    std::vector<double> out(x.size());
    if (is_state(variant_)) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        const auto& c = antiderivative_[i];
        out[i] = std::abs(c.empty() ? metric_[i].integral(xstar_[i], x[i]) : horner(c, x[i]));
      }
      return out;
    }
    const std::vector<double> f = field_(x, t);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = metric_[i].value(x[i]) * std::abs(f[i]);
    return out;
  }

  double operator()(std::span<const double> x, double t = 0.0) const {
    const auto v = terms(x, t);
    if (is_sum(variant_)) {
      double s = 0.0;
      for (double e : v) s += e;
      return s;
    }
    return *std::max_element(v.begin(), v.end());
  }

  /// Human-readable formula.
  std::string to_string() const {
    std::vector<std::string> parts;
    for (std::size_t i = 0; i < xstar_.size(); ++i) parts.push_back(term_text(i));
    std::string out = "V(x) = ";
    if (is_sum(variant_)) {
      for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? " + " : "") + parts[i];
      return out;
    }
    out += "max{";
    for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? ", " : "") + parts[i];
    return out + "}";
  }

 private:
  std::string term_text(std::size_t i) const {
    const std::string& x = names_[i];
    if (is_state(variant_)) {
      const auto& c = antiderivative_[i];
      if (!c.empty()) return "|" + monocert::to_string(univariate_expr(c, static_cast<int>(i)), names_) + "|";
      return "|integral(" + metric_[i].to_string("s") + ", " + format_number(xstar_[i]) + ", " + x + ")|";
    }
    const std::string f = "|f" + std::to_string(i + 1) + "(x)|";
    const ScalarWeight& m = metric_[i];
    if (m.is_constant() && m.coefficients()[0] == 1.0) return f;
    const std::string w = m.to_string(x);
    const bool bare = m.is_constant() || m.is_reciprocal();
    return (bare ? w : "(" + w + ")") + "*" + f;
  }

  LyapVariant variant_;
  LyapScope scope_;
  WeightFamily weights_;
  WeightFamily metric_;
  std::vector<double> xstar_;
  std::vector<std::string> names_;
  CompiledField field_;
  std::vector<std::vector<double>> antiderivative_;
};

/// Lyapunov function of the given variant.  Sum variants take theta weights
/// and max variants omega weights.  State variants are global; flow variants
/// are local unless `flow_global` says the constant-weight addendum holds.
inline LyapFn build_lyapunov(const SystemDef& sys, const WeightFamily& w, LyapVariant variant,
                             bool flow_global = false) {
  if (!sys.equilibrium) throw InvalidArgument("system '" + sys.name + "' declares no equilibrium");
  if (w.size() != sys.dim()) throw InvalidArgument("weight family has the wrong dimension");
  const WeightKind want = is_sum(variant) ? WeightKind::kTheta : WeightKind::kOmega;
  if (w.kind() != want) {
    throw InvalidArgument(std::string(to_string(variant)) + " needs " + to_string(want) + " weights, got " +
                          to_string(w.kind()));
  }
  const LyapScope scope = is_state(variant) || flow_global ? LyapScope::kGlobal : LyapScope::kLocal;
  return LyapFn(sys, w, variant, scope);
}

inline double eval_lyap(const LyapFn& v, std::span<const double> x, double t = 0.0) { return v(x, t); }

inline nlohmann::ordered_json to_json(const LyapFn& v) {
  nlohmann::ordered_json j;
  j["variant"] = to_string(v.variant());
  j["scope"] = to_string(v.scope());
  j["equilibrium"] = v.equilibrium();
  j["weights"] = to_json(v.weights());
  j["formula"] = v.to_string();
  return j;
}

}  // namespace monocert
