#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "monocert/error.hpp"
#include "monocert/expr.hpp"
#include "monocert/polynomial.hpp"
#include "monocert/quadrature.hpp"
#include "monocert/system.hpp"

namespace monocert {

/// Evaluates sum_k c[k] s^k.
inline double horner(const std::vector<double>& c, double s) {
  double r = 0.0;
  for (std::size_t k = c.size(); k-- > 0;) r = r * s + c[k];
  return r;
}

inline std::vector<double> poly_derivative(const std::vector<double>& c) {
  std::vector<double> d;
  for (std::size_t k = 1; k < c.size(); ++k) d.push_back(c[k] * static_cast<double>(k));
  return d;
}

/// Minimum and maximum of a univariate polynomial on [lo, hi].  Interior
/// extrema are located as sign changes of the derivative on a fine sampling,
/// refined by bisection.
inline std::pair<double, double> poly_range(const std::vector<double>& c, double lo, double hi) {
  double mn = std::min(horner(c, lo), horner(c, hi));
  double mx = std::max(horner(c, lo), horner(c, hi));
  const std::vector<double> d = poly_derivative(c);
  if (d.size() <= 1 || !(hi > lo)) return {mn, mx};
  constexpr int kSamples = 4096;
  double prev_s = lo;
  double prev_d = horner(d, lo);
  for (int k = 1; k <= kSamples; ++k) {
    const double s = lo + (hi - lo) * k / kSamples;
    const double ds = horner(d, s);
    double root = std::nan("");
    if (ds == 0.0) {
      root = s;
    } else if ((prev_d < 0.0 && ds > 0.0) || (prev_d > 0.0 && ds < 0.0)) {
      double a = prev_s;
      double b = s;
      double fa = prev_d;
      for (int it = 0; it < 80; ++it) {
        const double m = 0.5 * (a + b);
        const double fm = horner(d, m);
        if ((fa < 0.0) == (fm < 0.0)) {
          a = m;
          fa = fm;
        } else {
          b = m;
        }
      }
      root = 0.5 * (a + b);
    }
    if (!std::isnan(root)) {
      const double v = horner(c, root);
      mn = std::min(mn, v);
      mx = std::max(mx, v);
    }
    prev_s = s;
    prev_d = ds;
  }
  return {mn, mx};
}

/// A scalar weight w(s), either a polynomial p(s) or its reciprocal 1/p(s).
class ScalarWeight {
 public:
  ScalarWeight() : coeffs_{1.0} {}

  static ScalarWeight polynomial(std::vector<double> coeffs) { return ScalarWeight(std::move(coeffs), false); }
  static ScalarWeight reciprocal(std::vector<double> coeffs) { return ScalarWeight(std::move(coeffs), true); }
  static ScalarWeight constant(double v) { return polynomial({v}); }

  bool is_reciprocal() const { return reciprocal_; }
  bool is_constant() const { return coeffs_.size() == 1; }
  /// Ascending coefficients of p.
  const std::vector<double>& coefficients() const { return coeffs_; }
  int degree() const { return static_cast<int>(coeffs_.size()) - 1; }

  double value(double s) const {
    const double p = horner(coeffs_, s);
    if (!reciprocal_) return p;
    if (p == 0.0) throw EvalError("reciprocal weight has a zero denominator");
    return 1.0 / p;
  }

  double derivative(double s) const {
    const double dp = horner(poly_derivative(coeffs_), s);
    if (!reciprocal_) return dp;
    const double p = horner(coeffs_, s);
    if (p == 0.0) throw EvalError("reciprocal weight has a zero denominator");
    return -dp / (p * p);
  }

  /// 1/w.
  ScalarWeight inverse() const { return ScalarWeight(coeffs_, !reciprocal_); }

  ScalarWeight scaled(double k) const {
    if (reciprocal_) {
      std::vector<double> c = coeffs_;
      for (double& v : c) v /= k;
      return reciprocal(c);
    }
    std::vector<double> c = coeffs_;
    for (double& v : c) v *= k;
    return polynomial(c);
  }

  /// (min, max) of w on [lo, hi].  Throws InvalidArgument if a reciprocal's
  /// denominator changes sign or vanishes there.
  std::pair<double, double> range(double lo, double hi) const {
    const auto [pmin, pmax] = poly_range(coeffs_, lo, hi);
    if (!reciprocal_) return {pmin, pmax};
    if (pmin <= 0.0 && pmax >= 0.0) {
      throw InvalidArgument("reciprocal weight denominator vanishes on [" + format_number(lo) + ", " +
                            format_number(hi) + "]");
    }
    return {1.0 / pmax, 1.0 / pmin};
  }

  /// Integral of w over [a, b]: exact for polynomials, Gauss-Legendre on unit
  /// panels for reciprocals.
  double integral(double a, double b) const {
    if (!reciprocal_) {
      double s = 0.0;
      for (std::size_t k = coeffs_.size(); k-- > 0;) {
        const double e = static_cast<double>(k + 1);
        s += coeffs_[k] * (std::pow(b, e) - std::pow(a, e)) / e;
      }
      return s;
    }
    if (a == b) return 0.0;
    if (a > b) return -integral(b, a);
    const auto& rule = gauss_legendre_32();
    const int panels = std::max(1, static_cast<int>(std::ceil(std::abs(b - a))));
    double s = 0.0;
    for (int k = 0; k < panels; ++k) {
      const double pa = a + (b - a) * k / panels;
      const double pb = k + 1 == panels ? b : a + (b - a) * (k + 1) / panels;
      s += rule.integrate([this](double u) { return value(u); }, pa, pb);
    }
    return s;
  }

  Expr to_expr(int var) const {
    const Expr p = univariate_expr(coeffs_, var);
    return reciprocal_ ? div(Expr::constant(1.0), p) : p;
  }

  std::string to_string(const std::string& var) const {
    const std::string p = monocert::to_string(univariate_expr(coeffs_, 0), {var});
    if (!reciprocal_) return p;
    return coeffs_.size() == 1 ? "1/" + p : "1/(" + p + ")";
  }

  bool operator==(const ScalarWeight&) const = default;

 private:
  ScalarWeight(std::vector<double> coeffs, bool reciprocal) : coeffs_(std::move(coeffs)), reciprocal_(reciprocal) {
    while (coeffs_.size() > 1 && coeffs_.back() == 0.0) coeffs_.pop_back();
    if (coeffs_.empty()) throw InvalidArgument("weight needs at least one coefficient");
    for (double c : coeffs_) {
      if (!std::isfinite(c)) throw InvalidArgument("weight coefficient is not finite");
    }
    if (reciprocal_ && coeffs_.size() == 1) {
      if (coeffs_[0] == 0.0) throw InvalidArgument("reciprocal of the zero polynomial");
      coeffs_[0] = 1.0 / coeffs_[0];
      reciprocal_ = false;
    }
  }

  std::vector<double> coeffs_;
  bool reciprocal_ = false;
};

enum class WeightKind { kTheta, kOmega };

inline const char* to_string(WeightKind k) { return k == WeightKind::kTheta ? "theta" : "omega"; }

/// Positivity bounds of a weight family on a box: every weight lies in [min, max].
struct WeightBound {
  double min = 0.0;
  double max = 0.0;
};

/// Per-coordinate weights theta_i(x_i) or omega_i(x_i).
class WeightFamily {
 public:
  WeightFamily() = default;
  WeightFamily(WeightKind kind, std::vector<ScalarWeight> w) : kind_(kind), w_(std::move(w)) {}

  static WeightFamily constant(WeightKind kind, const std::vector<double>& v) {
    std::vector<ScalarWeight> w;
    for (double c : v) w.push_back(ScalarWeight::constant(c));
    return WeightFamily(kind, w);
  }

  WeightKind kind() const { return kind_; }
  std::size_t size() const { return w_.size(); }
  const ScalarWeight& operator[](std::size_t i) const { return w_.at(i); }
  const std::vector<ScalarWeight>& weights() const { return w_; }

  bool is_constant() const {
    return std::all_of(w_.begin(), w_.end(), [](const ScalarWeight& s) { return s.is_constant(); });
  }

  double value(std::size_t i, double s) const { return w_.at(i).value(s); }
  double derivative(std::size_t i, double s) const { return w_.at(i).derivative(s); }

  /// Diagonal metric scaling theta_i: the weight itself for theta families,
  /// its reciprocal for omega families.
  double theta(std::size_t i, double s) const {
    return kind_ == WeightKind::kTheta ? value(i, s) : 1.0 / value(i, s);
  }

  double theta_prime(std::size_t i, double s) const {
    if (kind_ == WeightKind::kTheta) return derivative(i, s);
    const double w = value(i, s);
    return -derivative(i, s) / (w * w);
  }

  /// The theta family defining the same metric.
  WeightFamily as_theta() const {
    if (kind_ == WeightKind::kTheta) return *this;
    std::vector<ScalarWeight> inv;
    for (const auto& s : w_) inv.push_back(s.inverse());
    return WeightFamily(WeightKind::kTheta, inv);
  }

  WeightFamily scaled(double k) const {
    std::vector<ScalarWeight> out;
    for (const auto& s : w_) out.push_back(s.scaled(k));
    return WeightFamily(kind_, out);
  }

  /// Checks the family on `box`: theta weights must stay >= some c > 0, omega
  /// weights in (0, c].  Returns the observed bounds; throws InvalidArgument.
  WeightBound check_on_box(const std::vector<Interval>& box) const {
    if (box.size() != w_.size()) throw InvalidArgument("weight family has wrong dimension");
    WeightBound b{kInf, -kInf};
    for (std::size_t i = 0; i < w_.size(); ++i) {
      if (!box[i].finite()) throw InvalidArgument("weights are checked on a finite box only");
      const auto [lo, hi] = w_[i].range(box[i].lo, box[i].hi);
      if (!(lo > 0.0)) {
        throw WeightError(std::string(to_string(kind_)) + "[" + std::to_string(i) +
                              "] is not positive on the box (min " + format_number(lo) + ")");
      }
      b.min = std::min(b.min, lo);
      b.max = std::max(b.max, hi);
    }
    return b;
  }

  bool operator==(const WeightFamily&) const = default;

 private:
  WeightKind kind_ = WeightKind::kTheta;
  std::vector<ScalarWeight> w_;
};

inline nlohmann::json to_json(const WeightFamily& w) {
  nlohmann::json coeffs = nlohmann::json::array();
  for (const auto& s : w.weights()) {
    if (s.is_reciprocal()) {
      coeffs.push_back({{"reciprocal", s.coefficients()}});
    } else {
      coeffs.push_back(s.coefficients());
    }
  }
  return {{"kind", to_string(w.kind())}, {"coefficients", coeffs}};
}

/// Reads {"kind": "theta"|"omega", "coefficients": [[c0, c1, ...] | {"reciprocal": [...]}, ...]}.
inline WeightFamily weights_from_json(const nlohmann::json& j) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    WeightKind k;
    if (kind == "theta") {
      k = WeightKind::kTheta;
    } else if (kind == "omega") {
      k = WeightKind::kOmega;
    } else {
      throw InvalidArgument("weight kind must be theta or omega, got " + kind);
    }
    std::vector<ScalarWeight> w;
    for (const auto& entry : j.at("coefficients")) {
      if (entry.is_object()) {
        w.push_back(ScalarWeight::reciprocal(entry.at("reciprocal").get<std::vector<double>>()));
      } else if (entry.is_number()) {
        w.push_back(ScalarWeight::constant(entry.get<double>()));
      } else {
        w.push_back(ScalarWeight::polynomial(entry.get<std::vector<double>>()));
      }
    }
    if (w.empty()) throw InvalidArgument("weight family is empty");
    return WeightFamily(k, w);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed weight JSON: ") + e.what());
  }
}

inline std::string to_string(const WeightFamily& w, const std::vector<std::string>& names) {
  std::string out = std::string(to_string(w.kind())) + " = (";
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (i) out += ", ";
    out += w[i].to_string(i < names.size() ? names[i] : "x" + std::to_string(i));
  }
  return out + ")";
}

}  // namespace monocert
