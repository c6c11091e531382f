#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "monocert/error.hpp"
#include "monocert/polynomial.hpp"
#include "monocert/system.hpp"
#include "monocert/weights.hpp"

namespace monocert {

/// Sum-of-squares program for theta weights, in the form SDPA calls the dual:
/// find Y >= 0 (block diagonal) with F_k . Y = c_k for every coefficient
/// equation k.  Gram blocks hold the SOS certificates; a final diagonal block
/// holds theta = theta+ - theta- and the slacks of the strict rows at x*.
///
/// Equations, one per monomial:
///   z^T P_i z + s_i(x_i) d_i(x_i) - theta_i(x_i) = -eps        (theta_i >= eps)
///   z^T C_j z + sum_l sigma_jl(x) d_l(x_l) + (theta^T J + theta')_j = 0
///   slack_j + (theta(x*)^T J(x*))_j = -eps
/// with d_i the domain polynomial of axis i; multipliers of unbounded axes
/// (d_i = 0) are left out.
struct SosProgram {
  struct Block {
    std::string name;
    int size = 0;
    bool diagonal = false;
    std::vector<Monomial> basis;  // empty for the diagonal block
  };
  struct Entry {
    int block = 0;  // 0-based
    int i = 0;      // 0-based, i <= j
    int j = 0;
    double value = 0.0;
  };
  struct Equation {
    std::string label;
    double rhs = 0.0;
    std::vector<Entry> entries;
  };

  std::vector<std::string> states;
  int degree = 0;
  int multiplier_degree = 0;
  double eps = 0.0;
  std::vector<Block> blocks;
  std::vector<Equation> equations;
  std::vector<std::string> warnings;
  /// Diagonal-block positions of theta_ik+ and theta_ik-.
  std::vector<std::vector<std::pair<int, int>>> theta;

  int lp_block() const { return static_cast<int>(blocks.size()) - 1; }
};

namespace detail {

/// Domain polynomial of axis i: (x - a)(b - x), x - a, b - x, or 0.
inline Polynomial domain_polynomial(const Interval& b, int nvars, int i) {
  const Polynomial x = Polynomial::variable(nvars, i);
  const bool lo = std::isfinite(b.lo);
  const bool hi = std::isfinite(b.hi);
  const Polynomial below = x - Polynomial::constant(nvars, b.lo);
  const Polynomial above = Polynomial::constant(nvars, b.hi) - x;
  if (lo && hi) return below * above;
  if (lo) return below;
  if (hi) return above;
  return Polynomial(nvars);
}

inline std::string monomial_text(const Monomial& m, const std::vector<std::string>& names) {
  std::string s;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i] == 0) continue;
    if (!s.empty()) s += "*";
    s += names[i];
    if (m[i] > 1) s += "^" + std::to_string(m[i]);
  }
  return s.empty() ? "1" : s;
}

/// Accumulates linear equations keyed by monomial.
class EquationSet {
 public:
  explicit EquationSet(std::string label) : label_(std::move(label)) {}

  void add(const Monomial& m, int block, int i, int j, double value) {
    if (value == 0.0) return;
    auto& row = rows_[m];
    auto [it, fresh] = row.emplace(std::array<int, 3>{block, std::min(i, j), std::max(i, j)}, value);
    if (!fresh) it->second += value;
  }

  void set_rhs(const Monomial& m, double v) {
    rows_[m];
    rhs_[m] = v;
  }

  void emit(std::vector<SosProgram::Equation>& out, const std::vector<std::string>& names) const {
    for (const auto& [m, row] : rows_) {
      SosProgram::Equation eq;
      eq.label = label_ + " [" + monomial_text(m, names) + "]";
      auto r = rhs_.find(m);
      eq.rhs = r == rhs_.end() ? 0.0 : r->second;
      for (const auto& [key, v] : row) {
        if (v != 0.0) eq.entries.push_back({key[0], key[1], key[2], v});
      }
      if (eq.entries.empty() && eq.rhs == 0.0) continue;
      out.push_back(std::move(eq));
    }
  }

 private:
  std::string label_;
  std::map<Monomial, std::map<std::array<int, 3>, double>, GradedLex> rows_;
  std::map<Monomial, double, GradedLex> rhs_;
};

/// Adds z^T G z (times `times` when given) for the Gram block `block`.
inline void add_gram(EquationSet& eqs, int block, const std::vector<Monomial>& basis, const Polynomial* times) {
  for (std::size_t a = 0; a < basis.size(); ++a) {
    for (std::size_t b = a; b < basis.size(); ++b) {
      const Monomial ab = monomial_product(basis[a], basis[b]);
      if (times == nullptr) {
        eqs.add(ab, block, static_cast<int>(a), static_cast<int>(b), 1.0);
        continue;
      }
      for (const auto& [m, c] : times->terms()) {
        eqs.add(monomial_product(ab, m), block, static_cast<int>(a), static_cast<int>(b), c);
      }
    }
  }
}

/// Basis in x_i alone of degree <= h.
inline std::vector<Monomial> univariate_basis(int nvars, int i, int h) {
  std::vector<Monomial> out;
  for (int k = 0; k <= h; ++k) {
    Monomial m(static_cast<std::size_t>(nvars), 0);
    m[static_cast<std::size_t>(i)] = k;
    out.push_back(m);
  }
  return out;
}

}  // namespace detail

/// Builds the SOS program for univariate theta weights of the given degree on
/// the system's domain, with SOS multipliers of degree `multiplier_degree`.
inline SosProgram build_sos_program(const SystemDef& sys, int degree, double eps = 0.01, int multiplier_degree = 0) {
  if (degree < 0) throw InvalidArgument("degree must be nonnegative");
  if (multiplier_degree < 0 || multiplier_degree % 2 != 0) {
    throw InvalidArgument("multiplier degree must be even and nonnegative");
  }
  if (!(eps > 0.0)) throw InvalidArgument("eps must be positive");
  if (!sys.equilibrium) throw InvalidArgument("system '" + sys.name + "' declares no equilibrium");
  const int n = static_cast<int>(sys.dim());
  std::vector<Polynomial> f;
  for (std::size_t i = 0; i < sys.f.size(); ++i) {
    auto p = to_polynomial(sys.f[i], n);
    if (!p) throw InvalidArgument("vector field component d" + sys.states[i] + " is not polynomial");
    f.push_back(*p);
  }
  std::vector<Polynomial> d;
  for (int i = 0; i < n; ++i) d.push_back(detail::domain_polynomial(sys.bounds[static_cast<std::size_t>(i)], n, i));

  SosProgram prog;
  prog.states = sys.states;
  prog.degree = degree;
  prog.multiplier_degree = multiplier_degree;
  prog.eps = eps;
  const int hm = multiplier_degree / 2;
  const int lp = 2 * n * (degree + 1) + n;
  // The diagonal block goes last; its index is known once the Gram blocks are laid out.
  prog.theta.assign(static_cast<std::size_t>(n), {});
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k <= degree; ++k) {
      const int idx = i * (degree + 1) + k;
      prog.theta[static_cast<std::size_t>(i)].push_back({idx, n * (degree + 1) + idx});
    }
  }
  auto slack = [&](int j) { return 2 * n * (degree + 1) + j; };

  // theta_i as a polynomial over the diagonal block: +coef on plus, -coef on minus.
  auto add_theta_times = [&](detail::EquationSet& eqs, int i, int k, const Polynomial& times, double sign, int lpb) {
    const auto [pl, mi] = prog.theta[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    Monomial xk(static_cast<std::size_t>(n), 0);
    xk[static_cast<std::size_t>(i)] = k;
    for (const auto& [m, c] : times.terms()) {
      const Monomial mm = monomial_product(xk, m);
      eqs.add(mm, lpb, pl, pl, sign * c);
      eqs.add(mm, lpb, mi, mi, -sign * c);
    }
  };

  // Block layout: positivity Grams, s_i, condition Grams, sigma_jl, diagonal.
  std::vector<int> pos_block(static_cast<std::size_t>(n));
  std::vector<int> s_block(static_cast<std::size_t>(n), -1);
  for (int i = 0; i < n; ++i) {
    const int dd = d[static_cast<std::size_t>(i)].is_zero() ? 0 : d[static_cast<std::size_t>(i)].degree();
    const int top = std::max(degree, d[static_cast<std::size_t>(i)].is_zero() ? 0 : multiplier_degree + dd);
    if (top % 2 != 0) {
      prog.warnings.push_back("positivity of theta_" + std::to_string(i + 1) + " has odd degree " +
                              std::to_string(top) + "; its top coefficient is forced to cancel");
    }
    pos_block[static_cast<std::size_t>(i)] = static_cast<int>(prog.blocks.size());
    auto basis = detail::univariate_basis(n, i, top / 2);
    prog.blocks.push_back({"pos_" + sys.states[static_cast<std::size_t>(i)], static_cast<int>(basis.size()), false,
                           std::move(basis)});
  }
  for (int i = 0; i < n; ++i) {
    if (d[static_cast<std::size_t>(i)].is_zero()) continue;
    s_block[static_cast<std::size_t>(i)] = static_cast<int>(prog.blocks.size());
    auto basis = detail::univariate_basis(n, i, hm);
    prog.blocks.push_back({"s_" + sys.states[static_cast<std::size_t>(i)], static_cast<int>(basis.size()), false,
                           std::move(basis)});
  }

  // Condition polynomials (theta^T J + theta')_j expressed per coefficient.
  // Coefficient of theta_ik: x_i^k dF_i/dx_j, plus k x_j^(k-1) f_j when i = j.
  std::vector<std::vector<std::vector<Polynomial>>> cond(static_cast<std::size_t>(n));
  std::vector<int> cond_degree(static_cast<std::size_t>(n), 0);
  for (int j = 0; j < n; ++j) {
    auto& cj = cond[static_cast<std::size_t>(j)];
    cj.assign(static_cast<std::size_t>(n), std::vector<Polynomial>(static_cast<std::size_t>(degree + 1), Polynomial(n)));
    for (int i = 0; i < n; ++i) {
      const Polynomial Jij = f[static_cast<std::size_t>(i)].derivative(j);
      for (int k = 0; k <= degree; ++k) {
        Polynomial p = Polynomial::variable(n, i).power(k) * Jij;
        if (i == j && k > 0) {
          p = p + Polynomial::variable(n, j).power(k - 1).scaled(k) * f[static_cast<std::size_t>(j)];
        }
        if (!p.is_zero()) cond_degree[static_cast<std::size_t>(j)] = std::max(cond_degree[static_cast<std::size_t>(j)], p.degree());
        cj[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = std::move(p);
      }
    }
  }
  int dmax = 0;
  for (const auto& di : d) {
    if (!di.is_zero()) dmax = std::max(dmax, di.degree());
  }
  std::vector<int> cond_block(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    const int top = std::max(cond_degree[static_cast<std::size_t>(j)], dmax > 0 ? multiplier_degree + dmax : 0);
    if (top % 2 != 0) {
      prog.warnings.push_back("condition " + std::to_string(j + 1) + " has odd degree " + std::to_string(top) +
                              "; its top-degree terms are forced to cancel");
    }
    cond_block[static_cast<std::size_t>(j)] = static_cast<int>(prog.blocks.size());
    auto basis = monomials_up_to(n, top / 2);
    prog.blocks.push_back({"cond_" + std::to_string(j + 1), static_cast<int>(basis.size()), false, std::move(basis)});
  }
  std::vector<std::vector<int>> sigma_block(static_cast<std::size_t>(n), std::vector<int>(static_cast<std::size_t>(n), -1));
  for (int j = 0; j < n; ++j) {
    for (int l = 0; l < n; ++l) {
      if (d[static_cast<std::size_t>(l)].is_zero()) continue;
      sigma_block[static_cast<std::size_t>(j)][static_cast<std::size_t>(l)] = static_cast<int>(prog.blocks.size());
      auto basis = monomials_up_to(n, hm);
      prog.blocks.push_back({"sigma_" + std::to_string(j + 1) + "_" + sys.states[static_cast<std::size_t>(l)],
                             static_cast<int>(basis.size()), false, std::move(basis)});
    }
  }
  prog.blocks.push_back({"linear", lp, true, {}});
  const int lpb = prog.lp_block();

  const Monomial one(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    detail::EquationSet eqs("positivity " + sys.states[static_cast<std::size_t>(i)]);
    const auto& pb = prog.blocks[static_cast<std::size_t>(pos_block[static_cast<std::size_t>(i)])];
    detail::add_gram(eqs, pos_block[static_cast<std::size_t>(i)], pb.basis, nullptr);
    if (s_block[static_cast<std::size_t>(i)] >= 0) {
      detail::add_gram(eqs, s_block[static_cast<std::size_t>(i)],
                       prog.blocks[static_cast<std::size_t>(s_block[static_cast<std::size_t>(i)])].basis,
                       &d[static_cast<std::size_t>(i)]);
    }
    for (int k = 0; k <= degree; ++k) add_theta_times(eqs, i, k, Polynomial::constant(n, 1.0), -1.0, lpb);
    eqs.set_rhs(one, -eps);
    eqs.emit(prog.equations, sys.states);
  }
  for (int j = 0; j < n; ++j) {
    detail::EquationSet eqs("condition " + std::to_string(j + 1));
    detail::add_gram(eqs, cond_block[static_cast<std::size_t>(j)],
                     prog.blocks[static_cast<std::size_t>(cond_block[static_cast<std::size_t>(j)])].basis, nullptr);
    for (int l = 0; l < n; ++l) {
      const int sb = sigma_block[static_cast<std::size_t>(j)][static_cast<std::size_t>(l)];
      if (sb >= 0) detail::add_gram(eqs, sb, prog.blocks[static_cast<std::size_t>(sb)].basis, &d[static_cast<std::size_t>(l)]);
    }
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k <= degree; ++k) {
        const Polynomial& p = cond[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
        // p already carries x_i^k; add it with the plain theta_ik coefficient.
        const auto [pl, mi] = prog.theta[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
        for (const auto& [m, c] : p.terms()) {
          eqs.add(m, lpb, pl, pl, c);
          eqs.add(m, lpb, mi, mi, -c);
        }
      }
    }
    eqs.emit(prog.equations, sys.states);
  }
  const std::vector<double>& xs = *sys.equilibrium;
  for (int j = 0; j < n; ++j) {
    SosProgram::Equation eq;
    eq.label = "strict " + std::to_string(j + 1);
    eq.rhs = -eps;
    eq.entries.push_back({lpb, slack(j), slack(j), 1.0});
    for (int i = 0; i < n; ++i) {
      const double Jij = f[static_cast<std::size_t>(i)].derivative(j).evaluate(xs);
      double pw = 1.0;
      for (int k = 0; k <= degree; ++k) {
        const double c = pw * Jij;
        pw *= xs[static_cast<std::size_t>(i)];
        if (c == 0.0) continue;
        const auto [pl, mi] = prog.theta[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
        eq.entries.push_back({lpb, pl, pl, c});
        eq.entries.push_back({lpb, mi, mi, -c});
      }
    }
    prog.equations.push_back(std::move(eq));
  }
  return prog;
}

/// SDPA sparse (.dat-s) text of the program; F0 = 0.
inline std::string to_sdpa(const SosProgram& p) {
  std::ostringstream out;
  out.precision(17);
  out << "\" theta weights of degree " << p.degree << ", eps " << p.eps << "\n";
  out << p.equations.size() << "\n" << p.blocks.size() << "\n";
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    out << (b ? " " : "") << (p.blocks[b].diagonal ? -p.blocks[b].size : p.blocks[b].size);
  }
  out << "\n";
  for (std::size_t k = 0; k < p.equations.size(); ++k) out << (k ? " " : "") << p.equations[k].rhs + 0.0;
  out << "\n";
  for (std::size_t k = 0; k < p.equations.size(); ++k) {
    for (const auto& e : p.equations[k].entries) {
      out << k + 1 << " " << e.block + 1 << " " << e.i + 1 << " " << e.j + 1 << " " << e.value << "\n";
    }
  }
  return out.str();
}

/// Sidecar describing blocks, monomial bases and where theta lives.
inline nlohmann::ordered_json sos_sidecar(const SosProgram& p) {
  nlohmann::ordered_json j;
  j["format"] = "monocert-sos";
  j["states"] = p.states;
  j["degree"] = p.degree;
  j["multiplier_degree"] = p.multiplier_degree;
  j["eps"] = p.eps;
  j["monomial_order"] = "graded-lex";
  j["equations"] = p.equations.size();
  nlohmann::ordered_json blocks = nlohmann::ordered_json::array();
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    nlohmann::ordered_json blk;
    blk["index"] = b + 1;
    blk["name"] = p.blocks[b].name;
    blk["size"] = p.blocks[b].size;
    blk["diagonal"] = p.blocks[b].diagonal;
    if (!p.blocks[b].diagonal) {
      nlohmann::ordered_json basis = nlohmann::ordered_json::array();
      for (const auto& m : p.blocks[b].basis) basis.push_back(detail::monomial_text(m, p.states));
      blk["basis"] = basis;
    }
    blocks.push_back(blk);
  }
  j["blocks"] = blocks;
  nlohmann::ordered_json vars;
  const int lpb = p.lp_block() + 1;
  for (std::size_t i = 0; i < p.theta.size(); ++i) {
    for (std::size_t k = 0; k < p.theta[i].size(); ++k) {
      const std::string base = "theta_" + std::to_string(i + 1) + "_" + std::to_string(k);
      vars[base + "+"] = {lpb, p.theta[i][k].first + 1, p.theta[i][k].first + 1};
      vars[base + "-"] = {lpb, p.theta[i][k].second + 1, p.theta[i][k].second + 1};
    }
  }
  j["variables"] = vars;
  j["warnings"] = p.warnings;
  return j;
}

/// Writes `path` (.dat-s) and `path`.json; returns the program.
inline SosProgram export_sos_sdpa(const SystemDef& sys, int degree, double eps, const std::string& path,
                                  int multiplier_degree = 0) {
  SosProgram p = build_sos_program(sys, degree, eps, multiplier_degree);
  std::ofstream dat(path);
  if (!dat) throw Error("cannot write " + path);
  dat << to_sdpa(p);
  std::ofstream side(path + ".json");
  if (!side) throw Error("cannot write " + path + ".json");
  side << sos_sidecar(p).dump(2) << "\n";
  return p;
}

namespace detail {

/// Nested brace lists of numbers, e.g. "{ {1,2},{2,3} }".
struct BraceNode {
  std::vector<double> numbers;
  std::vector<BraceNode> children;
};

class BraceReader {
 public:
  BraceReader(const std::string& text, std::size_t pos) : s_(text), pos_(pos) {}

  BraceNode read() {
    skip();
    expect('{');
    BraceNode node;
    for (;;) {
      skip();
      if (pos_ >= s_.size()) throw InvalidArgument("solver output ends inside a matrix");
      const char c = s_[pos_];
      if (c == '}') {
        ++pos_;
        return node;
      }
      if (c == ',') {
        ++pos_;
        continue;
      }
      if (c == '{') {
        node.children.push_back(read());
        continue;
      }
      node.numbers.push_back(number());
    }
  }

 private:
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  void expect(char c) {
    if (pos_ >= s_.size() || s_[pos_] != c) throw InvalidArgument(std::string("solver output: expected '") + c + "'");
    ++pos_;
  }

  double number() {
    const char* begin = s_.c_str() + pos_;
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin) throw InvalidArgument("solver output: unexpected character '" + std::string(1, s_[pos_]) + "'");
    pos_ += static_cast<std::size_t>(end - begin);
    return v;
  }

  const std::string& s_;
  std::size_t pos_;
};

}  // namespace detail

/// Reads theta back from SDPA result text (the yMat section).  With `box`
/// set, the weights must be positive there or WeightError is thrown.
inline WeightFamily parse_sos_solution(const nlohmann::json& sidecar, const std::string& output,
                                       const std::optional<std::vector<Interval>>& box = std::nullopt) {
  if (!sidecar.is_object() || sidecar.value("format", "") != "monocert-sos") {
    throw InvalidArgument("sidecar is not a monocert-sos description");
  }
  const auto& blocks = sidecar.at("blocks");
  const std::size_t at = output.find("yMat");
  if (at == std::string::npos) throw InvalidArgument("solver output has no yMat section");
  const std::size_t open = output.find('{', at);
  if (open == std::string::npos) throw InvalidArgument("solver output: yMat has no data");
  const detail::BraceNode y = detail::BraceReader(output, open).read();
  if (y.children.size() != blocks.size()) {
    throw InvalidArgument("solver output has " + std::to_string(y.children.size()) + " blocks, expected " +
                          std::to_string(blocks.size()));
  }
  const std::size_t lp = blocks.size() - 1;
  const auto& diag = y.children[lp];
  const auto lp_size = blocks[lp].at("size").get<std::size_t>();
  std::vector<double> values = diag.numbers;
  if (values.empty() && diag.children.size() == lp_size) {
    // Diagonal block printed as a full matrix.
    for (std::size_t i = 0; i < lp_size; ++i) {
      if (diag.children[i].numbers.size() != lp_size) throw InvalidArgument("solver output: malformed linear block");
      values.push_back(diag.children[i].numbers[i]);
    }
  }
  if (values.size() != lp_size) throw InvalidArgument("solver output: linear block has the wrong size");
  const auto& vars = sidecar.at("variables");
  const auto n = sidecar.at("states").size();
  const int degree = sidecar.at("degree").get<int>();
  std::vector<ScalarWeight> ws;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> c;
    for (int k = 0; k <= degree; ++k) {
      const std::string base = "theta_" + std::to_string(i + 1) + "_" + std::to_string(k);
      const auto plus = vars.at(base + "+").at(1).get<std::size_t>() - 1;
      const auto minus = vars.at(base + "-").at(1).get<std::size_t>() - 1;
      if (plus >= values.size() || minus >= values.size()) throw InvalidArgument("sidecar index out of range");
      c.push_back(values[plus] - values[minus]);
    }
    while (c.size() > 1 && c.back() == 0.0) c.pop_back();
    ws.push_back(ScalarWeight::polynomial(c));
  }
  WeightFamily w(WeightKind::kTheta, std::move(ws));
  if (box) w.check_on_box(*box);
  return w;
}

}  // namespace monocert
