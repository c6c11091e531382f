#pragma once

#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "monocert/error.hpp"
#include "monocert/expr.hpp"
#include "monocert/system.hpp"

namespace monocert {

namespace detail {

struct Token {
  enum Kind { kIdent, kNumber, kSymbol, kEnd } kind;
  std::string text;
  double number = 0.0;
  int line = 1;
  int column = 1;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip_space();
      Token tok;
      tok.line = line_;
      tok.column = col_;
      if (pos_ >= src_.size()) {
        tok.kind = Token::kEnd;
        out.push_back(tok);
        return out;
      }
      const char c = src_[pos_];
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        tok.kind = Token::kIdent;
        while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
                                      src_[pos_] == '_' || src_[pos_] == '\'')) {
          tok.text += advance();
        }
      } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        tok.kind = Token::kNumber;
        lex_number(tok);
      } else if (std::string_view("{}()[],;=+-*/^").find(c) != std::string_view::npos) {
        tok.kind = Token::kSymbol;
        tok.text = std::string(1, advance());
      } else {
        throw ParseError(std::string("unexpected character '") + c + "'", line_, col_);
      }
      out.push_back(tok);
    }
  }

 private:
  char advance() {
    const char c = src_[pos_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return c;
  }

  void skip_space() {
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  void lex_number(Token& tok) {
    const int line = line_;
    const int col = col_;
    auto digits = [&] {
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        tok.text += advance();
      }
    };
    digits();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      tok.text += advance();
      digits();
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      const std::size_t save = pos_;
      std::string exp_text(1, src_[pos_]);
      std::size_t p = pos_ + 1;
      if (p < src_.size() && (src_[p] == '+' || src_[p] == '-')) exp_text += src_[p++];
      if (p < src_.size() && std::isdigit(static_cast<unsigned char>(src_[p]))) {
        while (pos_ < p) advance();
        tok.text += exp_text;
        digits();
      } else {
        pos_ = save;
      }
    }
    if (tok.text == ".") throw ParseError("malformed number", line, col);
    try {
      std::size_t used = 0;
      tok.number = std::stod(tok.text, &used);
      if (used != tok.text.size()) throw ParseError("malformed number '" + tok.text + "'", line, col);
    } catch (const std::out_of_range&) {
      throw ParseError("number out of range '" + tok.text + "'", line, col);
    } catch (const std::invalid_argument&) {
      throw ParseError("malformed number '" + tok.text + "'", line, col);
    }
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

inline bool is_reserved(const std::string& s) {
  static const char* const kWords[] = {"t",   "pi",     "inf",   "min",         "max",
                                       "exp", "sin",    "cos",   "system",      "states",
                                       "in",  "period", "box",   "equilibrium"};
  for (const char* w : kWords) {
    if (s == w) return true;
  }
  return false;
}

class Parser {
 public:
  explicit Parser(std::string_view text) : toks_(Lexer(text).run()) {}

  SystemDef parse() {
    SystemDef sys;
    expect_word("system");
    const Token name = expect(Token::kIdent, "system name");
    sys.name = name.text;
    expect_symbol("{");
    std::vector<std::optional<Expr>> eqs;
    bool have_states = false;
    for (;;) {
      if (accept_symbol(";")) continue;
      if (accept_symbol("}")) break;
      const Token& tok = peek();
      if (tok.kind != Token::kIdent) fail(tok, "expected a statement, found '" + describe(tok) + "'");
      if (tok.text == "states") {
        if (have_states) fail(tok, "states declared twice");
        next();
        parse_states(sys);
        have_states = true;
        eqs.assign(sys.dim(), std::nullopt);
      } else if (tok.text == "equilibrium") {
        next();
        if (sys.equilibrium) fail(tok, "equilibrium declared twice");
        equilibrium_tok_ = tok;
        sys.equilibrium = parse_point();
      } else if (tok.text == "period") {
        next();
        if (sys.period) fail(tok, "period declared twice");
        period_tok_ = tok;
        sys.period = constant_expr();
      } else if (tok.text == "box") {
        next();
        if (sys.box) fail(tok, "box declared twice");
        box_tok_ = tok;
        std::vector<Interval> box;
        do {
          box.push_back(parse_interval());
        } while (accept_symbol(","));
        sys.box = box;
      } else {
        if (!have_states) fail(tok, "states must be declared before equations");
        parse_equation(sys, eqs);
      }
    }
    if (peek().kind != Token::kEnd) fail(peek(), "unexpected text after closing brace");
    if (!have_states) fail(name, "system declares no states");
    for (std::size_t i = 0; i < eqs.size(); ++i) {
      if (!eqs[i]) fail(name, "missing equation d" + sys.states[i]);
      sys.f.push_back(*eqs[i]);
    }
    check(sys);
    return sys;
  }

 private:
  const Token& peek() const { return toks_[pos_]; }
  const Token& next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

  [[noreturn]] static void fail(const Token& tok, const std::string& msg) {
    throw ParseError(msg, tok.line, tok.column);
  }

  static std::string describe(const Token& tok) {
    return tok.kind == Token::kEnd ? "end of input" : tok.text;
  }

  bool accept_symbol(const char* s) {
    if (peek().kind == Token::kSymbol && peek().text == s) {
      next();
      return true;
    }
    return false;
  }

  void expect_symbol(const char* s) {
    if (!accept_symbol(s)) fail(peek(), std::string("expected '") + s + "', found '" + describe(peek()) + "'");
  }

  void expect_word(const char* w) {
    if (peek().kind != Token::kIdent || peek().text != w) {
      fail(peek(), std::string("expected '") + w + "', found '" + describe(peek()) + "'");
    }
    next();
  }

  Token expect(Token::Kind kind, const char* what) {
    if (peek().kind != kind) fail(peek(), std::string("expected ") + what + ", found '" + describe(peek()) + "'");
    return next();
  }

  void parse_states(SystemDef& sys) {
    do {
      const Token name = expect(Token::kIdent, "state name");
      if (is_reserved(name.text)) fail(name, "'" + name.text + "' is reserved");
      for (const auto& s : sys.states) {
        if (s == name.text) fail(name, "state " + name.text + " declared twice");
      }
      expect_word("in");
      sys.states.push_back(name.text);
      sys.bounds.push_back(parse_interval());
    } while (accept_symbol(","));
  }

  Interval parse_interval() {
    Interval iv;
    const Token open = peek();
    if (accept_symbol("[")) {
      iv.lo_closed = true;
    } else if (!accept_symbol("(")) {
      fail(open, "expected '[' or '(' to open an interval");
    }
    iv.lo = bound_value();
    expect_symbol(",");
    iv.hi = bound_value();
    const Token close = peek();
    if (accept_symbol("]")) {
      iv.hi_closed = true;
    } else if (!accept_symbol(")")) {
      fail(close, "expected ']' or ')' to close an interval");
    }
    if (std::isinf(iv.lo)) {
      if (iv.lo > 0) fail(open, "lower bound cannot be +inf");
      iv.lo_closed = false;
    }
    if (std::isinf(iv.hi)) {
      if (iv.hi < 0) fail(close, "upper bound cannot be -inf");
      iv.hi_closed = false;
    }
    if (!(iv.lo < iv.hi)) fail(open, "empty interval");
    return iv;
  }

  double bound_value() {
    const std::size_t save = pos_;
    const bool minus = accept_symbol("-");
    if (peek().kind == Token::kIdent && peek().text == "inf") {
      next();
      return minus ? -kInf : kInf;
    }
    pos_ = save;
    return constant_expr();
  }

  std::vector<double> parse_point() {
    std::vector<double> pt;
    expect_symbol("(");
    do {
      pt.push_back(constant_expr());
    } while (accept_symbol(","));
    expect_symbol(")");
    return pt;
  }

  double constant_expr() {
    const Token start = peek();
    const Expr e = expr(nullptr);
    if (!e.is_constant()) fail(start, "expected a constant expression");
    return e.value();
  }

  void parse_equation(SystemDef& sys, std::vector<std::optional<Expr>>& eqs) {
    const Token lhs = next();
    std::size_t idx = sys.dim();
    if (lhs.text.size() > 1 && lhs.text[0] == 'd') {
      const std::string state = lhs.text.substr(1);
      for (std::size_t i = 0; i < sys.dim(); ++i) {
        if (sys.states[i] == state) idx = i;
      }
    }
    if (idx == sys.dim()) {
      if (peek().kind == Token::kSymbol && peek().text == "=") {
        fail(lhs, "'" + lhs.text + "' is not the derivative of a declared state");
      }
      fail(lhs, "unknown statement '" + lhs.text + "'");
    }
    expect_symbol("=");
    if (eqs[idx]) fail(lhs, "second equation for " + sys.states[idx]);
    eqs[idx] = expr(&sys.states);
  }

  // expr := term (('+'|'-') term)*
  Expr expr(const std::vector<std::string>* states) {
    Expr lhs = term(states);
    for (;;) {
      if (accept_symbol("+")) {
        lhs = add(lhs, term(states));
      } else if (accept_symbol("-")) {
        lhs = sub(lhs, term(states));
      } else {
        return lhs;
      }
    }
  }

  // term := unary (('*'|'/') unary)*
  Expr term(const std::vector<std::string>* states) {
    Expr lhs = unary(states);
    for (;;) {
      if (accept_symbol("*")) {
        lhs = mul(lhs, unary(states));
      } else if (peek().kind == Token::kSymbol && peek().text == "/") {
        const Token slash = next();
        const Expr rhs = unary(states);
        if (rhs.is_constant(0.0)) fail(slash, "division by constant zero");
        lhs = div(lhs, rhs);
      } else {
        return lhs;
      }
    }
  }

  // unary := '-' unary | power
  Expr unary(const std::vector<std::string>* states) {
    if (accept_symbol("-")) return neg(unary(states));
    return power(states);
  }

  // power := primary ('^' primary)?   with a nonnegative integer exponent
  Expr power(const std::vector<std::string>* states) {
    Expr base = primary(states);
    if (peek().kind == Token::kSymbol && peek().text == "^") {
      next();
      const Token at = peek();
      if (at.kind == Token::kSymbol && at.text == "-") fail(at, "exponent must be a nonnegative integer");
      const Expr ex = primary(states);
      if (!ex.is_constant() || ex.value() < 0 || ex.value() != std::floor(ex.value()) ||
          ex.value() > 1e6) {
        fail(at, "exponent must be a nonnegative integer");
      }
      base = pow(base, static_cast<int>(ex.value()));
      if (peek().kind == Token::kSymbol && peek().text == "^") fail(peek(), "chained '^' needs parentheses");
    }
    return base;
  }

  Expr primary(const std::vector<std::string>* states) {
    const Token tok = next();
    if (tok.kind == Token::kNumber) return Expr::constant(tok.number);
    if (tok.kind == Token::kSymbol && tok.text == "(") {
      Expr e = expr(states);
      expect_symbol(")");
      return e;
    }
    if (tok.kind != Token::kIdent) fail(tok, "expected an expression, found '" + describe(tok) + "'");
    const std::string& id = tok.text;
    if (id == "min" || id == "max") {
      expect_symbol("(");
      const Expr a = expr(states);
      expect_symbol(",");
      const Expr b = expr(states);
      expect_symbol(")");
      return id == "min" ? min(a, b) : max(a, b);
    }
    if (id == "exp" || id == "sin" || id == "cos") {
      expect_symbol("(");
      const Expr a = expr(states);
      expect_symbol(")");
      try {
        if (id == "exp") return exp(a);
        if (id == "sin") return sin(a);
        return cos(a);
      } catch (const EvalError&) {
        fail(tok, "constant overflows");
      }
    }
    if (id == "pi") return Expr::constant(std::numbers::pi);
    if (id == "t") {
      if (!states) fail(tok, "'t' is not allowed in a constant");
      return Expr::time();
    }
    if (states) {
      for (std::size_t i = 0; i < states->size(); ++i) {
        if ((*states)[i] == id) return Expr::variable(static_cast<int>(i));
      }
    }
    fail(tok, "unknown identifier '" + id + "'");
  }

  void check(const SystemDef& sys) {
    const std::size_t n = sys.dim();
    if (sys.equilibrium) {
      const Token& at = equilibrium_tok_;
      if (sys.equilibrium->size() != n) {
        fail(at, "equilibrium has " + std::to_string(sys.equilibrium->size()) + " coordinates, expected " +
                     std::to_string(n));
      }
      for (std::size_t i = 0; i < n; ++i) {
        if (!sys.bounds[i].contains((*sys.equilibrium)[i])) {
          fail(at, "equilibrium outside the domain along " + sys.states[i]);
        }
      }
    }
    if (sys.period && !sys.time_varying()) fail(period_tok_, "period declared but f does not depend on t");
    if (sys.box && sys.box->size() != n) fail(box_tok_, "box has wrong dimension");
    try {
      validate(sys);
    } catch (const EvalError& e) {
      fail(equilibrium_tok_, std::string("cannot evaluate f at the equilibrium: ") + e.what());
    } catch (const InvalidArgument& e) {
      const std::string msg = e.what();
      const Token& at = msg.find("box") != std::string::npos ? box_tok_ : equilibrium_tok_;
      fail(at, msg);
    }
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  Token equilibrium_tok_{};
  Token period_tok_{};
  Token box_tok_{};
};

}  // namespace detail

/// Parses system-file text.  Throws ParseError with the offending line and column.
inline SystemDef parse_system(std::string_view text) { return detail::Parser(text).parse(); }

/// Reads and parses a system file; errors carry the path.
inline SystemDef load_system(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_system(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(e.message(), e.line(), e.column(), path);
  }
}

}  // namespace monocert
