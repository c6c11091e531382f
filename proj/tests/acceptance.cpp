// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "monocert/certify.hpp"
#include "monocert/lyap.hpp"
#include "monocert/parser.hpp"
#include "monocert/sim.hpp"
#include "monocert/synth.hpp"
#include "oracles.hpp"

namespace {

using namespace monocert;

// Tolerances.
constexpr double kExactTol = 1e-12;
constexpr double kStep = 1e-9;
constexpr double kTerminal = 1e-6;
constexpr double kRatioSlack = 1e-6;
constexpr double kSpread = 1e-4;
constexpr double kIncrementFloor = 1e-12;
constexpr double kOrderTol = 1e-9;
constexpr double kMetricTol = 1e-10;
constexpr double kMarginal = 1e-6;

SystemDef corpus(const std::string& name) {
  return load_system(std::string(MONOCERT_SOURCE_DIR) + "/systems/" + name);
}

WeightFamily corpus_weights(const std::string& name) {
  std::ifstream in(std::string(MONOCERT_SOURCE_DIR) + "/systems/" + name);
  return weights_from_json(nlohmann::json::parse(in));
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream o;
  o.precision(3);
  o << v;
  return o.str();
}

std::vector<std::vector<double>> random_points(const std::vector<Interval>& box, std::size_t count,
                                               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<double>> out;
  for (std::size_t k = 0; k < count; ++k) {
    std::vector<double> x;
    for (const auto& a : box) x.push_back(std::uniform_real_distribution<double>(a.lo, a.hi)(rng));
    out.push_back(std::move(x));
  }
  return out;
}

Outcome golden_example_one() {
  const auto t0 = std::chrono::steady_clock::now();
  const SystemDef sys = corpus("ex1.sys");
  const WorkingBox box = make_box(sys, {Interval::closed(0, 3), Interval::closed(0, 3)}, 41);
  const WeightFamily theta = corpus_weights("ex1.theta.json");
  const WeightFamily omega = corpus_weights("ex1.omega.json");
  double col_err = 0.0;
  double row_max = -kInf;
  for (std::size_t k = 0; k < box.point_count(); ++k) {
    const auto x = box.point(k);
    for (const auto& c : condition_vectors(sys, theta, Side::kColumn, x)) {
      col_err = std::max({col_err, std::abs(c(0) + 1.0), std::abs(c(1) + 1.0)});
    }
    for (const auto& c : condition_vectors(sys, omega, Side::kRow, x)) row_max = std::max({row_max, c(0), c(1)});
  }
  const auto at_eq = condition_vectors(sys, omega, Side::kRow, *sys.equilibrium);
  const double eq_err = std::max(std::abs(at_eq[0](0) + 2.0), std::abs(at_eq[0](1) + 1.0));
  const double secs = seconds_since(t0);
  return {col_err <= kExactTol && row_max <= 0.0 && eq_err <= kExactTol && secs < 1.0,
          "column deviation " + fmt(col_err) + ", row max " + fmt(row_max) + ", equilibrium deviation " +
              fmt(eq_err) + ", " + fmt(secs) + " s"};
}

Outcome reference_sos_weights() {
  const SystemDef sys = corpus("ex1.sys");
  const WorkingBox box = make_box(sys, {Interval::closed(0, 3), Interval::closed(0, 3)}, 41);
  const auto t0 = std::chrono::steady_clock::now();
  const CertReport r = check_sum_weights(sys, corpus_weights("ex1.sos.theta.json"), box, 0.01);
  const double secs = seconds_since(t0);
  const SynthResult own = synth_poly(sys, box, 2, SynthMode::kSum);
  const bool own_ok = own.ok && own.report && own.report->passed();
  return {r.passed() && secs < 1.0 && own_ok, "reference weights " + std::string(to_string(r.verdict)) +
                                                  " (worst " + fmt(r.worst_margin) + ", " + fmt(secs) +
                                                  " s), own degree-2 synthesis " + (own_ok ? "certified" : "failed")};
}

SystemDef linear_system(const oracle::Mat& A) {
  const std::size_t n = A.size();
  std::string text = "system m { states ";
  for (std::size_t i = 0; i < n; ++i) text += (i ? ", x" : "x") + std::to_string(i + 1) + " in (-inf, inf)";
  for (std::size_t i = 0; i < n; ++i) {
    text += " dx" + std::to_string(i + 1) + " = 0";
    for (std::size_t j = 0; j < n; ++j) text += " + (" + format_number(A[i][j]) + ")*x" + std::to_string(j + 1);
  }
  text += " equilibrium (";
  for (std::size_t i = 0; i < n; ++i) text += i ? ", 0" : "0";
  text += ") box ";
  for (std::size_t i = 0; i < n; ++i) text += i ? ", [-1, 1]" : "[-1, 1]";
  return parse_system(text + " }");
}

Outcome lp_matches_hurwitz() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  int disagreements = 0, skipped = 0, hurwitz = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const oracle::Mat A = oracle::random_metzler(4, rng);
    const double lambda = oracle::max_real_eigenvalue(A);
    if (std::abs(lambda) < kMarginal) {
      ++skipped;
      continue;
    }
    const SystemDef sys = linear_system(A);
    const SynthResult r = synth_const(sys, make_box(sys, 3), SynthMode::kSum);
    const bool feasible = r.ok && r.margin > 0.0;
    hurwitz += lambda < 0.0;
    if (feasible != (lambda < 0.0)) ++disagreements;
  }
  const double secs = seconds_since(t0);
  return {disagreements == 0 && secs < 10.0, std::to_string(disagreements) + " disagreements, " +
                                                 std::to_string(hurwitz) + " Hurwitz, " + std::to_string(skipped) +
                                                 " skipped, " + fmt(secs) + " s"};
}

Outcome lyapunov_decrease() {
  struct Case {
    const char* sys;
    const char* weights;
    LyapVariant variant;
    double horizon;
  };
  const Case cases[] = {
      {"ex1.sys", "ex1.theta.json", LyapVariant::kStateSum, 25},
      {"ex1.sys", "ex1.theta.json", LyapVariant::kFlowSum, 25},
      {"ex1.sys", "ex1.omega.json", LyapVariant::kStateMax, 25},
      {"ex1.sys", "ex1.omega.json", LyapVariant::kFlowMax, 25},
      {"traffic.sys", "traffic.theta.json", LyapVariant::kStateSum, 30},
      {"traffic.sys", "traffic.theta.json", LyapVariant::kFlowSum, 30},
      {"multiagent.sys", "multiagent.omega.json", LyapVariant::kStateMax, 120},
      {"multiagent.sys", "multiagent.omega.json", LyapVariant::kFlowMax, 120},
      {"multiagent.sys", "multiagent.unit.omega.json", LyapVariant::kStateMax, 120},
      {"multiagent.sys", "multiagent.unit.omega.json", LyapVariant::kFlowMax, 120},
  };
  const auto t0 = std::chrono::steady_clock::now();
  DecreaseOptions opt;
  opt.tol = kStep;
  opt.converge_ratio = kTerminal;
  int failures = 0, runs = 0;
  std::uint64_t seed = 100;
  for (const auto& c : cases) {
    const SystemDef sys = corpus(c.sys);
    const LyapFn v = build_lyapunov(sys, corpus_weights(c.weights), c.variant);
    const auto starts = random_points(make_box(sys, 2).axes, 20, seed++);
    std::vector<int> ok(starts.size(), 0);
    parallel_for(starts.size(), [&](std::size_t k) {
      ok[k] = verify_decrease(v, integrate(sys, starts[k], c.horizon), opt).passed;
    });
    for (int e : ok) failures += !e;
    runs += static_cast<int>(starts.size());
  }
  const double secs = seconds_since(t0);
  return {failures == 0 && secs < 30.0,
          std::to_string(runs - failures) + "/" + std::to_string(runs) + " trajectories pass, " + fmt(secs) + " s"};
}

Outcome contraction_bound() {
  const auto t0 = std::chrono::steady_clock::now();
  const SystemDef sys = corpus("linear_sym.sys");
  const WeightFamily unit = WeightFamily::constant(WeightKind::kTheta, {1, 1});
  const auto starts = random_points(make_box(sys, 2).axes, 20, 7);
  double worst = 0.0;
  for (std::size_t p = 0; p < 10; ++p) {
    const Trajectory a = integrate(sys, starts[2 * p], 5.0);
    const Trajectory b = integrate(sys, starts[2 * p + 1], 5.0);
    const double d0 = weighted_distance(unit, a.x[0], b.x[0], Norm::kL1);
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double d = weighted_distance(unit, a.x[k], b.x[k], Norm::kL1);
      worst = std::max(worst, d / (d0 * std::exp(-a.t[k])));
    }
  }
  const double certified = -check_measure(sys, unit, Norm::kL1, make_box(sys)).worst_margin;
  const double secs = seconds_since(t0);
  return {worst <= 1.0 + kRatioSlack && std::abs(certified - 1.0) <= kExactTol && secs < 5.0,
          "max d(t)/(e^-t d(0)) = " + fmt(worst) + ", certified rate " + fmt(certified) + ", " + fmt(secs) + " s"};
}

Outcome entrainment() {
  const auto t0 = std::chrono::steady_clock::now();
  const SystemDef sys = corpus("cubic_forced.sys");
  EntrainmentOptions opt;
  opt.periods = 40;
  const EntrainmentReport r = entrainment_test(sys, {{-2.0}, {0.0}, {2.0}}, opt);
  // Increments below the floor are rounding noise around the periodic orbit.
  bool monotone = true;
  for (std::size_t k = 20; k < r.increments.size(); ++k) {
    if (r.increments[k] > r.increments[k - 1] && r.increments[k] > kIncrementFloor) monotone = false;
  }
  const double secs = seconds_since(t0);
  return {r.final_spread < kSpread && monotone && r.passed() && secs < 5.0,
          "final spread " + fmt(r.final_spread) + ", last increment " + fmt(r.increments.back()) + ", " +
              (monotone ? "monotone" : "not monotone") + ", " + fmt(secs) + " s"};
}

Outcome order_preservation() {
  int violations = 0, pairs = 0;
  for (const char* name : {"ex1.sys", "multiagent.sys", "traffic.sys"}) {
    const SystemDef sys = corpus(name);
    const auto axes = make_box(sys, 2).axes;
    std::mt19937_64 rng(99);
    for (int p = 0; p < 20; ++p, ++pairs) {
      std::vector<double> x, y;
      for (const auto& a : axes) {
        std::uniform_real_distribution<double> u(a.lo, a.hi);
        const double s = u(rng), t = u(rng);
        x.push_back(std::min(s, t));
        y.push_back(std::max(s, t));
      }
      const Trajectory a = integrate(sys, x, 10.0);
      const Trajectory b = integrate(sys, y, 10.0);
      bool ok = !a.aborted && !b.aborted && a.size() == b.size();
      for (std::size_t k = 0; ok && k < a.size(); ++k) {
        for (std::size_t i = 0; i < sys.dim(); ++i) ok = ok && a.x[k][i] <= b.x[k][i] + kOrderTol;
      }
      violations += !ok;
    }
  }
  return {violations == 0, std::to_string(pairs - violations) + "/" + std::to_string(pairs) + " ordered pairs kept"};
}

Outcome metric_properties() {
  const WeightFamily fams[] = {corpus_weights("ex1.theta.json"), corpus_weights("ex1.omega.json"),
                               corpus_weights("ex1.sos.theta.json")};
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  int failures = 0, checks = 0;
  for (const auto& w : fams) {
    for (const Norm norm : {Norm::kL1, Norm::kLinf}) {
      for (int k = 0; k < 200; ++k, ++checks) {
        const std::vector<double> x{u(rng), u(rng)}, y{u(rng), u(rng)}, z{u(rng), u(rng)};
        const double xy = weighted_distance(w, x, y, norm);
        const bool ok = std::abs(xy - weighted_distance(w, y, x, norm)) <= kMetricTol &&
                        weighted_distance(w, x, z, norm) <= xy + weighted_distance(w, y, z, norm) + kMetricTol &&
                        weighted_distance(w, x, x, norm) == 0.0 && (x == y || xy > 0.0);
        failures += !ok;
      }
    }
  }
  return {failures == 0, std::to_string(checks - failures) + "/" + std::to_string(checks) + " triples"};
}

std::string run_cli(const std::string& args, const std::string& report, const std::string& env = "") {
  const std::string cmd = env + " '" + std::string(MONOCERT_CLI) + "' " + args + " --report '" + report + "' >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) return {};
  std::ifstream in(report, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("monocert_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const std::string sys = std::string(MONOCERT_SOURCE_DIR) + "/systems/";
  const std::string cmds[] = {
      "certify " + sys + "ex1.sys --theta " + sys + "ex1.sos.theta.json --omega " + sys + "ex1.omega.json --seed 5",
      "synth " + sys + "ex1.sys --mode poly-sum --degree 2 --seed 5",
      "synth " + sys + "multiagent.sys --mode const-max --seed 5",
  };
  int same = 0, total = 0;
  for (const auto& c : cmds) {
    const std::string a = run_cli(c, (dir / "a.json").string());
    const std::string b = run_cli(c, (dir / "b.json").string(), "MONOCERT_THREADS=1");
    ++total;
    same += !a.empty() && a == b;
  }
  fs::remove_all(dir);
  return {same == total, std::to_string(same) + "/" + std::to_string(total) + " reports byte-identical"};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"golden certification of the first example", golden_example_one},
      {"reference degree-2 weights certify", reference_sos_weights},
      {"LP feasibility matches the Hurwitz oracle", lp_matches_hurwitz},
      {"Lyapunov decrease along simulated trajectories", lyapunov_decrease},
      {"contraction-rate bound", contraction_bound},
      {"entrainment of the forced cubic", entrainment},
      {"order preservation", order_preservation},
      {"weighted metric properties", metric_properties},
      {"deterministic reports", determinism},
  };
  int failed = 0;
  int index = 1;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "criterion " << index++ << ": " << (o.pass ? "PASS" : "FAIL") << "  " << name << " (" << o.detail
              << ")\n";
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
