#include <cstdlib>
#include <fstream>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "monocert/certify.hpp"
#include "monocert/parser.hpp"

namespace monocert {
namespace {

SystemDef corpus(const std::string& name) {
  return load_system(std::string(MONOCERT_SOURCE_DIR) + "/systems/" + name);
}

WeightFamily corpus_weights(const std::string& name) {
  std::ifstream in(std::string(MONOCERT_SOURCE_DIR) + "/systems/" + name);
  return weights_from_json(nlohmann::json::parse(in));
}

GTEST_TEST(CertifyTest, BoxGrid) {
  const SystemDef sys = corpus("ex1.sys");
  const WorkingBox box = make_box(sys);
  EXPECT_EQ(box.point_count(), 41u * 41u);
  EXPECT_EQ(box.point(0), (std::vector<double>{0, 0}));
  EXPECT_EQ(box.point(1), (std::vector<double>{0, 0.075}));
  EXPECT_EQ(box.point(41), (std::vector<double>{0.075, 0}));
  EXPECT_EQ(box.point(41 * 41 - 1), (std::vector<double>{3, 3}));
  const WorkingBox fine = box.refined();
  EXPECT_EQ(fine.resolution, (std::vector<int>{81, 81}));
  // Every coarse point is a fine point.
  for (std::size_t i = 0; i < 41; ++i) EXPECT_EQ(fine.point(2 * i)[1], box.point(i)[1]);

  EXPECT_EQ(parse_box("0:3,-1.5:2e0").size(), 2u);
  EXPECT_THROW(parse_box("0:3,1"), InvalidArgument);
  EXPECT_THROW(parse_box("0:x"), InvalidArgument);
  EXPECT_THROW(make_box(sys, parse_box("0:3")), InvalidArgument);
  EXPECT_THROW(make_box(sys, parse_box("-1:3,0:3")), InvalidArgument);
  EXPECT_THROW(make_box(sys, parse_box("1:3,0:3")), InvalidArgument);  // misses x*
  EXPECT_THROW(make_box(sys, parse_box("3:3,0:3")), InvalidArgument);
  EXPECT_THROW(make_box(parse_system("system s { states x in [0, inf) dx = -x }")), InvalidArgument);
  EXPECT_EQ(make_box(corpus("rotation.sys"), 5).point_count(), 25u);
}

GTEST_TEST(CertifyTest, ExampleOneThetaConditionIsConstant) {
  const SystemDef sys = corpus("ex1.sys");
  const WeightFamily theta = corpus_weights("ex1.theta.json");
  const WorkingBox box = make_box(sys);
  for (std::size_t k = 0; k < box.point_count(); ++k) {
    const auto x = box.point(k);
    const auto c = condition_vectors(sys, theta, Side::kColumn, x);
    ASSERT_EQ(c.size(), 1u);
    EXPECT_NEAR(c[0](0), -1.0, 1e-12);
    EXPECT_NEAR(c[0](1), -1.0, 1e-12);
  }
  const CertReport r = check_sum_weights(sys, theta, box);
  EXPECT_EQ(r.verdict, Verdict::kPassWithMargin);
  EXPECT_NEAR(r.worst_margin, -1.0, 1e-12);
  EXPECT_NEAR(*r.equilibrium_margin, -1.0, 1e-12);
  EXPECT_EQ(r.points, 1681u);
  EXPECT_EQ(r.branch_ties, 0u);
  EXPECT_EQ(r.weight_bound->min, 1.0);
  EXPECT_EQ(r.weight_bound->max, 4.0);
}

GTEST_TEST(CertifyTest, ExampleOneUnitThetaFails) {
  const SystemDef sys = corpus("ex1.sys");
  const WeightFamily unit = WeightFamily::constant(WeightKind::kTheta, {1, 1});
  const WorkingBox box = make_box(sys);
  // Hand evaluation: theta^T J = (-1, 2 x2 - 1).
  for (double x2 : {0.0, 0.5, 1.2, 3.0}) {
    const std::vector<double> x{0.7, x2};
    const auto c = condition_vectors(sys, unit, Side::kColumn, x);
    EXPECT_DOUBLE_EQ(c[0](0), -1.0);
    EXPECT_DOUBLE_EQ(c[0](1), 2 * x2 - 1);
  }
  const CertReport r = check_sum_weights(sys, unit, box);
  EXPECT_EQ(r.verdict, Verdict::kFail);
  EXPECT_DOUBLE_EQ(r.worst_margin, 5.0);
  EXPECT_GT(r.witness[1], 0.5);
  // Ties on the margin go to the lowest grid index: x1 = 0.
  EXPECT_EQ(r.witness, (std::vector<double>{0, 3}));
}

GTEST_TEST(CertifyTest, ExampleOneOmega) {
  const SystemDef sys = corpus("ex1.sys");
  const WeightFamily omega = corpus_weights("ex1.omega.json");
  const WorkingBox box = make_box(sys);
  for (std::size_t k = 0; k < box.point_count(); k += 7) {
    const auto x = box.point(k);
    const double b = x[1];
    const auto c = condition_vectors(sys, omega, Side::kRow, x);
    // Hand evaluation of J omega - omega_dot.
    EXPECT_NEAR(c[0](0), -2 + 2 * b / (1 + b), 1e-12);
    EXPECT_NEAR(c[0](1), -1 / (1 + b) - b / ((1 + b) * (1 + b)), 1e-12);
    EXPECT_LE(c[0].maxCoeff(), 0.0);
  }
  const std::vector<double> xs{0, 0};
  const auto c0 = condition_vectors(sys, omega, Side::kRow, xs);
  EXPECT_EQ(c0[0](0), -2.0);
  EXPECT_EQ(c0[0](1), -1.0);
  const CertReport r = check_max_weights(sys, omega, box);
  EXPECT_TRUE(r.passed());
  EXPECT_EQ(*r.equilibrium_margin, -1.0);

  const WeightFamily unit = WeightFamily::constant(WeightKind::kOmega, {1, 1});
  const CertReport bad = check_max_weights(sys, unit, box);
  EXPECT_EQ(bad.verdict, Verdict::kFail);
  EXPECT_DOUBLE_EQ(bad.worst_margin, 5.0);  // row 1: -1 + 2 x2 at x2 = 3
}

GTEST_TEST(CertifyTest, SynthesizedQuadraticTheta) {
  const SystemDef sys = corpus("ex1.sys");
  const WeightFamily theta = corpus_weights("ex1.sos.theta.json");
  const WorkingBox box = make_box(sys);
  const CertReport r = check_sum_weights(sys, theta, box, 0.01);
  EXPECT_TRUE(r.passed());
  // Second component: -3 x2^2 + 0.7272 x2 - 1.9503 (with theta1 = 1.7429).
  for (double b : {0.0, 0.1, 1.0, 2.5}) {
    const auto c = condition_vectors(sys, theta, Side::kColumn, std::vector<double>{1.0, b});
    EXPECT_NEAR(c[0](1), -3 * b * b + (2 * 1.7429 - 1.3793 - 1.3793) * b - 1.9503, 1e-12);
    EXPECT_NEAR(c[0](0), -1.7429, 1e-12);
  }
}

GTEST_TEST(CertifyTest, Kamke) {
  EXPECT_EQ(check_kamke(corpus("ex1.sys"), make_box(corpus("ex1.sys"))).verdict, Verdict::kPass);
  const SystemDef rot = corpus("rotation.sys");
  const CertReport r = check_kamke(rot, make_box(rot));
  EXPECT_EQ(r.verdict, Verdict::kFail);
  EXPECT_EQ(r.worst_margin, 1.0);
  EXPECT_EQ(r.witness, (std::vector<double>{-1, -1}));
  const SystemDef scalar = corpus("scalar_decay.sys");
  EXPECT_EQ(check_kamke(scalar, make_box(scalar)).verdict, Verdict::kPass);
  const SystemDef traffic = corpus("traffic.sys");
  const CertReport t = check_kamke(traffic, make_box(traffic, 11));
  EXPECT_EQ(t.verdict, Verdict::kPass);
  EXPECT_GT(t.branch_ties, 0u);
}

GTEST_TEST(CertifyTest, ConstantColumnWeights) {
  const SystemDef sym = corpus("linear_sym.sys");
  const CertReport a = check_sum_const(sym, {1, 1}, make_box(sym));
  EXPECT_EQ(a.verdict, Verdict::kPassWithMargin);
  EXPECT_EQ(a.worst_margin, -1.0);
  EXPECT_TRUE(check_sum_const(sym, {1, 1}, make_box(sym), 0.01, true).passed());

  const SystemDef upper = corpus("linear_upper.sys");
  const CertReport b = check_sum_const(upper, {1, 1}, make_box(upper));
  EXPECT_EQ(b.verdict, Verdict::kFail);
  EXPECT_EQ(b.worst_margin, 2.0);
  EXPECT_TRUE(check_sum_const(upper, {1, 4}, make_box(upper)).passed());

  const SystemDef cmp = corpus("comparison.sys");
  const CertReport c = check_sum_const(cmp, {1.9, 1}, make_box(cmp));
  EXPECT_TRUE(c.passed());
  EXPECT_LE(c.worst_margin, 0.0);
  EXPECT_LT(*c.equilibrium_margin, -0.01);

  EXPECT_THROW(check_sum_const(sym, {1, 0}, make_box(sym)), WeightError);
  EXPECT_THROW(check_sum_const(sym, {1, 1, 1}, make_box(sym)), InvalidArgument);
}

GTEST_TEST(CertifyTest, ConstantRowWeights) {
  const SystemDef ma = corpus("multiagent.sys");
  const WorkingBox box = make_box(ma, 9);
  const CertReport r = check_max_const(ma, {1, 1.5, 1.7}, box);
  EXPECT_TRUE(r.passed());
  EXPECT_NEAR(r.worst_margin, -0.2, 1e-12);  // J w = (-0.3, -0.3, -0.2)

  const CertReport u = check_max_const(ma, {1, 1, 1}, box);
  EXPECT_LE(u.worst_margin, kConditionTol);  // rows 2, 3 sum to zero
  EXPECT_EQ(u.verdict, Verdict::kFail);
  EXPECT_NEAR(*u.equilibrium_margin, 0.0, 1e-15);

  const SystemDef diag = corpus("linear_diag.sys");
  EXPECT_TRUE(check_max_const(diag, {1, 1}, make_box(diag)).passed());
}

GTEST_TEST(CertifyTest, TrafficPlainWeightsAreOnlyNonexpansive) {
  const SystemDef sys = corpus("traffic.sys");
  const WorkingBox box = make_box(sys, 11);
  const CertReport r = check_sum_const(sys, {1, 1.25, 1.5625, 1.953125}, box);
  EXPECT_LE(r.worst_margin, kConditionTol);
  EXPECT_NEAR(*r.equilibrium_margin, 0.0, 1e-12);
  EXPECT_EQ(r.verdict, Verdict::kFail);
}

GTEST_TEST(CertifyTest, Measure) {
  const SystemDef sys = corpus("ex1.sys");
  const WeightFamily theta = corpus_weights("ex1.theta.json");
  const CertReport r = check_measure(sys, theta, Norm::kL1, make_box(sys));
  EXPECT_TRUE(r.passed());
  EXPECT_DOUBLE_EQ(*r.equilibrium_margin, -1.0);
  // Column sums of J~ are -1 and -1/(1 + x2), so the worst is -1/4 at x2 = 3.
  EXPECT_NEAR(r.worst_margin, -0.25, 1e-12);

  const SystemDef scalar = corpus("scalar_decay.sys");
  const CertReport s = check_measure(scalar, WeightFamily::constant(WeightKind::kTheta, {1}), Norm::kL1,
                                     make_box(scalar));
  EXPECT_EQ(s.worst_margin, -1.0);
  EXPECT_EQ(*s.equilibrium_margin, -1.0);

  const SystemDef rot = corpus("rotation.sys");
  const CertReport f = check_measure(rot, WeightFamily::constant(WeightKind::kTheta, {1, 1}), Norm::kL1, make_box(rot));
  EXPECT_EQ(f.verdict, Verdict::kFail);
  EXPECT_EQ(f.worst_margin, 1.0);
}

GTEST_TEST(CertifyTest, CertifyAll) {
  const SystemDef sys = corpus("ex1.sys");
  CertifyInputs in;
  in.families = {corpus_weights("ex1.theta.json"), corpus_weights("ex1.omega.json")};
  const auto reports = certify_all(sys, make_box(sys), in);
  ASSERT_EQ(reports.size(), 5u);
  const std::vector<std::string> ids{"kamke", "sum_weights", "measure_l1", "max_weights", "measure_linf"};
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(reports[i].condition, ids[i]);
    EXPECT_TRUE(reports[i].passed()) << ids[i];
  }

  const SystemDef rot = corpus("rotation.sys");
  CertifyInputs rin;
  rin.families = {WeightFamily::constant(WeightKind::kTheta, {1, 1})};
  rin.v = std::vector<double>{1, 1};
  const auto rr = certify_all(rot, make_box(rot), rin);
  ASSERT_EQ(rr.size(), 4u);
  EXPECT_EQ(rr[0].verdict, Verdict::kFail);
  EXPECT_EQ(rr[3].condition, "sum_const");

  EXPECT_EQ(certify_all(rot, make_box(rot), {}).size(), 1u);
}

GTEST_TEST(CertifyTest, Errors) {
  const SystemDef sys = corpus("ex1.sys");
  const WorkingBox box = make_box(sys);
  const WeightFamily neg(WeightKind::kTheta, {ScalarWeight::constant(1), ScalarWeight::polynomial({1, -1})});
  EXPECT_THROW(check_sum_weights(sys, neg, box), WeightError);
  EXPECT_THROW(check_sum_weights(sys, corpus_weights("ex1.omega.json"), box), InvalidArgument);
  EXPECT_THROW(check_max_weights(sys, corpus_weights("ex1.theta.json"), box), InvalidArgument);

  SystemDef noeq = sys;
  noeq.equilibrium.reset();
  EXPECT_THROW(check_sum_weights(noeq, corpus_weights("ex1.theta.json"), box), InvalidArgument);

  const SystemDef bad = parse_system("system s { states x in [-1, 1] dx = 1/x box [-1, 1] }");
  try {
    check_kamke(bad, make_box(bad, 3));
    FAIL() << "expected EvalError";
  } catch (const EvalError& e) {
    EXPECT_NE(std::string(e.what()).find("x = (0)"), std::string::npos) << e.what();
  }
}

GTEST_TEST(CertifyTest, ConstantThetaMatchesConstantVector) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.2, 3.0);
  for (const char* name : {"ex1.sys", "linear_sym.sys", "linear_upper.sys", "comparison.sys"}) {
    const SystemDef sys = corpus(name);
    const WorkingBox box = make_box(sys, 21);
    for (int trial = 0; trial < 5; ++trial) {
      const std::vector<double> v{u(rng), u(rng)};
      const CertReport a = check_sum_weights(sys, WeightFamily::constant(WeightKind::kTheta, v), box);
      const CertReport b = check_sum_const(sys, v, box);
      EXPECT_EQ(a.verdict, b.verdict) << name;
      EXPECT_EQ(a.worst_margin, b.worst_margin);
      EXPECT_EQ(a.witness, b.witness);
    }
  }
}

GTEST_TEST(CertifyTest, ColumnConditionAgreesWithMeasureInSign) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.2, 3.0);
  for (const char* name : {"ex1.sys", "comparison.sys", "multiagent.sys", "linear_upper.sys"}) {
    const SystemDef sys = corpus(name);
    const Jacobian jac(sys);
    const WorkingBox box = make_box(sys, 9);
    std::vector<double> v(sys.dim());
    for (double& c : v) c = u(rng);
    const WeightFamily w = WeightFamily::constant(WeightKind::kTheta, v);
    const std::vector<double> zero(sys.dim(), 0.0);
    for (std::size_t k = 0; k < box.point_count(); ++k) {
      const auto x = box.point(k);
      const Matrix J = jac.evaluate(x).matrices.front();
      ASSERT_TRUE(is_metzler(J));
      const double col = column_condition(J, w, x, zero).maxCoeff();
      const double m = mu1(weighted_jacobian(J, w, x, zero));
      EXPECT_EQ(col > 1e-12, m > 1e-12) << name;
      EXPECT_EQ(col < -1e-12, m < -1e-12) << name;
    }
  }
}

GTEST_TEST(CertifyTest, RefinementNeverRescuesAFailure) {
  const SystemDef sys = corpus("ex1.sys");
  const WeightFamily unit = WeightFamily::constant(WeightKind::kTheta, {1, 1});
  const WeightFamily theta(WeightKind::kTheta, {ScalarWeight::constant(1), ScalarWeight::constant(5.9)});
  for (const WeightFamily& w : {unit, theta}) {
    const WorkingBox box = make_box(sys, 41);
    const CertReport coarse = check_sum_weights(sys, w, box);
    const CertReport fine = check_sum_weights(sys, w, box.refined());
    EXPECT_GE(fine.worst_margin, coarse.worst_margin);
    if (!coarse.passed()) {
      EXPECT_FALSE(fine.passed());
    }
  }
}

GTEST_TEST(CertifyTest, LinearVerdictsIgnoreResolution) {
  for (const char* name : {"linear_sym.sys", "linear_upper.sys", "linear_unstable.sys", "linear_diag.sys"}) {
    const SystemDef sys = corpus(name);
    for (const std::vector<double>& v : {std::vector<double>{1, 1}, std::vector<double>{1, 4}}) {
      const CertReport a = check_sum_const(sys, v, make_box(sys, 3));
      const CertReport b = check_sum_const(sys, v, make_box(sys, 41));
      EXPECT_EQ(a.verdict, b.verdict) << name;
      EXPECT_EQ(a.worst_margin, b.worst_margin) << name;
    }
  }
}

GTEST_TEST(CertifyTest, ReportsAreDeterministic) {
  const SystemDef sys = corpus("ex1.sys");
  CertifyInputs in;
  in.families = {corpus_weights("ex1.sos.theta.json"), corpus_weights("ex1.omega.json")};
  auto dump = [&] {
    std::string s;
    for (const auto& r : certify_all(sys, make_box(sys), in)) s += to_json(r).dump() + "\n";
    return s;
  };
  const std::string first = dump();
  EXPECT_EQ(dump(), first);
  setenv("MONOCERT_THREADS", "1", 1);
  EXPECT_EQ(dump(), first);
  setenv("MONOCERT_THREADS", "3", 1);
  EXPECT_EQ(dump(), first);
  unsetenv("MONOCERT_THREADS");

  const auto j = to_json(certify_all(sys, make_box(sys), in)[1]);
  EXPECT_EQ(j["condition"], "sum_weights");
  EXPECT_EQ(j["verdict"], "pass-with-margin");
  EXPECT_EQ(j["resolution"], nlohmann::ordered_json::array({41, 41}));
  EXPECT_TRUE(j.contains("branch_ties"));
  EXPECT_TRUE(j.contains("eps"));
}

}  // namespace
}  // namespace monocert
