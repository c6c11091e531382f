#include <vector>

#include <gtest/gtest.h>

#include "monocert/jacobian.hpp"
#include "monocert/parser.hpp"

namespace monocert {
namespace {

SystemDef corpus(const std::string& name) {
  return load_system(std::string(MONOCERT_SOURCE_DIR) + "/systems/" + name);
}

GTEST_TEST(JacobianTest, ExampleOneSymbolic) {
  const Jacobian jac(corpus("ex1.sys"));
  ASSERT_EQ(jac.branches().size(), 1u);
  const ExprMatrix& J = jac.smooth();
  const Expr x2 = Expr::variable(1);
  EXPECT_TRUE(J(0, 0).is_constant(-1.0));
  EXPECT_TRUE(structurally_equal(J(0, 1), 2.0 * x2)) << to_string(J(0, 1));
  EXPECT_TRUE(J(1, 0).is_constant(0.0));
  EXPECT_TRUE(J(1, 1).is_constant(-1.0));

  const std::vector<double> x{0.3, 1.0};
  const auto s = jac.evaluate(x);
  ASSERT_EQ(s.matrices.size(), 1u);
  EXPECT_FALSE(s.tie);
  Matrix want(2, 2);
  want << -1, 2, 0, -1;
  EXPECT_EQ(s.matrices[0], want);
}

GTEST_TEST(JacobianTest, LinearIsConstant) {
  const Jacobian jac(corpus("linear_upper.sys"));
  const ExprMatrix& J = jac.smooth();
  const std::vector<double> A{-1, 3, 0, -1};
  for (std::size_t k = 0; k < 4; ++k) EXPECT_TRUE(J.entries[k].is_constant(A[k]));
}

GTEST_TEST(JacobianTest, TrafficBranches) {
  const SystemDef sys = corpus("traffic.sys");
  const Jacobian jac(sys);
  EXPECT_EQ(jac.switch_count(), 4u);
  EXPECT_EQ(jac.branches().size(), 16u);
  EXPECT_THROW(jac.smooth(), BranchRequired);

  // Free flow at the equilibrium: every g_i follows demand 0.8 x_i.
  const auto s = jac.evaluate(*sys.equilibrium);
  ASSERT_EQ(s.matrices.size(), 1u);
  Matrix want(4, 4);
  want << -1, 0, 0, 0,  //
      0.8, -1, 0, 0,    //
      0, 0.8, -1, 0,    //
      0, 0, 0.8, -1;
  EXPECT_TRUE(s.matrices[0].isApprox(want, 1e-15)) << s.matrices[0];

  // Congested link 2: 0.8 x1 > 1 - x2, so g1 follows supply with slope -1 in x2.
  const std::vector<double> jam{0.95, 0.8, 0.05, 0.0};
  const auto c = jac.evaluate(jam);
  ASSERT_EQ(c.matrices.size(), 1u);
  EXPECT_DOUBLE_EQ(c.matrices[0](0, 1), 1.25);  // -(1/0.8) * (-1)
  EXPECT_DOUBLE_EQ(c.matrices[0](1, 0), 0.0);
  EXPECT_DOUBLE_EQ(c.matrices[0](1, 1), -1.0 - 1.0);
}

GTEST_TEST(JacobianTest, TieReportsEveryBranch) {
  const SystemDef sys = parse_system("system s { states a in [0, 1], b in [0, 1] da = min(2*a, 1 - b) db = -b }");
  const Jacobian jac(sys);
  ASSERT_EQ(jac.branches().size(), 2u);
  const std::vector<double> tie{0.25, 0.5};
  const auto s = jac.evaluate(tie);
  EXPECT_TRUE(s.tie);
  ASSERT_EQ(s.matrices.size(), 2u);
  EXPECT_EQ(s.matrices[0](0, 0), 2.0);
  EXPECT_EQ(s.matrices[0](0, 1), 0.0);
  EXPECT_EQ(s.matrices[1](0, 0), 0.0);
  EXPECT_EQ(s.matrices[1](0, 1), -1.0);

  // Predicates select the branch: branch 0 needs 2a - (1 - b) <= 0.
  const std::vector<double> p{0.1, 0.5};
  EXPECT_LE(evaluate(jac.branches()[0].predicates[0], p), 0.0);
  EXPECT_GT(evaluate(jac.branches()[1].predicates[0], p), 0.0);
  const auto s2 = jac.evaluate(p);
  EXPECT_FALSE(s2.tie);
  ASSERT_EQ(s2.matrices.size(), 1u);
  EXPECT_EQ(s2.matrices[0](0, 0), 2.0);
}

GTEST_TEST(JacobianTest, NestedAndRepeatedSwitches) {
  const SystemDef sys =
      parse_system("system s { states a in [-1, 1], b in [-1, 1] da = max(min(a, b), -a) + min(a, b) db = -b }");
  const Jacobian jac(sys);
  EXPECT_EQ(jac.switch_count(), 2u);
  const std::vector<double> x{0.5, 0.2};  // min(a,b) = b, max(b, -a) = b
  const auto s = jac.evaluate(x);
  ASSERT_EQ(s.matrices.size(), 1u);
  EXPECT_EQ(s.matrices[0](0, 0), 0.0);
  EXPECT_EQ(s.matrices[0](0, 1), 2.0);
  const std::vector<double> y{-0.5, 0.2};  // min = a, max(a, -a) = -a
  const auto s2 = jac.evaluate(y);
  ASSERT_EQ(s2.matrices.size(), 1u);
  EXPECT_EQ(s2.matrices[0](0, 0), 0.0);
  EXPECT_EQ(s2.matrices[0](0, 1), 0.0);
}

GTEST_TEST(JacobianTest, CompiledFieldMatchesEvaluate) {
  const SystemDef sys = corpus("comparison.sys");
  const CompiledField f(sys);
  const std::vector<double> x{0.7, 1.3};
  const auto want = sys.eval_f(x);
  EXPECT_EQ(f(x), want);
}

}  // namespace
}  // namespace monocert
