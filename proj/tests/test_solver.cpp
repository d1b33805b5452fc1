#include "support/markets.hpp"
#include "tumatch/solver.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace tumatch {
namespace {

TEST(FixedPointMap, SymmetricMarketFixesZero) {
  const auto market = validate_spec(testing::symmetric_market());
  const WageMatrix next = fixed_point_map(market, WageMatrix::Zero(1, 1));
  EXPECT_EQ(next(0, 0), 0.0);
}

TEST(FixedPointMap, ProductiveFirmFirstStep) {
  // d = 1/2; F(0) = 0.5 * [log p^Y(0) - log p^X(0)] with p^Y = e/(1+e),
  // p^X = 1/2. Frozen from a 30-digit evaluation.
  const auto market = validate_spec(testing::productive_firm_market());
  const WageMatrix next = fixed_point_map(market, WageMatrix::Zero(1, 1));
  EXPECT_NEAR(next(0, 0), 0.189942746520861237684, 1e-15);
}

TEST(FixedPointMap, ClearingResidualAtZero) {
  // |1/2 - e/(1+e)|.
  const auto market = validate_spec(testing::productive_firm_market());
  EXPECT_NEAR(clearing_residual(market, WageMatrix::Zero(1, 1)), 0.231058578630004879, 1e-15);
}

TEST(FixedPointMap, DampingForUnitScales) {
  const auto market = validate_spec(testing::symmetric_market(2, 3));
  const Matrix<double> d = damping(market, step_scalars(market));
  EXPECT_TRUE((d.array() == 0.5).all());
}

TEST(FixedPointMap, DampingSmallCases) {
  auto s = testing::symmetric_market();
  s.worker_scale[0] = 2.0;
  s.firm_scale[0] = 2.0;
  const auto wide = validate_spec(s);
  EXPECT_EQ(damping(wide, unit_step_scalars(wide))(0, 0), 1.0);
  const auto unit = validate_spec(testing::symmetric_market());
  const StepScalars c{Matrix<double>::Constant(1, 1, 0.5), Matrix<double>::Constant(1, 1, 1.0)};
  EXPECT_NEAR(damping(unit, c)(0, 0), 1.0 / 3.0, 1e-16);
}

TEST(FixedPointMap, DampingUsesStepScalarsAndSensitivities) {
  auto s = testing::symmetric_market();
  s.worker_scale[0] = 2.0;
  s.firm_scale[0] = 3.0;
  s.worker_wage_sensitivity = Vector<double>::Constant(1, 0.5);
  s.firm_wage_sensitivity = Vector<double>::Constant(1, 4.0);
  const auto market = validate_spec(s);
  const StepScalars c{Matrix<double>::Constant(1, 1, 0.5), Matrix<double>::Constant(1, 1, 0.25)};
  // a = 1, b = 0.75; d = 0.75 / (4 * 1 + 0.5 * 0.75).
  EXPECT_NEAR(damping(market, c)(0, 0), 0.75 / 4.375, 1e-16);
}

TEST(FixedPointMap, RejectsBadShapes) {
  const auto market = validate_spec(testing::symmetric_market(2, 2));
  EXPECT_THROW(fixed_point_map(market, WageMatrix::Zero(2, 3)), SpecError);
  StepScalars c = step_scalars(market);
  c.firm(0, 1) = 0.0;
  EXPECT_THROW(FixedPointMap(market, c), SpecError);
}

TEST(FixedPointMap, NonFiniteWageReportsLocation) {
  const auto market = validate_spec(testing::symmetric_market(2, 2));
  WageMatrix w = WageMatrix::Zero(2, 2);
  w(1, 0) = NAN;
  try {
    fixed_point_map(market, w);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite"), std::string::npos) << e.what();
  }
}

TEST(StepScalarRule, PerModel) {
  Rng rng(4);
  auto s = testing::random_logit_market(rng, 3, 2);
  s.worker_model = NestedLogit{{1, 0}, (Vector<double>(2) << 0.3, 0.8).finished()};
  GeneralizedNestedLogit gnl;
  gnl.membership = Matrix<double>::Constant(3, 2, 0.5);
  gnl.lambda = (Vector<double>(2) << 0.9, 0.4).finished();
  s.firm_model = gnl;
  const auto market = validate_spec(s);
  const auto c = step_scalars(market);
  for (Index x = 0; x < 3; ++x) {
    EXPECT_EQ(c.worker(x, 0), 0.8);
    EXPECT_EQ(c.worker(x, 1), 0.3);
    EXPECT_EQ(c.firm(x, 0), 0.4);
    EXPECT_EQ(c.firm(x, 1), 0.4);
  }
}

TEST(Solve, SymmetricMarketConvergesImmediately) {
  const auto market = validate_spec(testing::symmetric_market());
  const auto r = solve(market);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_EQ(r.wages(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(r.matching.matches(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(r.matching.unmatched_workers[0], 0.5);
  EXPECT_DOUBLE_EQ(r.matching.vacant_firms[0], 0.5);
}

TEST(Solve, ProductiveFirmEquilibriumIsOneHalf) {
  const auto market = validate_spec(testing::productive_firm_market());
  SolveOptions o;
  o.tolerance = 1e-13;
  const auto r = solve(market, o);
  ASSERT_TRUE(r.converged);
  EXPECT_NEAR(r.wages(0, 0), 0.5, 1e-12);
  EXPECT_LT(r.final_clearing_residual, 1e-12);
}

TEST(Solve, TwoByTwoSymmetricMarket) {
  const auto market = validate_spec(testing::symmetric_market(2, 2));
  const auto r = solve(market);
  ASSERT_TRUE(r.converged);
  EXPECT_LT(r.wages.cwiseAbs().maxCoeff(), 1e-12);
  for (Index x = 0; x < 2; ++x) {
    for (Index y = 0; y < 2; ++y) EXPECT_NEAR(r.matching.matches(x, y), 1.0 / 3.0, 1e-12);
  }
}

TEST(Solve, MatchingMassBalance) {
  const auto market = validate_spec(testing::random_nested_market(12, 3, 4));
  const auto r = solve(market);
  ASSERT_TRUE(r.converged);
  const auto& s = market.spec();
  for (Index x = 0; x < 3; ++x) {
    EXPECT_NEAR(r.matching.matches.row(x).sum() + r.matching.unmatched_workers[x], s.worker_mass[x], 1e-12);
  }
  for (Index y = 0; y < 4; ++y) {
    EXPECT_NEAR(r.matching.matches.col(y).sum() + r.matching.vacant_firms[y], s.firm_mass[y], 1e-9);
  }
}

TEST(Solve, IterationCapIsReportedAndTraced) {
  const auto market = validate_spec(testing::benchmark_market(10));
  SolveOptions o;
  o.max_iterations = 3;
  const auto r = solve(market, o);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 3);
  ASSERT_EQ(r.trace.size(), 1u);
  EXPECT_EQ(r.trace.back().iteration, 3);
  EXPECT_EQ(r.trace.back().update_norm, r.final_update_norm);
}

TEST(Solve, PeriodicTrace) {
  const auto market = validate_spec(testing::benchmark_market(6));
  SolveOptions o;
  o.trace_every = 5;
  const auto r = solve(market, o);
  ASSERT_TRUE(r.converged);
  ASSERT_FALSE(r.trace.empty());
  for (std::size_t k = 0; k + 1 < r.trace.size(); ++k) EXPECT_EQ(r.trace[k].iteration, 5 * static_cast<long>(k + 1));
  EXPECT_EQ(r.trace.back().iteration, r.iterations);
}

TEST(Solve, OptionValidation) {
  const auto market = validate_spec(testing::symmetric_market());
  SolveOptions o;
  o.tolerance = 0.0;
  EXPECT_THROW(solve(market, o), SpecError);
  o = {};
  o.max_iterations = 0;
  EXPECT_THROW(solve(market, o), SpecError);
  o = {};
  o.initial_wages = WageMatrix::Zero(2, 1);
  EXPECT_THROW(solve(market, o), SpecError);
}

TEST(SolveProperty, UpdateNormsDecreaseGeometrically) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto market = validate_spec(testing::random_gnl_market(seed, 3, 3));
    SolveOptions o;
    o.trace_every = 1;
    o.tolerance = 1e-12;
    const auto r = solve(market, o);
    ASSERT_TRUE(r.converged) << "seed " << seed;
    for (std::size_t k = 1; k < r.trace.size(); ++k) {
      if (r.trace[k - 1].update_norm < 1e-10) break;
      EXPECT_LE(r.trace[k].update_norm, r.trace[k - 1].update_norm * (1.0 + 1e-9)) << "seed " << seed;
    }
  }
}

TEST(SolveProperty, FixedPointClearsMarketsForAllModels) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (int kind = 0; kind < 3; ++kind) {
      const MarketSpec s = kind == 0   ? testing::random_logit_market(seed, 4, 3)
                           : kind == 1 ? testing::random_nested_market(seed, 4, 3)
                                       : testing::random_gnl_market(seed, 4, 3);
      const auto market = validate_spec(s);
      SolveOptions o;
      o.tolerance = 1e-12;
      const auto r = solve(market, o);
      ASSERT_TRUE(r.converged);
      EXPECT_LT(r.final_clearing_residual, 1e-9) << "seed " << seed << " kind " << kind;
      const WageMatrix again = fixed_point_map(market, r.wages);
      EXPECT_LT((again - r.wages).cwiseAbs().maxCoeff(), 1e-11);
    }
  }
}

TEST(SolveProperty, GeneratingFunctionFormAgrees) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto market = validate_spec(testing::random_nested_market(seed, 3, 2));
    SolveOptions a;
    a.tolerance = 1e-12;
    SolveOptions b = a;
    b.form = MapForm::generating_function;
    const auto ra = solve(market, a);
    const auto rb = solve(market, b);
    ASSERT_TRUE(ra.converged && rb.converged);
    EXPECT_LT((ra.wages - rb.wages).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(SolveProperty, GeneratingFunctionMapMatchesPointwise) {
  Rng rng(31);
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto market = validate_spec(testing::random_gnl_market(seed, 2, 3));
    const FixedPointMap closed(market, step_scalars(market), MapForm::choice_probabilities);
    const FixedPointMap generating(market, step_scalars(market), MapForm::generating_function);
    const WageMatrix w = testing::random_wages(rng, 2, 3, -3.0, 3.0);
    EXPECT_LT((closed(w) - generating(w)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

}  // namespace
}  // namespace tumatch
