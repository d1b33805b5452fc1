#include "support/markets.hpp"
#include "tumatch/oracle.hpp"
#include "tumatch/solver.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace tumatch {
namespace {

TEST(MonteCarlo, MatchesLogitWithinStandardErrors) {
  Rng rng(99);
  for (int t = 0; t < 3; ++t) {
    const Vector<double> v = testing::uniform_vector(rng, 3, -2.0, 2.0);
    const McReport mc = mc_logit_probs(v, 200000, 1000 + static_cast<std::uint64_t>(t));
    for (Index j = 0; j < 4; ++j) {
      const double p = mc.closed_form_probs[j];
      EXPECT_LE(std::abs(mc.empirical_probs[j] - p), 4.0 * std::sqrt(p * (1.0 - p) / 200000.0)) << j;
    }
    EXPECT_NEAR(mc.empirical_probs.sum(), 1.0, 1e-12);
  }
}

TEST(MonteCarlo, SameSeedSameCounts) {
  const Vector<double> v = Vector<double>::Constant(2, 0.5);
  const auto a = mc_logit_probs(v, 5000, 42);
  const auto b = mc_logit_probs(v, 5000, 42);
  const auto c = mc_logit_probs(v, 5000, 43);
  EXPECT_EQ(a.counts, b.counts);
  EXPECT_NE(a.counts, c.counts);
}

TEST(MonteCarlo, RejectsNonPositiveDraws) {
  EXPECT_THROW(mc_logit_probs(Vector<double>::Zero(1), 0, 1), SpecError);
}

TEST(Gumbel, MomentsOfStandardEv1) {
  Rng rng(5);
  const long n = 400000;
  double sum = 0.0;
  double sq = 0.0;
  for (long i = 0; i < n; ++i) {
    const double g = rng.gumbel();
    sum += g;
    sq += g * g;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  EXPECT_NEAR(mean, 0.5772156649015329, 0.01);
  EXPECT_NEAR(var, M_PI * M_PI / 6.0, 0.03);
}

TEST(BruteForce, AgreesWithSolverOnTinyMarkets) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const Index nx = seed % 2 == 0 ? 2 : 1;
    const Index ny = seed % 3 == 0 ? 2 : 1;
    const auto market = validate_spec(testing::random_nested_market(seed, nx, ny));
    SolveOptions o;
    o.tolerance = 1e-12;
    const auto r = solve(market, o);
    const WageMatrix oracle = brute_force_equilibrium(market);
    EXPECT_LT((r.wages - oracle).cwiseAbs().maxCoeff(), 1e-7) << "seed " << seed;
  }
}

TEST(BruteForce, ProductiveFirmMarket) {
  const auto market = validate_spec(testing::productive_firm_market());
  EXPECT_NEAR(brute_force_equilibrium(market)(0, 0), 0.5, 1e-12);
}

TEST(BruteForce, RefusesLargeMarkets) {
  const auto market = validate_spec(testing::symmetric_market(2, 3));
  EXPECT_THROW(brute_force_equilibrium(market), SpecError);
}

}  // namespace
}  // namespace tumatch
