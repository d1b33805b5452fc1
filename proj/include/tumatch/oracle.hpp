// Independent cross-checks: Monte Carlo simulation of EV1 choices and a
// brute-force equilibrium by cyclic coordinate bisection on tiny markets.
#pragma once

#include "tumatch/choice_kernels.hpp"
#include "tumatch/random.hpp"
#include "tumatch/solver.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace tumatch {

class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct McReport {
  Vector<double> empirical_probs;    // counts / draws, outside at 0
  Vector<double> closed_form_probs;
  std::vector<long> counts;
  double max_abs_gap = 0.0;
  double standard_error_bound = 0.0;  // 4 * sqrt(0.25 / draws)
  long draws = 0;
  std::uint64_t seed = 0;
};

/// Simulates `draws` agents choosing argmax_j { v_j + eps_j } with i.i.d.
/// standard Gumbel eps (v_0 = 0) and tabulates the choice frequencies.
inline McReport mc_logit_probs(const Vector<double>& inside, long draws, std::uint64_t seed) {
  if (draws < 1) throw SpecError("draws must be >= 1");
  const Index n = inside.size() + 1;
  Vector<double> payoff(n);
  payoff[kOutside] = 0.0;
  payoff.tail(inside.size()) = inside;

  Rng rng(seed);
  std::vector<long> counts(static_cast<std::size_t>(n), 0);
  for (long d = 0; d < draws; ++d) {
    Index best = 0;
    double best_value = -INFINITY;
    for (Index j = 0; j < n; ++j) {
      const double u = payoff[j] + rng.gumbel();
      if (u > best_value) {
        best_value = u;
        best = j;
      }
    }
    ++counts[static_cast<std::size_t>(best)];
  }

  McReport report;
  report.empirical_probs.resize(n);
  for (Index j = 0; j < n; ++j) {
    report.empirical_probs[j] = static_cast<double>(counts[static_cast<std::size_t>(j)]) / static_cast<double>(draws);
  }
  report.closed_form_probs = logit_probs(inside);
  report.counts = std::move(counts);
  report.max_abs_gap = (report.empirical_probs - report.closed_form_probs).cwiseAbs().maxCoeff();
  report.standard_error_bound = 4.0 * std::sqrt(0.25 / static_cast<double>(draws));
  report.draws = draws;
  report.seed = seed;
  return report;
}

inline constexpr long kMaxBisectionSweeps = 10000;

/// Equilibrium wages by cyclic coordinate-wise bisection: each w_xy in turn
/// is moved to the root of log(n_y p^Y_xy) - log(n_x p^X_xy), which is
/// strictly decreasing in w_xy, holding the other wages fixed. Sweeps repeat
/// until the clearing residual is below `tolerance`. For |X||Y| <= 4 only.
inline WageMatrix brute_force_equilibrium(const ValidatedSpec& market, double tolerance = 1e-13) {
  const Index nx = market.num_workers();
  const Index ny = market.num_firms();
  if (nx * ny > 4) throw SpecError("brute_force_equilibrium supports at most 4 match types");
  if (!(tolerance > 0.0)) throw SpecError("tolerance must be > 0");
  const auto& s = market.spec();

  WageMatrix wages = WageMatrix::Zero(nx, ny);
  auto excess = [&](Index x, Index y) {
    const double worker = std::log(s.worker_mass[x]) +
                          log_probs(s.worker_model, worker_inside_payoffs(market, wages, x))[alternative(y)];
    const double firm = std::log(s.firm_mass[y]) +
                        log_probs(s.firm_model, firm_inside_payoffs(market, wages, y))[alternative(x)];
    return firm - worker;
  };
  auto excess_at = [&](Index x, Index y, double w) {
    wages(x, y) = w;
    return excess(x, y);
  };

  for (long sweep = 0; sweep < kMaxBisectionSweeps; ++sweep) {
    if (clearing_residual(market, wages) < tolerance) return wages;
    for (Index x = 0; x < nx; ++x) {
      for (Index y = 0; y < ny; ++y) {
        const double start = wages(x, y);
        double lo = start - 1.0;
        double hi = start + 1.0;
        for (double width = 1.0; excess_at(x, y, lo) < 0.0; width *= 2.0) lo -= width;
        for (double width = 1.0; excess_at(x, y, hi) > 0.0; width *= 2.0) hi += width;
        while (true) {
          const double mid = 0.5 * (lo + hi);
          if (mid <= lo || mid >= hi) break;
          (excess_at(x, y, mid) > 0.0 ? lo : hi) = mid;
        }
        const double e_lo = std::abs(excess_at(x, y, lo));
        const double e_hi = std::abs(excess_at(x, y, hi));
        wages(x, y) = e_lo <= e_hi ? lo : hi;
      }
    }
  }
  throw OracleError("brute_force_equilibrium: sweep cap exceeded");
}

}  // namespace tumatch
