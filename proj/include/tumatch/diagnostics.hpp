// Numerical checks of the contraction property: finite-difference Jacobians
// of F, their sup-norm, sampled Lipschitz ratios and the bounded-elasticity
// margins that guarantee them.
//
// F is re-evaluated in extended precision (long double) here. Near the edges
// of the wage space the distance of the Jacobian norm from one is governed by
// the outside-option probabilities, which can be far smaller than the rounding
// noise of a double-precision central difference.
#pragma once

#include "tumatch/choice_kernels.hpp"
#include "tumatch/random.hpp"
#include "tumatch/solver.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

namespace tumatch {

using Precise = long double;

inline constexpr double kJacobianStep = 1e-6;

template <class Derived>
double infinity_norm(const Eigen::MatrixBase<Derived>& m) {
  if (m.size() == 0) return 0.0;
  return static_cast<double>(m.cwiseAbs().rowwise().sum().maxCoeff());
}

/// Central-difference Jacobian of F at W. Rows and columns follow the
/// row-major vectorization (w_11, ..., w_1|Y|, ..., w_|X||Y|).
inline Matrix<double> jacobian_fd(const FixedPointMap& map, const WageMatrix& wages, double step = kJacobianStep) {
  if (!(step > 0.0)) throw SpecError("finite-difference step must be > 0");
  const Index nx = map.market().num_workers();
  const Index ny = map.market().num_firms();
  const Index n = nx * ny;
  Matrix<Precise> point = wages.cast<Precise>();
  const Precise h = step;
  Matrix<double> jac(n, n);
  for (Index i = 0; i < nx; ++i) {
    for (Index j = 0; j < ny; ++j) {
      const Precise w = point(i, j);
      point(i, j) = w + h;
      const Matrix<Precise> up = map(point);
      point(i, j) = w - h;
      const Matrix<Precise> down = map(point);
      point(i, j) = w;
      for (Index x = 0; x < nx; ++x) {
        for (Index y = 0; y < ny; ++y) {
          const Precise d = (up(x, y) - down(x, y)) / (Precise(2) * h);
          if (!std::isfinite(static_cast<double>(d))) throw NumericalError("non-finite Jacobian entry");
          jac(x * ny + y, i * ny + j) = static_cast<double>(d);
        }
      }
    }
  }
  return jac;
}

inline Matrix<double> jacobian_fd(const ValidatedSpec& market, const WageMatrix& wages, double step = kJacobianStep) {
  return jacobian_fd(FixedPointMap(market), wages, step);
}

/// ||F(W1) - F(W2)|| / ||W1 - W2|| in the sup norm.
inline double contraction_ratio(const FixedPointMap& map, const WageMatrix& w1, const WageMatrix& w2) {
  const Matrix<Precise> a = w1.cast<Precise>();
  const Matrix<Precise> b = w2.cast<Precise>();
  const Precise distance = (a - b).cwiseAbs().maxCoeff();
  if (!(distance > 0)) throw SpecError("contraction_ratio needs two distinct wage matrices");
  const Precise image = (map(a) - map(b)).cwiseAbs().maxCoeff();
  return static_cast<double>(image / distance);
}

inline double contraction_ratio(const ValidatedSpec& market, const WageMatrix& w1, const WageMatrix& w2) {
  return contraction_ratio(FixedPointMap(market), w1, w2);
}

/// c * own-elasticity for every alternative of every agent type, outside
/// options included (with c = 1), and the margins 1 - c * elasticity.
struct ElasticityCheck {
  Matrix<double> worker_product;  // |X| x (|Y|+1)
  Matrix<double> firm_product;    // (|X|+1) x |Y|
  Matrix<double> worker_margin;
  Matrix<double> firm_margin;
  bool verdict = false;           // every margin > 0
  double min_margin = 0.0;
};

inline ElasticityCheck check_bounded_elasticities(const ValidatedSpec& market, const WageMatrix& wages,
                                                  const StepScalars& scalars) {
  require_step_scalars(market, scalars);
  const Index nx = market.num_workers();
  const Index ny = market.num_firms();
  const Matrix<Precise> w = wages.cast<Precise>();
  ElasticityCheck out{Matrix<double>(nx, ny + 1), Matrix<double>(nx + 1, ny), Matrix<double>(nx, ny + 1),
                      Matrix<double>(nx + 1, ny)};
  for (Index x = 0; x < nx; ++x) {
    const Vector<Precise> c = scalars.worker.row(x).transpose().cast<Precise>();
    const auto t = own_elasticity_terms(market->worker_model, worker_inside_payoffs(market, w, x), c);
    for (Index j = 0; j <= ny; ++j) {
      const Precise cj = j == kOutside ? Precise(1) : c[storage(j)];
      out.worker_product(x, j) = static_cast<double>(cj * t.elasticity[j]);
      out.worker_margin(x, j) = static_cast<double>(t.margin[j]);
    }
  }
  for (Index y = 0; y < ny; ++y) {
    const Vector<Precise> c = scalars.firm.col(y).cast<Precise>();
    const auto t = own_elasticity_terms(market->firm_model, firm_inside_payoffs(market, w, y), c);
    for (Index i = 0; i <= nx; ++i) {
      const Precise ci = i == kOutside ? Precise(1) : c[storage(i)];
      out.firm_product(i, y) = static_cast<double>(ci * t.elasticity[i]);
      out.firm_margin(i, y) = static_cast<double>(t.margin[i]);
    }
  }
  out.min_margin = std::min(out.worker_margin.minCoeff(), out.firm_margin.minCoeff());
  out.verdict = out.min_margin > 0.0;
  return out;
}

inline ElasticityCheck check_bounded_elasticities(const ValidatedSpec& market, const WageMatrix& wages) {
  return check_bounded_elasticities(market, wages, step_scalars(market));
}

/// Per-iteration error reduction observed at the end of a trace: the ratio of
/// the last two consecutive update norms that are both above `floor`, where
/// rounding no longer dominates. Empty when the trace has no such pair.
inline std::optional<double> asymptotic_rate(const std::vector<TraceEntry>& trace, double floor = 1e-8) {
  std::optional<double> rate;
  for (std::size_t k = 1; k < trace.size(); ++k) {
    const auto& prev = trace[k - 1];
    const auto& cur = trace[k];
    if (cur.iteration != prev.iteration + 1) continue;
    if (prev.update_norm >= floor && cur.update_norm >= floor) rate = cur.update_norm / prev.update_norm;
  }
  return rate;
}

struct DiagnosticsReport {
  double jacobian_inf_norm = 0.0;
  std::vector<double> contraction_ratio_samples;
  ElasticityCheck elasticity_bounds;
  ElasticityTable<double> elasticities;
  double elasticity_fd_gap = 0.0;  // closed form vs central differences
  StepScalars step_scalars;
};

/// Everything above at one wage matrix. Ratio samples compare pairs
/// W + U[-10, 10] drawn from a seeded stream.
inline DiagnosticsReport diagnose(const ValidatedSpec& market, const WageMatrix& wages, int samples = 100,
                                  std::uint64_t seed = 0) {
  DiagnosticsReport report;
  report.step_scalars = step_scalars(market);
  const FixedPointMap map(market, report.step_scalars);
  report.jacobian_inf_norm = infinity_norm(jacobian_fd(map, wages));
  report.elasticity_bounds = check_bounded_elasticities(market, wages, report.step_scalars);
  report.elasticities = own_elasticities(market, wages);
  const auto fd = own_elasticities_fd(market, wages);
  report.elasticity_fd_gap = std::max((fd.worker - report.elasticities.worker).cwiseAbs().maxCoeff(),
                                      (fd.firm - report.elasticities.firm).cwiseAbs().maxCoeff());

  Rng rng(seed);
  auto draw = [&] {
    WageMatrix w = wages;
    for (Index k = 0; k < w.size(); ++k) w.data()[k] += rng.uniform(-10.0, 10.0);
    return w;
  };
  for (int s = 0; s < samples; ++s) {
    const WageMatrix a = draw();
    const WageMatrix b = draw();
    report.contraction_ratio_samples.push_back(contraction_ratio(map, a, b));
  }
  return report;
}

}  // namespace tumatch
