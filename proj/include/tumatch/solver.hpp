// Equilibrium wages by fixed-point iteration on the damped market-clearing map
//
//   f_xy(W) = w_xy + d_xy * log[ n_y p^Y_xy(w_.y) / (n_x p^X_xy(w_x.)) ],
//   d_xy    = (c^X sx)(c^Y sy) / (eta^Y c^X sx + eta^X c^Y sy),
//
// with step scalars c chosen so that every own-elasticity times c stays below
// one, which makes the map a contraction in the sup norm.
#pragma once

#include "tumatch/choice_kernels.hpp"
#include "tumatch/gev.hpp"
#include "tumatch/market.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace tumatch {

struct StepScalars {
  Matrix<double> worker;  // c^X, |X| x |Y|
  Matrix<double> firm;    // c^Y, |X| x |Y|
};

namespace detail {

/// c for each inside alternative of one side's choice set.
inline Vector<double> side_scalars(const ChoiceModel& model, Index num_alternatives) {
  Vector<double> c = Vector<double>::Ones(num_alternatives);
  if (const auto* nl = std::get_if<NestedLogit>(&model)) {
    for (Index j = 0; j < num_alternatives; ++j) c[j] = nl->lambda[nl->nest_of[static_cast<std::size_t>(j)]];
  } else if (const auto* gnl = std::get_if<GeneralizedNestedLogit>(&model)) {
    c.setConstant(gnl->lambda.minCoeff());
  }
  return c;
}

}  // namespace detail

/// Logit: all ones. Nested logit: the nesting parameter of the alternative's
/// nest. Generalized nested logit: the smallest nesting parameter.
inline StepScalars step_scalars(const ValidatedSpec& market) {
  const Index nx = market.num_workers();
  const Index ny = market.num_firms();
  const Vector<double> worker_side = detail::side_scalars(market->worker_model, ny);
  const Vector<double> firm_side = detail::side_scalars(market->firm_model, nx);
  StepScalars out{Matrix<double>(nx, ny), Matrix<double>(nx, ny)};
  for (Index x = 0; x < nx; ++x) {
    for (Index y = 0; y < ny; ++y) {
      out.worker(x, y) = worker_side[y];
      out.firm(x, y) = firm_side[x];
    }
  }
  return out;
}

inline StepScalars unit_step_scalars(const ValidatedSpec& market) {
  const Index nx = market.num_workers();
  const Index ny = market.num_firms();
  return {Matrix<double>::Ones(nx, ny), Matrix<double>::Ones(nx, ny)};
}

inline void require_step_scalars(const ValidatedSpec& market, const StepScalars& c) {
  const Index nx = market.num_workers();
  const Index ny = market.num_firms();
  for (const auto* m : {&c.worker, &c.firm}) {
    if (m->rows() != nx || m->cols() != ny) throw SpecError("dimension mismatch: step scalars");
    if (!(m->array() > 0.0).all() || !m->allFinite()) throw SpecError("step scalars must be finite and > 0");
  }
}

inline Matrix<double> damping(const ValidatedSpec& market, const StepScalars& c) {
  require_step_scalars(market, c);
  const auto& s = market.spec();
  const Index nx = market.num_workers();
  const Index ny = market.num_firms();
  Matrix<double> d(nx, ny);
  for (Index x = 0; x < nx; ++x) {
    for (Index y = 0; y < ny; ++y) {
      const double a = c.worker(x, y) * s.worker_scale[x];
      const double b = c.firm(x, y) * s.firm_scale[y];
      d(x, y) = a * b / (s.firm_wage_sensitivity[y] * a + s.worker_wage_sensitivity[x] * b);
    }
  }
  return d;
}

/// Which algebraic form of the map to evaluate. Both define the same F; the
/// generating-function form goes through log g and log dg/du instead of the
/// closed-form choice probabilities.
enum class MapForm { choice_probabilities, generating_function };

template <class T>
struct MapEvaluation {
  Matrix<T> next;         // F(W)
  T clearing_residual{};  // max |n_x p^X - n_y p^Y| at the input W
};

namespace detail {

inline std::string location(Index x, Index y) {
  return "(" + std::to_string(x + 1) + "," + std::to_string(y + 1) + ")";
}

template <class T>
void require_finite_wage(const T& value, Index x, Index y) {
  if (!std::isfinite(static_cast<double>(value))) {
    throw NumericalError("non-finite wage update at " + location(x, y));
  }
}

}  // namespace detail

/// F bound to one market and one set of step scalars.
class FixedPointMap {
 public:
  FixedPointMap(const ValidatedSpec& market, StepScalars scalars,
                MapForm form = MapForm::choice_probabilities)
      : market_(&market), scalars_(std::move(scalars)), damping_(damping(market, scalars_)), form_(form) {
    if (form_ == MapForm::generating_function) {
      worker_generator_ = make_generator(market->worker_model);
      firm_generator_ = make_generator(market->firm_model);
    }
  }

  explicit FixedPointMap(const ValidatedSpec& market) : FixedPointMap(market, step_scalars(market)) {}

  const ValidatedSpec& market() const { return *market_; }
  const StepScalars& scalars() const { return scalars_; }
  const Matrix<double>& damping_matrix() const { return damping_; }
  MapForm form() const { return form_; }

  template <class T = double>
  MapEvaluation<T> evaluate(const Matrix<T>& wages) const {
    require_shape(wages);
    if (form_ == MapForm::generating_function) {
      auto e = evaluate_generating(wages.template cast<double>().eval());
      return {e.next.template cast<T>(), T(e.clearing_residual)};
    }
    const auto& s = market_->spec();
    const auto lp = choice_log_probabilities<T>(*market_, wages);
    const Index nx = market_->num_workers();
    const Index ny = market_->num_firms();
    MapEvaluation<T> out{Matrix<T>(nx, ny), T(0)};
    for (Index x = 0; x < nx; ++x) {
      const T log_nx = std::log(T(s.worker_mass[x]));
      for (Index y = 0; y < ny; ++y) {
        const T log_nx_px = log_nx + lp.worker(x, alternative(y));
        const T log_ny_py = std::log(T(s.firm_mass[y])) + lp.firm(alternative(x), y);
        out.next(x, y) = wages(x, y) + T(damping_(x, y)) * (log_ny_py - log_nx_px);
        detail::require_finite_wage(out.next(x, y), x, y);
        out.clearing_residual =
            std::max<T>(out.clearing_residual, std::abs(std::exp(log_nx_px) - std::exp(log_ny_py)));
      }
    }
    return out;
  }

  template <class T = double>
  Matrix<T> operator()(const Matrix<T>& wages) const {
    return evaluate(wages).next;
  }

 private:
  void require_shape(auto const& wages) const {
    if (wages.rows() != market_->num_workers() || wages.cols() != market_->num_firms()) {
      throw SpecError("dimension mismatch: wage matrix is " + std::to_string(wages.rows()) + "x" +
                      std::to_string(wages.cols()));
    }
  }

  MapEvaluation<double> evaluate_generating(const Matrix<double>& wages) const {
    const auto& s = market_->spec();
    const Index nx = market_->num_workers();
    const Index ny = market_->num_firms();
    std::vector<Vector<double>> worker_payoffs(static_cast<std::size_t>(nx));
    std::vector<GevLogTerms> worker_terms(static_cast<std::size_t>(nx));
    for (Index x = 0; x < nx; ++x) {
      auto& v = worker_payoffs[static_cast<std::size_t>(x)];
      v = worker_inside_payoffs(*market_, wages, x);
      worker_terms[static_cast<std::size_t>(x)] =
          gev_log_terms(*worker_generator_, std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
    }
    std::vector<Vector<double>> firm_payoffs(static_cast<std::size_t>(ny));
    std::vector<GevLogTerms> firm_terms(static_cast<std::size_t>(ny));
    for (Index y = 0; y < ny; ++y) {
      auto& v = firm_payoffs[static_cast<std::size_t>(y)];
      v = firm_inside_payoffs(*market_, wages, y);
      firm_terms[static_cast<std::size_t>(y)] =
          gev_log_terms(*firm_generator_, std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
    }

    MapEvaluation<double> out{Matrix<double>(nx, ny), 0.0};
    for (Index x = 0; x < nx; ++x) {
      const auto& tx = worker_terms[static_cast<std::size_t>(x)];
      for (Index y = 0; y < ny; ++y) {
        const auto& ty = firm_terms[static_cast<std::size_t>(y)];
        const double log_grad_x = tx.log_gradient[static_cast<std::size_t>(alternative(y))];
        const double log_grad_y = ty.log_gradient[static_cast<std::size_t>(alternative(x))];
        // Everything in the log clearing condition except the wage itself.
        const double bracket = std::log(s.firm_mass[y]) + s.firm_productivity(x, y) / s.firm_scale[y] +
                               log_grad_y - ty.log_g - std::log(s.worker_mass[x]) -
                               s.worker_utility(x, y) / s.worker_scale[x] - log_grad_x + tx.log_g;
        const double wage_weight = s.worker_wage_sensitivity[x] / s.worker_scale[x] +
                                   s.firm_wage_sensitivity[y] / s.firm_scale[y];
        const double d = damping_(x, y);
        // With unit step scalars d * wage_weight == 1 and the wage drops out.
        out.next(x, y) = (1.0 - d * wage_weight) * wages(x, y) + d * bracket;
        detail::require_finite_wage(out.next(x, y), x, y);

        const double log_px = worker_payoffs[static_cast<std::size_t>(x)][y] + log_grad_x - tx.log_g;
        const double log_py = firm_payoffs[static_cast<std::size_t>(y)][x] + log_grad_y - ty.log_g;
        out.clearing_residual = std::max(
            out.clearing_residual, std::abs(s.worker_mass[x] * std::exp(log_px) - s.firm_mass[y] * std::exp(log_py)));
      }
    }
    return out;
  }

  const ValidatedSpec* market_;
  StepScalars scalars_;
  Matrix<double> damping_;
  MapForm form_;
  std::unique_ptr<GevGenerator> worker_generator_;
  std::unique_ptr<GevGenerator> firm_generator_;
};

/// One application of F with the model's own step-scalar rule.
template <class T = double>
Matrix<T> fixed_point_map(const ValidatedSpec& market, const Matrix<T>& wages) {
  return FixedPointMap(market)(wages);
}

template <class T = double>
Matrix<T> fixed_point_map(const ValidatedSpec& market, const Matrix<T>& wages, const StepScalars& scalars) {
  return FixedPointMap(market, scalars)(wages);
}

inline WageMatrix fixed_point_map(const ValidatedSpec& market, const WageMatrix& wages) {
  return fixed_point_map<double>(market, wages);
}

inline WageMatrix fixed_point_map(const ValidatedSpec& market, const WageMatrix& wages, const StepScalars& scalars) {
  return fixed_point_map<double>(market, wages, scalars);
}

inline double clearing_residual(const ValidatedSpec& market, const WageMatrix& wages) {
  const auto& s = market.spec();
  const auto p = choice_probabilities(market, wages);
  double r = 0.0;
  for (Index x = 0; x < market.num_workers(); ++x) {
    for (Index y = 0; y < market.num_firms(); ++y) {
      r = std::max(r, std::abs(s.worker_mass[x] * p.worker(x, alternative(y)) -
                               s.firm_mass[y] * p.firm(alternative(x), y)));
    }
  }
  return r;
}

struct Matching {
  Matrix<double> matches;            // mu_xy = n_x p^X_xy
  Vector<double> unmatched_workers;  // n_x p^X_x0
  Vector<double> vacant_firms;       // n_y p^Y_0y
};

inline Matching matching(const ValidatedSpec& market, const WageMatrix& wages) {
  const auto& s = market.spec();
  const Index nx = market.num_workers();
  const Index ny = market.num_firms();
  const auto p = choice_probabilities(market, wages);
  Matching out{Matrix<double>(nx, ny), Vector<double>(nx), Vector<double>(ny)};
  for (Index x = 0; x < nx; ++x) {
    out.unmatched_workers[x] = s.worker_mass[x] * p.worker(x, kOutside);
    for (Index y = 0; y < ny; ++y) out.matches(x, y) = s.worker_mass[x] * p.worker(x, alternative(y));
  }
  for (Index y = 0; y < ny; ++y) out.vacant_firms[y] = s.firm_mass[y] * p.firm(kOutside, y);
  return out;
}

struct SolveOptions {
  double tolerance = 1e-10;  // sup norm of the wage update
  long max_iterations = 100000;
  std::optional<WageMatrix> initial_wages;  // zeros when empty
  long trace_every = 0;                     // 0: no periodic trace
  std::optional<StepScalars> step_scalars;  // model rule when empty
  MapForm form = MapForm::choice_probabilities;
};

/// Residual is measured at the iterate the update was computed from.
struct TraceEntry {
  long iteration = 0;
  double update_norm = 0.0;
  double clearing_residual = 0.0;
};

struct SolveResult {
  WageMatrix wages;
  Matching matching;
  long iterations = 0;
  double final_update_norm = 0.0;
  double final_clearing_residual = 0.0;
  bool converged = false;
  std::vector<TraceEntry> trace;
};

inline void validate_options(const SolveOptions& options) {
  if (!(options.tolerance > 0.0)) throw SpecError("tolerance must be > 0");
  if (options.max_iterations < 1) throw SpecError("max_iterations must be >= 1");
  if (options.trace_every < 0) throw SpecError("trace_every must be >= 0");
}

/// Iterates W <- F(W) from the initial guess until the sup norm of the update
/// drops below the tolerance. Running out of iterations is reported through
/// `converged == false`; the last iteration is then always in the trace.
inline SolveResult solve(const ValidatedSpec& market, const SolveOptions& options = {}) {
  validate_options(options);
  const Index nx = market.num_workers();
  const Index ny = market.num_firms();
  const FixedPointMap map(market, options.step_scalars ? *options.step_scalars : step_scalars(market),
                          options.form);

  SolveResult result;
  WageMatrix wages = options.initial_wages ? *options.initial_wages : WageMatrix::Zero(nx, ny);
  if (wages.rows() != nx || wages.cols() != ny) throw SpecError("dimension mismatch: initial_wages");
  if (!wages.allFinite()) throw SpecError("initial_wages must be finite");

  TraceEntry last;
  for (long k = 1; k <= options.max_iterations; ++k) {
    auto step = map.evaluate(wages);
    const double update = (step.next - wages).cwiseAbs().maxCoeff();
    wages = std::move(step.next);
    last = {k, update, step.clearing_residual};
    result.iterations = k;
    result.final_update_norm = update;
    if (options.trace_every > 0 && k % options.trace_every == 0) result.trace.push_back(last);
    if (update < options.tolerance) {
      result.converged = true;
      break;
    }
  }
  const bool last_recorded = !result.trace.empty() && result.trace.back().iteration == last.iteration;
  if (!last_recorded && (options.trace_every > 0 || !result.converged)) result.trace.push_back(last);

  result.final_clearing_residual = clearing_residual(market, wages);
  result.matching = matching(market, wages);
  result.wages = std::move(wages);
  return result;
}

}  // namespace tumatch
