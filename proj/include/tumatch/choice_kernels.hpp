// Choice probabilities and own-elasticities for logit, nested logit and
// generalized nested logit.
//
// Every kernel takes the scaled payoffs of the inside alternatives (the
// outside option's payoff is the implicit zero) and returns a vector over the
// full choice set with the outside option at index 0. Work is done on
// log-probabilities; sums of exponentials are shifted by their maximum.
#pragma once

#include "tumatch/market.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

namespace tumatch {

template <class T>
struct ChoiceProbabilities {
  Matrix<T> worker;  // |X| x (|Y|+1), column 0 = unemployed
  Matrix<T> firm;    // (|X|+1) x |Y|, row 0 = vacant
};

template <class T>
struct ElasticityTable {
  Matrix<T> worker;
  Matrix<T> firm;
};

namespace detail {

template <class T>
constexpr T neg_inf() {
  return -std::numeric_limits<T>::infinity();
}

/// Accumulates log(sum exp(a_i)) with a running maximum. Terms equal to
/// -inf contribute nothing.
template <class T>
class LogSumExp {
 public:
  void add(T a) {
    if (a == neg_inf<T>()) return;
    if (a <= max_) {
      sum_ += std::exp(a - max_);
    } else {
      sum_ = sum_ * std::exp(max_ - a) + T(1);
      max_ = a;
    }
  }
  T value() const { return max_ == neg_inf<T>() ? max_ : max_ + std::log(sum_); }

 private:
  T max_ = neg_inf<T>();
  T sum_ = T(0);
};

template <class T>
void require_finite_payoffs(const Vector<T>& v) {
  for (Index j = 0; j < v.size(); ++j) {
    if (!std::isfinite(static_cast<double>(v[j]))) {
      throw NumericalError("non-finite scaled payoff at alternative " +
                           std::to_string(alternative(j)));
    }
  }
}

}  // namespace detail

template <class T>
Vector<T> logit_log_probs(const Vector<T>& inside) {
  detail::require_finite_payoffs(inside);
  detail::LogSumExp<T> lse;
  lse.add(T(0));
  for (Index j = 0; j < inside.size(); ++j) lse.add(inside[j]);
  const T log_denominator = lse.value();
  Vector<T> out(inside.size() + 1);
  out[kOutside] = -log_denominator;
  for (Index j = 0; j < inside.size(); ++j) out[alternative(j)] = inside[j] - log_denominator;
  return out;
}

template <class T>
struct NestedLogitLogProbs {
  Vector<T> unconditional;  // full choice set, outside at 0
  Vector<T> conditional;    // inside alternatives: log p(j | nest of j)
};

/// Nested logit log-probabilities together with the within-nest conditional
/// log-probabilities used by the own-elasticity formula.
template <class T>
NestedLogitLogProbs<T> nested_logit_log_probs_detailed(const Vector<T>& inside,
                                                       const NestedLogit& model) {
  detail::require_finite_payoffs(inside);
  const Index num_alt = inside.size();
  const Index num_nests = model.lambda.size();
  if (static_cast<Index>(model.nest_of.size()) != num_alt) {
    throw SpecError("nest_of has " + std::to_string(model.nest_of.size()) +
                    " entries for " + std::to_string(num_alt) + " alternatives");
  }
  std::vector<detail::LogSumExp<T>> within(static_cast<std::size_t>(num_nests));
  for (Index j = 0; j < num_alt; ++j) {
    const int k = model.nest_of[static_cast<std::size_t>(j)];
    if (k < 0 || k >= num_nests) throw SpecError("nest_of refers to a missing nest");
    within[static_cast<std::size_t>(k)].add(inside[j] / T(model.lambda[k]));
  }
  Vector<T> inclusive(num_nests);
  detail::LogSumExp<T> total;
  total.add(T(0));
  for (Index k = 0; k < num_nests; ++k) {
    inclusive[k] = within[static_cast<std::size_t>(k)].value();
    if (inclusive[k] == detail::neg_inf<T>()) throw SpecError("empty nest in nested logit");
    total.add(T(model.lambda[k]) * inclusive[k]);
  }
  const T log_denominator = total.value();

  NestedLogitLogProbs<T> out{Vector<T>(num_alt + 1), Vector<T>(num_alt)};
  out.unconditional[kOutside] = -log_denominator;
  for (Index j = 0; j < num_alt; ++j) {
    const int k = model.nest_of[static_cast<std::size_t>(j)];
    const T lambda = T(model.lambda[k]);
    const T scaled = inside[j] / lambda;
    out.conditional[j] = scaled - inclusive[k];
    out.unconditional[alternative(j)] = scaled + (lambda - T(1)) * inclusive[k] - log_denominator;
  }
  return out;
}

template <class T>
Vector<T> nested_logit_log_probs(const Vector<T>& inside, const NestedLogit& model) {
  return nested_logit_log_probs_detailed(inside, model).unconditional;
}

template <class T>
struct GnlLogProbs {
  Vector<T> unconditional;  // full choice set, outside at 0
  Matrix<T> joint;          // inside x nests: log P(j via nest m), -inf where alpha = 0
  Matrix<T> conditional;    // inside x nests: log P(j | nest m), -inf where alpha = 0
};

template <class T>
GnlLogProbs<T> gnl_log_probs_detailed(const Vector<T>& inside, const GeneralizedNestedLogit& model) {
  detail::require_finite_payoffs(inside);
  const auto& alpha = model.membership;
  const Index num_alt = inside.size();
  const Index num_nests = model.lambda.size();
  if (alpha.rows() != num_alt || alpha.cols() != num_nests) {
    throw SpecError("membership matrix does not match the choice set");
  }
  // log S_m = log sum_j alpha_jm exp(v_j / lambda_m); exact zeros in alpha are skipped.
  Vector<T> log_nest_sum(num_nests);
  detail::LogSumExp<T> total;
  total.add(T(0));
  for (Index m = 0; m < num_nests; ++m) {
    detail::LogSumExp<T> lse;
    for (Index j = 0; j < num_alt; ++j) {
      if (alpha(j, m) > 0.0) lse.add(std::log(T(alpha(j, m))) + inside[j] / T(model.lambda[m]));
    }
    log_nest_sum[m] = lse.value();
    if (log_nest_sum[m] != detail::neg_inf<T>()) total.add(T(model.lambda[m]) * log_nest_sum[m]);
  }
  const T log_denominator = total.value();

  GnlLogProbs<T> out{Vector<T>(num_alt + 1),
                     Matrix<T>::Constant(num_alt, num_nests, detail::neg_inf<T>()),
                     Matrix<T>::Constant(num_alt, num_nests, detail::neg_inf<T>())};
  out.unconditional[kOutside] = -log_denominator;
  for (Index j = 0; j < num_alt; ++j) {
    detail::LogSumExp<T> lse;
    for (Index m = 0; m < num_nests; ++m) {
      if (!(alpha(j, m) > 0.0)) continue;
      const T lambda = T(model.lambda[m]);
      const T own = std::log(T(alpha(j, m))) + inside[j] / lambda;
      out.conditional(j, m) = own - log_nest_sum[m];
      out.joint(j, m) = own + (lambda - T(1)) * log_nest_sum[m] - log_denominator;
      lse.add(out.joint(j, m));
    }
    out.unconditional[alternative(j)] = lse.value();
  }
  return out;
}

template <class T>
Vector<T> gnl_log_probs(const Vector<T>& inside, const GeneralizedNestedLogit& model) {
  return gnl_log_probs_detailed(inside, model).unconditional;
}

/// Log choice probabilities over the full choice set for any built-in model.
template <class T>
Vector<T> log_probs(const ChoiceModel& model, const Vector<T>& inside) {
  return std::visit(
      [&](const auto& m) -> Vector<T> {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, Logit>) {
          return logit_log_probs(inside);
        } else if constexpr (std::is_same_v<M, NestedLogit>) {
          return nested_logit_log_probs(inside, m);
        } else {
          return gnl_log_probs(inside, m);
        }
      },
      model);
}

template <class T>
Vector<T> probs(const ChoiceModel& model, const Vector<T>& inside) {
  return log_probs(model, inside).array().exp().matrix();
}

template <class T>
Vector<T> logit_probs(const Vector<T>& inside) {
  return logit_log_probs(inside).array().exp().matrix();
}

template <class T>
Vector<T> nested_logit_probs(const Vector<T>& inside, const NestedLogit& model) {
  return nested_logit_log_probs(inside, model).array().exp().matrix();
}

template <class T>
Vector<T> gnl_probs(const Vector<T>& inside, const GeneralizedNestedLogit& model) {
  return gnl_log_probs(inside, model).array().exp().matrix();
}

/// Own-elasticities d log p_j / d v_j over the full choice set, and the
/// Assumption-2 margins 1 - c_j * elasticity_j for step scalars `c` on the
/// inside alternatives (the outside option always uses c = 1). Margins are
/// assembled from non-negative pieces so they stay accurate when the product
/// is within rounding of one.
template <class T>
struct ElasticityTerms {
  Vector<T> elasticity;
  Vector<T> margin;
};

template <class T>
ElasticityTerms<T> own_elasticity_terms(const ChoiceModel& model, const Vector<T>& inside,
                                        const std::type_identity_t<Vector<T>>& scalars) {
  const Index num_alt = inside.size();
  ElasticityTerms<T> out{Vector<T>(num_alt + 1), Vector<T>(num_alt + 1)};
  auto set_outside = [&](T log_p0) {
    const T p0 = std::exp(log_p0);
    out.elasticity[kOutside] = T(1) - p0;
    out.margin[kOutside] = p0;
  };

  if (std::holds_alternative<Logit>(model)) {
    const Vector<T> lp = logit_log_probs(inside);
    set_outside(lp[kOutside]);
    for (Index j = 0; j < num_alt; ++j) {
      const T p = std::exp(lp[alternative(j)]);
      const T c = scalars[j];
      out.elasticity[alternative(j)] = T(1) - p;
      out.margin[alternative(j)] = (T(1) - c) + c * p;
    }
  } else if (const auto* nl = std::get_if<NestedLogit>(&model)) {
    const auto lp = nested_logit_log_probs_detailed(inside, *nl);
    set_outside(lp.unconditional[kOutside]);
    for (Index j = 0; j < num_alt; ++j) {
      const T lambda = T(nl->lambda[nl->nest_of[static_cast<std::size_t>(j)]]);
      const T p = std::exp(lp.unconditional[alternative(j)]);
      const T q = std::exp(lp.conditional[j]);
      const T c = scalars[j];
      out.elasticity[alternative(j)] = T(1) / lambda - (T(1) - lambda) / lambda * q - p;
      out.margin[alternative(j)] = (T(1) - c / lambda) + c * (T(1) - lambda) / lambda * q + c * p;
    }
  } else {
    const auto& gnl = std::get<GeneralizedNestedLogit>(model);
    const auto lp = gnl_log_probs_detailed(inside, gnl);
    set_outside(lp.unconditional[kOutside]);
    // p_j = sum_m P(j via m); each route m contributes its within-nest
    // elasticity weighted by its share P(j via m) / p_j.
    for (Index j = 0; j < num_alt; ++j) {
      const T log_p = lp.unconditional[alternative(j)];
      const T p = std::exp(log_p);
      const T c = scalars[j];
      T elasticity = -p;
      T margin = c * p;
      for (Index m = 0; m < gnl.lambda.size(); ++m) {
        if (lp.joint(j, m) == detail::neg_inf<T>()) continue;
        const T share = std::exp(lp.joint(j, m) - log_p);
        const T q = std::exp(lp.conditional(j, m));
        const T lambda = T(gnl.lambda[m]);
        elasticity += share * (T(1) / lambda - (T(1) - lambda) / lambda * q);
        margin += share * ((T(1) - c / lambda) + c / lambda * (T(1) - lambda) * q);
      }
      out.elasticity[alternative(j)] = elasticity;
      out.margin[alternative(j)] = margin;
    }
  }
  return out;
}

template <class T>
Vector<T> own_elasticities(const ChoiceModel& model, const Vector<T>& inside) {
  return own_elasticity_terms(model, inside, Vector<T>::Ones(inside.size())).elasticity;
}

inline constexpr double kElasticityStep = 1e-6;

/// Central finite differences of log p_j in v_j. The outside option is
/// perturbed through a common shift of the inside payoffs, which is
/// equivalent for every GEV model.
template <class T>
Vector<T> own_elasticities_fd(const ChoiceModel& model, const Vector<T>& inside,
                              T step = T(kElasticityStep)) {
  const Index num_alt = inside.size();
  Vector<T> out(num_alt + 1);
  {
    const Vector<T> up = inside.array() - step;
    const Vector<T> down = inside.array() + step;
    out[kOutside] =
        (log_probs(model, up)[kOutside] - log_probs(model, down)[kOutside]) / (T(2) * step);
  }
  Vector<T> shifted = inside;
  for (Index j = 0; j < num_alt; ++j) {
    shifted[j] = inside[j] + step;
    const T up = log_probs(model, shifted)[alternative(j)];
    shifted[j] = inside[j] - step;
    const T down = log_probs(model, shifted)[alternative(j)];
    shifted[j] = inside[j];
    out[alternative(j)] = (up - down) / (T(2) * step);
  }
  return out;
}

/// Log choice probabilities of every worker (row x uses wage row x) and
/// every firm (column y uses wage column y).
template <class T = double>
ChoiceProbabilities<T> choice_log_probabilities(const ValidatedSpec& market, const Matrix<T>& wages) {
  const Index nx = market.num_workers();
  const Index ny = market.num_firms();
  ChoiceProbabilities<T> out{Matrix<T>(nx, ny + 1), Matrix<T>(nx + 1, ny)};
  for (Index x = 0; x < nx; ++x) {
    out.worker.row(x) = log_probs(market->worker_model, worker_inside_payoffs(market, wages, x)).transpose();
  }
  for (Index y = 0; y < ny; ++y) {
    out.firm.col(y) = log_probs(market->firm_model, firm_inside_payoffs(market, wages, y));
  }
  return out;
}

template <class T = double>
ChoiceProbabilities<T> choice_probabilities(const ValidatedSpec& market, const Matrix<T>& wages) {
  auto out = choice_log_probabilities(market, wages);
  out.worker = out.worker.array().exp().matrix();
  out.firm = out.firm.array().exp().matrix();
  return out;
}

template <class T = double>
Matrix<T> worker_probs(const ValidatedSpec& market, const Matrix<T>& wages) {
  return choice_probabilities(market, wages).worker;
}

template <class T = double>
Matrix<T> firm_probs(const ValidatedSpec& market, const Matrix<T>& wages) {
  return choice_probabilities(market, wages).firm;
}

template <class T = double>
ElasticityTable<T> own_elasticities(const ValidatedSpec& market, const Matrix<T>& wages) {
  const Index nx = market.num_workers();
  const Index ny = market.num_firms();
  ElasticityTable<T> out{Matrix<T>(nx, ny + 1), Matrix<T>(nx + 1, ny)};
  for (Index x = 0; x < nx; ++x) {
    out.worker.row(x) = own_elasticities(market->worker_model, worker_inside_payoffs(market, wages, x)).transpose();
  }
  for (Index y = 0; y < ny; ++y) {
    out.firm.col(y) = own_elasticities(market->firm_model, firm_inside_payoffs(market, wages, y));
  }
  return out;
}

/// Finite-difference counterpart of `own_elasticities`.
template <class T = double>
ElasticityTable<T> own_elasticities_fd(const ValidatedSpec& market, const Matrix<T>& wages,
                                       T step = T(kElasticityStep)) {
  const Index nx = market.num_workers();
  const Index ny = market.num_firms();
  ElasticityTable<T> out{Matrix<T>(nx, ny + 1), Matrix<T>(nx + 1, ny)};
  for (Index x = 0; x < nx; ++x) {
    out.worker.row(x) =
        own_elasticities_fd(market->worker_model, worker_inside_payoffs(market, wages, x), step).transpose();
  }
  for (Index y = 0; y < ny; ++y) {
    out.firm.col(y) = own_elasticities_fd(market->firm_model, firm_inside_payoffs(market, wages, y), step);
  }
  return out;
}

// Double-precision entry points that also accept Eigen expressions.
inline ChoiceProbabilities<double> choice_log_probabilities(const ValidatedSpec& market, const WageMatrix& wages) {
  return choice_log_probabilities<double>(market, wages);
}

inline ChoiceProbabilities<double> choice_probabilities(const ValidatedSpec& market, const WageMatrix& wages) {
  return choice_probabilities<double>(market, wages);
}

inline ElasticityTable<double> own_elasticities(const ValidatedSpec& market, const WageMatrix& wages) {
  return own_elasticities<double>(market, wages);
}

}  // namespace tumatch
