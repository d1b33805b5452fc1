// Choice probabilities from a GEV generating function g:
//
//   p_j = u_j * dg/du_j (u) / g(u),   u = exp(v), v_0 = 0.
//
// g is homogeneous of degree one, so u may be rescaled by exp(-max v) before
// evaluation without changing p or the gradient; log g picks the shift back up.
#pragma once

#include "tumatch/market.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tumatch {

/// u and the gradient span the full choice set, outside option at index 0.
class GevGenerator {
 public:
  virtual ~GevGenerator() = default;
  virtual double value(std::span<const double> u) const = 0;
  virtual void gradient(std::span<const double> u, std::span<double> grad) const = 0;
};

/// g(u) = sum_j u_j.
class LogitGenerator final : public GevGenerator {
 public:
  double value(std::span<const double> u) const override {
    double g = 0.0;
    for (double uj : u) g += uj;
    return g;
  }
  void gradient(std::span<const double>, std::span<double> grad) const override {
    std::fill(grad.begin(), grad.end(), 1.0);
  }
};

/// g(u) = u_0 + sum_k (sum_{j in B_k} u_j^{1/lambda_k})^{lambda_k}.
class NestedLogitGenerator final : public GevGenerator {
 public:
  explicit NestedLogitGenerator(NestedLogit model) : model_(std::move(model)) {}

  double value(std::span<const double> u) const override {
    const auto sums = nest_sums(u);
    double g = u[kOutside];
    for (Index k = 0; k < model_.lambda.size(); ++k) {
      g += std::pow(sums[static_cast<std::size_t>(k)], model_.lambda[k]);
    }
    return g;
  }

  void gradient(std::span<const double> u, std::span<double> grad) const override {
    const auto sums = nest_sums(u);
    grad[kOutside] = 1.0;
    for (std::size_t j = 0; j < model_.nest_of.size(); ++j) {
      const int k = model_.nest_of[j];
      const double lambda = model_.lambda[k];
      const double uj = u[static_cast<std::size_t>(alternative(static_cast<Index>(j)))];
      grad[static_cast<std::size_t>(alternative(static_cast<Index>(j)))] =
          std::pow(uj, 1.0 / lambda - 1.0) * std::pow(sums[static_cast<std::size_t>(k)], lambda - 1.0);
    }
  }

 private:
  std::vector<double> nest_sums(std::span<const double> u) const {
    std::vector<double> sums(static_cast<std::size_t>(model_.lambda.size()), 0.0);
    for (std::size_t j = 0; j < model_.nest_of.size(); ++j) {
      const int k = model_.nest_of[j];
      sums[static_cast<std::size_t>(k)] +=
          std::pow(u[static_cast<std::size_t>(alternative(static_cast<Index>(j)))], 1.0 / model_.lambda[k]);
    }
    return sums;
  }

  NestedLogit model_;
};

/// g(u) = u_0 + sum_m (sum_j alpha_jm u_j^{1/lambda_m})^{lambda_m}.
class GnlGenerator final : public GevGenerator {
 public:
  explicit GnlGenerator(GeneralizedNestedLogit model) : model_(std::move(model)) {}

  double value(std::span<const double> u) const override {
    const auto sums = nest_sums(u);
    double g = u[kOutside];
    for (Index m = 0; m < model_.lambda.size(); ++m) {
      if (sums[static_cast<std::size_t>(m)] > 0.0) g += std::pow(sums[static_cast<std::size_t>(m)], model_.lambda[m]);
    }
    return g;
  }

  void gradient(std::span<const double> u, std::span<double> grad) const override {
    const auto sums = nest_sums(u);
    const auto& alpha = model_.membership;
    grad[kOutside] = 1.0;
    for (Index j = 0; j < alpha.rows(); ++j) {
      const double uj = u[static_cast<std::size_t>(alternative(j))];
      double d = 0.0;
      for (Index m = 0; m < alpha.cols(); ++m) {
        if (!(alpha(j, m) > 0.0)) continue;
        const double lambda = model_.lambda[m];
        d += alpha(j, m) * std::pow(uj, 1.0 / lambda - 1.0) *
             std::pow(sums[static_cast<std::size_t>(m)], lambda - 1.0);
      }
      grad[static_cast<std::size_t>(alternative(j))] = d;
    }
  }

 private:
  std::vector<double> nest_sums(std::span<const double> u) const {
    const auto& alpha = model_.membership;
    std::vector<double> sums(static_cast<std::size_t>(alpha.cols()), 0.0);
    for (Index m = 0; m < alpha.cols(); ++m) {
      for (Index j = 0; j < alpha.rows(); ++j) {
        if (alpha(j, m) > 0.0) {
          sums[static_cast<std::size_t>(m)] +=
              alpha(j, m) * std::pow(u[static_cast<std::size_t>(alternative(j))], 1.0 / model_.lambda[m]);
        }
      }
    }
    return sums;
  }

  GeneralizedNestedLogit model_;
};

inline std::unique_ptr<GevGenerator> make_generator(const ChoiceModel& model) {
  if (const auto* nl = std::get_if<NestedLogit>(&model)) return std::make_unique<NestedLogitGenerator>(*nl);
  if (const auto* gnl = std::get_if<GeneralizedNestedLogit>(&model)) return std::make_unique<GnlGenerator>(*gnl);
  return std::make_unique<LogitGenerator>();
}

/// log g(exp(v)) and log dg/du_j at exp(v) over the full choice set.
struct GevLogTerms {
  double log_g = 0.0;
  std::vector<double> log_gradient;
};

inline GevLogTerms gev_log_terms(const GevGenerator& generator, std::span<const double> inside) {
  const std::size_t n = inside.size() + 1;
  double shift = 0.0;
  for (double v : inside) {
    if (!std::isfinite(v)) throw NumericalError("non-finite scaled payoff in GEV evaluation");
    shift = std::max(shift, v);
  }
  std::vector<double> u(n);
  u[kOutside] = std::exp(-shift);
  for (std::size_t j = 0; j < inside.size(); ++j) u[j + 1] = std::exp(inside[j] - shift);

  const double g = generator.value(u);
  if (!(g > 0.0) || !std::isfinite(g)) throw NumericalError("GEV generator returned non-positive g");
  std::vector<double> grad(n);
  generator.gradient(u, grad);

  GevLogTerms out{shift + std::log(g), std::vector<double>(n)};
  for (std::size_t j = 0; j < n; ++j) {
    if (!(grad[j] > 0.0) || !std::isfinite(grad[j])) {
      throw NumericalError("GEV generator gradient is non-positive at alternative " + std::to_string(j));
    }
    // The gradient is homogeneous of degree zero: no shift correction.
    out.log_gradient[j] = std::log(grad[j]);
  }
  return out;
}

inline Vector<double> gev_probs(const GevGenerator& generator, const Vector<double>& inside) {
  const auto terms = gev_log_terms(generator, std::span<const double>(inside.data(), static_cast<std::size_t>(inside.size())));
  Vector<double> out(inside.size() + 1);
  out[kOutside] = std::exp(terms.log_gradient[0] - terms.log_g);
  for (Index j = 0; j < inside.size(); ++j) {
    out[alternative(j)] = std::exp(inside[j] + terms.log_gradient[static_cast<std::size_t>(alternative(j))] - terms.log_g);
  }
  return out;
}

}  // namespace tumatch
