// Market primitives for one-to-one matching with linear transferable utility.
//
// Index conventions. Worker types x and firm types y are stored 0-based in
// every matrix (W(x, y) is the wage of a type-(x+1), type-(y+1) match in the
// 1-based math). Choice sets carry the outside option explicitly at index 0:
// a worker's alternatives are {0, 1, ..., |Y|} and alternative y >= 1 is firm
// storage column y - 1. `alternative()` and `storage()` below are the only
// place this shift is spelled out.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace tumatch {

using Index = Eigen::Index;

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using WageMatrix = Matrix<double>;

inline constexpr Index kOutside = 0;

/// Choice-set index of the inside alternative stored at `storage_index`.
constexpr Index alternative(Index storage_index) { return storage_index + 1; }
/// Storage index of inside alternative `alt` (alt >= 1).
constexpr Index storage(Index alt) { return alt - 1; }

class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A non-finite value appeared where the model guarantees finite ones.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Logit {};

/// Mutually exclusive nests over the inside alternatives. The outside option
/// sits in its own implicit degenerate nest.
struct NestedLogit {
  std::vector<int> nest_of;  // inside alternative (storage order) -> nest, 0-based
  Vector<double> lambda;     // one nesting parameter per nest, in (0, 1]
};

/// Each inside alternative belongs to every nest with weight alpha >= 0,
/// rows of `membership` summing to one.
struct GeneralizedNestedLogit {
  Matrix<double> membership;  // (inside alternatives) x (nests)
  Vector<double> lambda;
};

using ChoiceModel = std::variant<Logit, NestedLogit, GeneralizedNestedLogit>;

inline std::string model_name(const ChoiceModel& model) {
  switch (model.index()) {
    case 0: return "logit";
    case 1: return "nested_logit";
    default: return "generalized_nested_logit";
  }
}

struct MarketSpec {
  Vector<double> worker_mass;
  Vector<double> firm_mass;
  Matrix<double> worker_utility;     // |X| x |Y|
  Matrix<double> firm_productivity;  // |X| x |Y|
  Vector<double> worker_scale;
  Vector<double> firm_scale;
  // Marginal utility of wages; empty means all ones.
  Vector<double> worker_wage_sensitivity;
  Vector<double> firm_wage_sensitivity;
  ChoiceModel worker_model = Logit{};
  ChoiceModel firm_model = Logit{};

  Index num_worker_types() const { return worker_mass.size(); }
  Index num_firm_types() const { return firm_mass.size(); }
};

class ValidatedSpec;
ValidatedSpec validate_spec(MarketSpec spec);

/// A market whose invariants have been checked. Immutable; only
/// `validate_spec` constructs one.
class ValidatedSpec {
 public:
  const MarketSpec& spec() const { return spec_; }
  const MarketSpec* operator->() const { return &spec_; }

  Index num_workers() const { return spec_.worker_mass.size(); }
  Index num_firms() const { return spec_.firm_mass.size(); }

 private:
  explicit ValidatedSpec(MarketSpec spec) : spec_(std::move(spec)) {}
  friend ValidatedSpec validate_spec(MarketSpec spec);

  MarketSpec spec_;
};

namespace detail {

inline std::string at(const std::string& field, Index i) {
  return field + "[" + std::to_string(i + 1) + "]";
}

[[noreturn]] inline void fail(const std::string& message) { throw SpecError(message); }

inline void require_length(const std::string& field, Index actual, Index expected) {
  if (actual != expected) {
    fail("dimension mismatch: " + field + " has length " + std::to_string(actual) +
         ", expected " + std::to_string(expected));
  }
}

inline void require_positive(const std::string& field, const Vector<double>& v) {
  for (Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) fail(at(field, i) + " must be finite");
    if (!(v[i] > 0.0)) fail(at(field, i) + " must be > 0");
  }
}

inline void require_finite(const std::string& field, const Matrix<double>& m) {
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      if (!std::isfinite(m(r, c))) {
        fail(field + "[" + std::to_string(r + 1) + "][" + std::to_string(c + 1) +
             "] must be finite");
      }
    }
  }
}

inline void require_lambda(const std::string& field, const Vector<double>& lambda) {
  if (lambda.size() < 1) fail(field + ".lambda must have at least one nest");
  for (Index k = 0; k < lambda.size(); ++k) {
    if (!(lambda[k] > 0.0 && lambda[k] <= 1.0)) {
      std::ostringstream os;
      os << "lambda out of (0,1] at " << at(field + ".lambda", k) << " (got " << lambda[k]
         << ")";
      fail(os.str());
    }
  }
}

inline constexpr double kMembershipTolerance = 1e-9;

inline void validate_model(const std::string& field, ChoiceModel& model, Index num_alternatives) {
  if (auto* nl = std::get_if<NestedLogit>(&model)) {
    require_lambda(field, nl->lambda);
    require_length(field + ".nest_of", static_cast<Index>(nl->nest_of.size()), num_alternatives);
    const Index num_nests = nl->lambda.size();
    std::vector<int> members(static_cast<std::size_t>(num_nests), 0);
    for (std::size_t j = 0; j < nl->nest_of.size(); ++j) {
      const int k = nl->nest_of[j];
      if (k < 0 || k >= num_nests) {
        fail(at(field + ".nest_of", static_cast<Index>(j)) + " refers to nest " +
             std::to_string(k + 1) + ", outside 1.." + std::to_string(num_nests));
      }
      ++members[static_cast<std::size_t>(k)];
    }
    for (Index k = 0; k < num_nests; ++k) {
      if (members[static_cast<std::size_t>(k)] == 0) {
        fail("empty nest: " + at(field + ".lambda", k) + " has no alternatives");
      }
    }
  } else if (auto* gnl = std::get_if<GeneralizedNestedLogit>(&model)) {
    require_lambda(field, gnl->lambda);
    auto& alpha = gnl->membership;
    require_length(field + ".membership rows", alpha.rows(), num_alternatives);
    require_length(field + ".membership columns", alpha.cols(), gnl->lambda.size());
    for (Index j = 0; j < alpha.rows(); ++j) {
      double row_sum = 0.0;
      for (Index k = 0; k < alpha.cols(); ++k) {
        const double a = alpha(j, k);
        if (!std::isfinite(a) || a < 0.0) {
          fail(field + ".membership[" + std::to_string(j + 1) + "][" + std::to_string(k + 1) +
               "] must be finite and >= 0");
        }
        row_sum += a;
      }
      if (std::abs(row_sum - 1.0) > kMembershipTolerance) {
        std::ostringstream os;
        os.precision(17);
        os << "membership row sum off by more than 1e-9 at " << at(field + ".membership", j)
           << " (sum " << row_sum << ")";
        fail(os.str());
      }
      alpha.row(j) /= row_sum;
    }
  }
}

}  // namespace detail

/// Checks every market invariant. Fills default wage sensitivities and
/// renormalizes generalized-nested-logit membership rows that are within
/// 1e-9 of summing to one; rejects anything else with a message naming the
/// field and 1-based index.
inline ValidatedSpec validate_spec(MarketSpec spec) {
  using namespace detail;
  const Index nx = spec.worker_mass.size();
  const Index ny = spec.firm_mass.size();
  if (nx < 1) fail("dimension mismatch: worker_mass must have at least one type");
  if (ny < 1) fail("dimension mismatch: firm_mass must have at least one type");

  if (spec.worker_wage_sensitivity.size() == 0) spec.worker_wage_sensitivity = Vector<double>::Ones(nx);
  if (spec.firm_wage_sensitivity.size() == 0) spec.firm_wage_sensitivity = Vector<double>::Ones(ny);

  require_length("worker_scale", spec.worker_scale.size(), nx);
  require_length("firm_scale", spec.firm_scale.size(), ny);
  require_length("worker_wage_sensitivity", spec.worker_wage_sensitivity.size(), nx);
  require_length("firm_wage_sensitivity", spec.firm_wage_sensitivity.size(), ny);
  for (const auto& [name, m] : {std::pair{"worker_utility", &spec.worker_utility},
                                std::pair{"firm_productivity", &spec.firm_productivity}}) {
    if (m->rows() != nx || m->cols() != ny) {
      fail(std::string("dimension mismatch: ") + name + " is " + std::to_string(m->rows()) + "x" +
           std::to_string(m->cols()) + ", expected " + std::to_string(nx) + "x" +
           std::to_string(ny));
    }
    require_finite(name, *m);
  }

  require_positive("worker_mass", spec.worker_mass);
  require_positive("firm_mass", spec.firm_mass);
  require_positive("worker_scale", spec.worker_scale);
  require_positive("firm_scale", spec.firm_scale);
  require_positive("worker_wage_sensitivity", spec.worker_wage_sensitivity);
  require_positive("firm_wage_sensitivity", spec.firm_wage_sensitivity);

  // Workers choose among firm types, firms among worker types.
  validate_model("worker_model", spec.worker_model, ny);
  validate_model("firm_model", spec.firm_model, nx);

  return ValidatedSpec(std::move(spec));
}

/// Scaled deterministic payoffs. `worker` is |X| x (|Y|+1) and `firm` is
/// (|X|+1) x |Y|; the outside-option column/row at index 0 is identically zero.
template <class T>
struct ScaledPayoffs {
  Matrix<T> worker;
  Matrix<T> firm;
};

template <class T = double>
ScaledPayoffs<T> scaled_payoffs(const ValidatedSpec& market, const Matrix<T>& wages) {
  const auto& s = market.spec();
  const Index nx = market.num_workers();
  const Index ny = market.num_firms();
  ScaledPayoffs<T> out{Matrix<T>::Zero(nx, ny + 1), Matrix<T>::Zero(nx + 1, ny)};
  for (Index x = 0; x < nx; ++x) {
    for (Index y = 0; y < ny; ++y) {
      const T w = wages(x, y);
      out.worker(x, alternative(y)) =
          (T(s.worker_utility(x, y)) + T(s.worker_wage_sensitivity[x]) * w) / T(s.worker_scale[x]);
      out.firm(alternative(x), y) =
          (T(s.firm_productivity(x, y)) - T(s.firm_wage_sensitivity[y]) * w) / T(s.firm_scale[y]);
    }
  }
  return out;
}

inline ScaledPayoffs<double> scaled_payoffs(const ValidatedSpec& market, const WageMatrix& wages) {
  return scaled_payoffs<double>(market, wages);
}

/// Worker x's inside scaled payoffs (length |Y|).
template <class T>
Vector<T> worker_inside_payoffs(const ValidatedSpec& market, const Matrix<T>& wages, Index x) {
  const auto& s = market.spec();
  Vector<T> v(market.num_firms());
  for (Index y = 0; y < v.size(); ++y) {
    v[y] = (T(s.worker_utility(x, y)) + T(s.worker_wage_sensitivity[x]) * wages(x, y)) /
           T(s.worker_scale[x]);
  }
  return v;
}

/// Firm y's inside scaled payoffs (length |X|).
template <class T>
Vector<T> firm_inside_payoffs(const ValidatedSpec& market, const Matrix<T>& wages, Index y) {
  const auto& s = market.spec();
  Vector<T> v(market.num_workers());
  for (Index x = 0; x < v.size(); ++x) {
    v[x] = (T(s.firm_productivity(x, y)) - T(s.firm_wage_sensitivity[y]) * wages(x, y)) /
           T(s.firm_scale[y]);
  }
  return v;
}

}  // namespace tumatch
