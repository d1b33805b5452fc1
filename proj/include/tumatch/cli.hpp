// Command-line front end: `solve`, `diagnose`, `validate`.
//
// Exit codes: 0 success, 1 input or usage error, 2 solver did not converge
// (solve) or a check failed (validate).
#pragma once

#include "tumatch/diagnostics.hpp"
#include "tumatch/gev.hpp"
#include "tumatch/io.hpp"
#include "tumatch/oracle.hpp"
#include "tumatch/solver.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <ostream>
#include <string>

namespace tumatch::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInputError = 1;
inline constexpr int kExitNotConverged = 2;

namespace detail {

inline WageMatrix wages_from(const std::string& source, const ValidatedSpec& market) {
  if (source == "zeros") return WageMatrix::Zero(market.num_workers(), market.num_firms());
  WageMatrix w = load_wages(source);
  if (w.rows() != market.num_workers() || w.cols() != market.num_firms()) {
    throw SpecError("dimension mismatch: wages in '" + source + "' are " + std::to_string(w.rows()) + "x" +
                    std::to_string(w.cols()));
  }
  if (!w.allFinite()) throw SpecError("wages in '" + source + "' must be finite");
  return w;
}

inline Json scalars_json(const StepScalars& c) {
  return {{"worker", io_detail::matrix_json(c.worker)}, {"firm", io_detail::matrix_json(c.firm)}};
}

inline Json diagnostics_json(const DiagnosticsReport& r, const std::string& at) {
  double max_ratio = 0.0;
  for (double v : r.contraction_ratio_samples) max_ratio = std::max(max_ratio, v);
  Json samples = Json::array();
  for (double v : r.contraction_ratio_samples) samples.push_back(v);
  return {
      {"meta", {{"format_version", kFormatVersion}, {"at", at}}},
      {"jacobian_inf_norm", r.jacobian_inf_norm},
      {"contraction_ratio_samples", std::move(samples)},
      {"contraction_ratio_max", max_ratio},
      {"elasticity_bounds",
       {{"verdict", r.elasticity_bounds.verdict},
        {"min_margin", r.elasticity_bounds.min_margin},
        {"worker_margin", io_detail::matrix_json(r.elasticity_bounds.worker_margin)},
        {"firm_margin", io_detail::matrix_json(r.elasticity_bounds.firm_margin)},
        {"worker_product", io_detail::matrix_json(r.elasticity_bounds.worker_product)},
        {"firm_product", io_detail::matrix_json(r.elasticity_bounds.firm_product)}}},
      {"elasticities",
       {{"worker", io_detail::matrix_json(r.elasticities.worker)}, {"firm", io_detail::matrix_json(r.elasticities.firm)}}},
      {"elasticity_fd_gap", r.elasticity_fd_gap},
      {"step_scalars", scalars_json(r.step_scalars)},
      {"contraction_verified", r.elasticity_bounds.verdict && r.jacobian_inf_norm < 1.0 && max_ratio < 1.0},
  };
}

struct Check {
  std::string name;
  bool passed = false;
  Json detail;
};

/// Oracle checks applicable to one market, evaluated at its equilibrium.
inline std::vector<Check> run_validation(const ValidatedSpec& market, long draws, std::uint64_t seed) {
  std::vector<Check> checks;
  SolveOptions options;
  options.tolerance = 1e-12;
  const SolveResult result = solve(market, options);
  checks.push_back({"solve_converges",
                    result.converged && result.final_clearing_residual < 1e-9,
                    {{"iterations", result.iterations}, {"clearing_residual", result.final_clearing_residual}}});

  const WageMatrix& w = result.wages;
  if (market.num_workers() * market.num_firms() <= 4) {
    const WageMatrix oracle = brute_force_equilibrium(market);
    const double gap = (oracle - w).cwiseAbs().maxCoeff();
    checks.push_back({"brute_force_agreement", gap < 1e-7, {{"sup_norm_gap", gap}}});
  }

  // Monte Carlo of EV1 choices: one seeded stream per agent type.
  std::uint64_t stream = seed;
  auto mc_check = [&](const std::string& name, const Vector<double>& inside) {
    const McReport mc = mc_logit_probs(inside, draws, stream++);
    checks.push_back({name, mc.max_abs_gap <= mc.standard_error_bound,
                      {{"max_abs_gap", mc.max_abs_gap}, {"bound", mc.standard_error_bound}, {"draws", mc.draws},
                       {"seed", mc.seed}}});
  };
  if (std::holds_alternative<Logit>(market->worker_model)) {
    for (Index x = 0; x < market.num_workers(); ++x) {
      mc_check("monte_carlo_worker_" + std::to_string(x + 1), worker_inside_payoffs(market, w, x));
    }
  }
  if (std::holds_alternative<Logit>(market->firm_model)) {
    for (Index y = 0; y < market.num_firms(); ++y) {
      mc_check("monte_carlo_firm_" + std::to_string(y + 1), firm_inside_payoffs(market, w, y));
    }
  }

  // Generating-function probabilities against the closed forms.
  double gev_gap = 0.0;
  const auto worker_gen = make_generator(market->worker_model);
  const auto firm_gen = make_generator(market->firm_model);
  const auto closed = choice_probabilities(market, w);
  for (Index x = 0; x < market.num_workers(); ++x) {
    const Vector<double> p = gev_probs(*worker_gen, worker_inside_payoffs(market, w, x));
    gev_gap = std::max(gev_gap, (p - closed.worker.row(x).transpose()).cwiseAbs().maxCoeff());
  }
  for (Index y = 0; y < market.num_firms(); ++y) {
    const Vector<double> p = gev_probs(*firm_gen, firm_inside_payoffs(market, w, y));
    gev_gap = std::max(gev_gap, (p - closed.firm.col(y)).cwiseAbs().maxCoeff());
  }
  checks.push_back({"generating_function_probabilities", gev_gap < 1e-10, {{"max_abs_gap", gev_gap}}});

  const auto elasticity = check_bounded_elasticities(market, w);
  checks.push_back({"bounded_elasticities", elasticity.verdict, {{"min_margin", elasticity.min_margin}}});
  const double norm = infinity_norm(jacobian_fd(market, w));
  checks.push_back({"jacobian_norm_below_one", norm < 1.0, {{"jacobian_inf_norm", norm}}});
  return checks;
}

}  // namespace detail

/// Runs one CLI invocation. Output documents go to `out`, diagnostics and
/// usage text to `err`.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Equilibrium wages for one-to-one matching markets with transferable utility", "tumatch"};
  app.require_subcommand(1);

  std::string input;
  auto* solve_cmd = app.add_subcommand("solve", "Iterate the wage map to equilibrium and write a result file");
  double tolerance = 1e-10;
  long max_iterations = 100000;
  std::string init = "zeros";
  long trace_every = 0;
  std::string output;
  solve_cmd->add_option("--input", input, "Market document")->required();
  solve_cmd->add_option("--tol", tolerance, "Stop when the sup norm of the wage update is below this");
  solve_cmd->add_option("--max-iter", max_iterations, "Iteration cap");
  solve_cmd->add_option("--init", init, "Initial wages: 'zeros' or a document with a 'wages' matrix");
  solve_cmd->add_option("--trace", trace_every, "Record every n-th iteration in the trace (0 = off)");
  solve_cmd->add_option("--output", output, "Result document to write")->required();

  auto* diagnose_cmd = app.add_subcommand("diagnose", "Report contraction diagnostics at a wage matrix");
  std::string at = "zeros";
  int samples = 100;
  std::uint64_t seed = 0;
  diagnose_cmd->add_option("--input", input, "Market document")->required();
  diagnose_cmd->add_option("--at", at, "Wages: 'zeros' or a document with a 'wages' matrix");
  diagnose_cmd->add_option("--samples", samples, "Number of random wage pairs for contraction ratios");
  diagnose_cmd->add_option("--seed", seed, "Seed for the wage pairs");

  auto* validate_cmd = app.add_subcommand("validate", "Run the oracle checks that apply to a market");
  long draws = 1000000;
  validate_cmd->add_option("--input", input, "Market document")->required();
  validate_cmd->add_option("--draws", draws, "Monte Carlo draws per agent type");
  validate_cmd->add_option("--seed", seed, "Base seed for the Monte Carlo streams");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitInputError;
  }

  try {
    const auto document = load_market(input);
    const ValidatedSpec market = validate_spec(document.spec);

    if (*solve_cmd) {
      SolveOptions options;
      options.tolerance = tolerance;
      options.max_iterations = max_iterations;
      options.trace_every = trace_every;
      options.initial_wages = detail::wages_from(init, market);
      const SolveResult result = solve(market, options);
      save_result(output, result, echo_options(options, init));
      err << (result.converged ? "converged" : "did not converge") << " after " << result.iterations
          << " iterations; update norm " << io_detail::format_double(result.final_update_norm)
          << ", clearing residual " << io_detail::format_double(result.final_clearing_residual) << "\n";
      return result.converged ? kExitOk : kExitNotConverged;
    }
    if (*diagnose_cmd) {
      if (samples < 0) throw SpecError("--samples must be >= 0");
      const WageMatrix w = detail::wages_from(at, market);
      out << dump_document(detail::diagnostics_json(diagnose(market, w, samples, seed), at));
      return kExitOk;
    }
    if (draws < 1) throw SpecError("--draws must be >= 1");
    const auto checks = detail::run_validation(market, draws, seed);
    bool all = true;
    Json list = Json::array();
    for (const auto& c : checks) {
      all = all && c.passed;
      list.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    }
    out << dump_document({{"checks", std::move(list)}, {"passed", all}});
    return all ? kExitOk : kExitNotConverged;
  } catch (const SpecError& e) {
    err << "error: " << e.what() << "\n";
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
  } catch (const OracleError& e) {
    err << "error: " << e.what() << "\n";
  }
  return kExitInputError;
}

}  // namespace tumatch::cli
