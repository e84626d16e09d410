#pragma once

#include <string>
#include <vector>

#include "asyflexa/subproblem.hpp"

namespace asyflexa {
namespace oracle {

struct OracleResult {
  std::vector<double> minimizer;
  double objective = 0.0;
  std::string method;
  double certified_tol = 0.0;
  bool censored = false;
  std::uint64_t steps = 0;
};

struct OracleOptions {
  double tol = 1e-8;
  std::uint64_t max_steps = 2'000'000;
  double gamma = 0.9;
  double beta = 0.0;  // <= 0 selects L_f / 2
};

/// Synchronous full-sweep block SCA baseline (delta = 0, cyclic order).
/// The descent-direction logic here is written independently of the engine
/// and subproblem modules; only the problem evaluators are shared.
OracleResult reference_solve(const ProblemSpec& spec, const OracleOptions& opt);

/// One synchronous prox-linear block step, the oracle's own code path:
/// soft-threshold / clip / ball projection written inline.
void sync_block_step(const ProblemSpec& spec, int i, double gamma, double beta,
                     BlockVector& x);

/// Grid minimizer of the (surrogate-constrained) block subproblem; block
/// dimension <= 2 and a bounded feasible set are required.
std::vector<double> brute_force_best_response(const BestResponseRequest& req,
                                              double resolution);

}  // namespace oracle
}  // namespace asyflexa
