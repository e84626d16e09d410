#pragma once

#include <optional>
#include <span>
#include <vector>

#include "asyflexa/surrogate.hpp"

namespace asyflexa {

struct InnerSolveOptions {
  double tol = 1e-10;        // scaled by (1 + ||grad f~(x~_i)||) at solve time
  int max_iters = 20000;
  double feas_tol = 1e-9;    // surrogate-constraint feasibility (NCC)
  double barrier_mu0 = 1.0;  // initial log-barrier weight (NCC general shapes)
};

/// One block subproblem: minimize f~(z; x~) + g(z) over X_i (optionally
/// intersected with constraint surrogates built at the block's current
/// value). The delayed view x~ satisfies x~_i = x_i^k (C3).
struct BestResponseRequest {
  int block = 0;
  const BlockVector* delayed_view = nullptr;   // x^{k-d}
  const SurrogateModel* surrogate = nullptr;   // built at *delayed_view
  const Regularizer* reg = nullptr;
  const BlockSet* set = nullptr;
  const std::vector<ConstraintSurrogate>* constraint_surrogates = nullptr;
  InnerSolveOptions options;
  const std::vector<double>* start = nullptr;  // inner-solver warm start
};

struct BestResponseResult {
  std::vector<double> point;
  double residual = 0.0;   // prox-gradient fixed-point residual
  int iterations = 0;      // 0 on a closed-form path
  bool closed_form = false;
};

BestResponseResult best_response(const BestResponseRequest& req);
BestResponseResult best_response_ncc(const BestResponseRequest& req);

/// Optimality residual ||z - prox_{t(g+X)}(z - t grad f~(z))||, t = 1/(c+L_E).
double best_response_residual(const BestResponseRequest& req,
                              std::span<const double> z);

// ---------------------------------------------------------------------------
// Empirical verification of the best-response map properties
// (descent inequality, Lipschitz / Hoelder-1/2 continuity).
// ---------------------------------------------------------------------------

struct PropertyReport {
  int trials = 0;
  int descent_violations = 0;   // beyond tolerance
  double descent_min_margin = 0.0;  // min over trials of RHS - LHS
  double max_lipschitz_ratio = 0.0; // convex case: vs ||y-z||
  double fitted_holder_const = 0.0; // NCC case: max ratio vs ||y-z||^{1/2}
  double declared_ratio_bound = 0.0;  // L_B / c_f~
  bool pass = false;
};

PropertyReport verify_best_response_properties(const ProblemSpec& spec,
                                               SurrogateKind kind, int trials,
                                               std::uint64_t seed,
                                               double beta = 0.0,
                                               double tol = 1e-9,
                                               double ratio_slack = 1.05);

}  // namespace asyflexa
