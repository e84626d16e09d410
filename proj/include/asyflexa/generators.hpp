#pragma once

#include <cstdint>
#include <string>

#include "asyflexa/problem.hpp"

namespace asyflexa {

struct GeneratorSpec {
  std::string kind;  // lasso_dense | lasso_sparse_rows | dc_least_squares |
                     // ncc_ball_qp
  int n = 100;
  int blocks = 10;
  double lambda = 0.1;          // relative l1 weight (fraction of max |q|)
  double sparse_fraction = 0.5; // lasso_sparse_rows: fraction of cheap blocks
  double condition = 10.0;      // singular-value spread target
  int rank = 0;                 // 0 = full rank; < n gives a singular Hessian
  std::string spectrum = "factor";  // factor (B'B) | harmonic (1/j spectrum)
  std::uint64_t seed = 0;
  std::string constraint_surrogate = "dc_split";  // ncc_ball_qp
};

ProblemSpec generate_problem(const GeneratorSpec& g);

ProblemSpec make_lasso_dense(int n, int blocks, double lambda, double condition,
                             int rank, std::uint64_t seed,
                             const std::string& spectrum = "factor");
ProblemSpec make_lasso_sparse_rows(int n, int blocks, double lambda,
                                   double sparse_fraction, std::uint64_t seed);
ProblemSpec make_dc_least_squares(int n, int blocks, double lambda,
                                  std::uint64_t seed);
ProblemSpec make_ncc_ball_qp(int n, int blocks, ConstraintSurrogateKind kind,
                             std::uint64_t seed);

// Problem files (JSON, matrices inline dense or as {rows, cols, vals}).
void write_problem_json(const std::string& path, const ProblemSpec& spec);
ProblemSpec read_problem_json(const std::string& path);
std::string problem_to_json_string(const ProblemSpec& spec);
ProblemSpec problem_from_json_string(const std::string& text);

// Validation helpers shared by the generators and the test suites.
double max_grad_fd_error(const ProblemSpec& spec, const BlockVector& x,
                         double h = 1e-5);
void validate_instance(const ProblemSpec& spec, int probes,
                       std::uint64_t seed);

}  // namespace asyflexa
