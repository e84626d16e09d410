#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "asyflexa/engine.hpp"
#include "asyflexa/problem.hpp"

namespace asyflexa {

/// ||M_F(x)||_2 with M_F(x) = x - argmin_{y in X} grad f(x)'(y-x) + g(y)
/// + 1/2 ||y-x||^2, computed blockwise via the unit-step prox-projection.
double stationarity(const ProblemSpec& spec, const BlockVector& x);

/// Constrained analogue over K_1(x_1) x ... x K_N(x_N) (surrogate sets built
/// at x); requires feasible x.
double stationarity_ncc(const ProblemSpec& spec, const BlockVector& x,
                        double inner_tol = 1e-10);

/// Lyapunov value from the window x^{k-delta}..x^k (oldest first).
double lyapunov(const std::vector<std::vector<double>>& window,
                const ProblemSpec& spec, std::uint32_t delta, double lf);

struct TheoryConstants {
  double c_strong = 0.0;  // c_f~
  double lf = 0.0;
  double lip_base = 0.0;   // L_B
  double lip_inner = 0.0;  // L_E
  double lg = 0.0;
  std::uint32_t delta = 0;
  int window = 1;          // T
  double p_min = 1.0;
  double alpha = 0.5;
  double gamma = 0.0;
  int blocks_n = 1;        // N
};

/// Complexity constants C1, C2; domain error when gamma is at or above the
/// stepsize bound or alpha is outside (0, 1).
std::pair<double, double> complexity_constants(const TheoryConstants& tc);

struct DescentReport {
  std::uint64_t checked = 0;
  std::uint64_t violations = 0;
  double min_slack = 0.0;
  double tol = 0.0;
  bool pass = false;
};

/// Per-step check of the per-realization Lyapunov descent inequality,
/// reconstructed from the trace's F and step_norm columns.
DescentReport check_lyapunov_descent(const Trace& trace,
                                     const ProblemSpec& spec,
                                     const TheoryConstants& tc,
                                     double tol = -1.0);

struct DelayReport {
  double avg_delay = 0.0;       // mean over components and events
  std::uint32_t max_delay = 0;  // empirical delta
  std::vector<double> per_block_avg;  // grouped by the updated block
  std::vector<std::uint64_t> updates_per_block;
  int window_bound = 0;  // C = max_{i,k} M_i^k over the trace
};

DelayReport delay_stats(const std::vector<ScheduleEvent>& events, int blocks,
                        std::uint32_t delta, int window);

struct KEpsilonRow {
  double epsilon = 0.0;
  std::uint64_t k_empirical = 0;
  bool censored = false;
  double k_bound = 0.0;  // worst-case bound with C = delta
};

struct KEpsilonTable {
  std::vector<KEpsilonRow> rows;
  double loglog_slope = 0.0;  // fit of log K vs log(1/eps)
};

/// Seed-averaged ||M_F||^2 first-hitting indices; traces must share the
/// metric cadence. The theoretical bound uses F(x^0) - F* from `f_star`.
KEpsilonTable k_epsilon(const std::vector<Trace>& traces,
                        const std::vector<double>& eps_levels,
                        const TheoryConstants& tc, double f0, double f_star);

struct SpeedupRow {
  int workers = 0;
  double seconds_to_target = 0.0;
  bool censored = false;
  double speedup = 0.0;
  double efficiency = 0.0;
};

std::vector<SpeedupRow> speedup_report(const std::vector<Trace>& traces,
                                       const std::vector<int>& worker_counts,
                                       double target);

}  // namespace asyflexa
