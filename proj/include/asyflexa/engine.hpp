#pragma once

#include <cstdint>
#include <deque>
#include <limits>
#include <string>
#include <vector>

#include "asyflexa/problem.hpp"
#include "asyflexa/scheduler.hpp"
#include "asyflexa/subproblem.hpp"

namespace asyflexa {

/// Ring buffer of the last `depth` full iterates, x^l = x^0 for l < 0.
class VersionedHistory {
 public:
  VersionedHistory(PartitionPtr part, std::uint32_t depth);

  void reset(const std::vector<double>& x0);
  void push(const std::vector<double>& x);  // stores x^{k+1}

  std::uint64_t current() const { return k_; }
  std::uint32_t depth() const { return depth_; }

  /// x^l, clamped to x^0 below zero; structural error once evicted.
  std::span<const double> iterate(std::int64_t l) const;

  /// Block j of the result comes from x^{k - d_j}.
  BlockVector compose(std::span<const std::uint32_t> d) const;

 private:
  PartitionPtr part_;
  std::uint32_t depth_;
  std::uint64_t k_ = 0;
  std::vector<std::vector<double>> ring_;
};

BlockVector compose_delayed_view(const VersionedHistory& hist,
                                 std::span<const std::uint32_t> d);

// ---------------------------------------------------------------------------

enum class EngineKind { kSimulated, kThreaded };

struct RunConfig {
  EngineKind engine = EngineKind::kSimulated;
  double gamma = 0.0;  // <= 0 selects 0.9x the stepsize bound
  SurrogateKind surrogate = SurrogateKind::kProxLinear;
  double beta = 0.0;   // <= 0 selects 0.5 * L_f
  std::uint64_t budget = 1000;
  double target_stationarity = 0.0;  // 0 = run the full budget
  int metric_cadence = 0;            // steps between M_F samples; 0 = final only
  std::uint64_t seed = 0;
  bool ncc = false;                  // solve with constraint surrogates
  bool verify_feasible_each_step = false;
  double feasibility_tol = 1e-9;
  bool record_iterates = false;  // keep x^{k+1} per step (tests only)
  InnerSolveOptions inner;

  // threaded engine
  int workers = 1;
  bool partitioned_access = true;    // false = all workers share all blocks
  std::vector<double> block_cost;    // artificial compute cost multipliers
  std::uint32_t delta_cap = 64;      // declared C1 bound for validation

  // simulated engine: delta for history depth / auto-gamma (duplicated from
  // the scheduler config so the engine is self-contained)
  std::uint32_t delta = 0;
};

double max_stepsize_bound(double c_strong, double lf, std::uint32_t delta);
double auto_gamma(double c_strong, double lf, std::uint32_t delta);

struct StepRecord {
  std::uint64_t k = 0;
  int worker = 0;
  int i = 0;
  std::uint32_t d_min = 0, d_max = 0;
  double step_norm = 0.0;  // ||x^(x~) - x_i^k||
  double F = 0.0;          // F(x^{k+1})
  double Ftilde = 0.0;     // Lyapunov value at x^{k+1}, ..., x^{k+1-delta}
  double MF = std::numeric_limits<double>::quiet_NaN();  // at cadence
  std::int64_t wall_ns = 0;  // threaded runs only
};

struct Trace {
  std::vector<StepRecord> steps;
  std::vector<ScheduleEvent> events;  // canonical (i^k, d^k); replayable
  std::vector<std::vector<double>> iterates;  // only when record_iterates
  std::vector<double> final_x;
  double F0 = 0.0;        // F(x^0) = Ftilde at k = 0
  double final_F = 0.0;
  double MF0 = std::numeric_limits<double>::quiet_NaN();  // ||M_F(x^0)||
  double final_MF = std::numeric_limits<double>::quiet_NaN();
  double gamma = 0.0, beta = 0.0, c_strong = 0.0, lf = 0.0;
  std::uint32_t delta = 0;
  SurrogateKind surrogate = SurrogateKind::kProxLinear;
  bool censored = false;  // target set but not reached within budget
  std::uint64_t feasibility_violations = 0;

  // threaded diagnostics
  std::uint64_t torn_reads = 0;
  double replay_max_abs_diff = 0.0;
  bool c1_unverifiable = false;
  std::string error;  // nonempty when a worker aborted the run
};

/// Deterministic single-thread execution of the draw/solve/relax update
/// loop, driven by a scheduler.
Trace run_simulated(const ProblemSpec& spec, const RunConfig& cfg,
                    Scheduler& sched);

/// Real shared-memory workers: per-block write locks, lock-free stale reads,
/// canonical delays reconstructed from per-block write stamps. Trace columns
/// (F, Ftilde, MF) are filled by replaying the recorded schedule through the
/// simulated engine; the final iterates must agree bit-for-bit.
Trace run_threaded(const ProblemSpec& spec, const RunConfig& cfg);

// run trace CSV: k,worker,i,d_min,d_max,step_norm,F,Ftilde,MF,wall_ns
void write_trace_csv(const std::string& path, const Trace& trace);
Trace read_trace_csv(const std::string& path);

}  // namespace asyflexa
