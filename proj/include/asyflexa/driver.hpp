#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "asyflexa/engine.hpp"
#include "asyflexa/generators.hpp"
#include "asyflexa/metrics.hpp"

namespace asyflexa {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitCensored = 2;

struct RunRequest {
  std::string problem_file;
  std::string engine = "sim";  // sim | threaded
  double gamma = 0.0;          // 0 = auto (0.9x the stepsize bound)
  std::string surrogate = "prox_linear";
  double beta = 0.0;           // 0 = 0.5 L_f
  std::uint64_t budget = 1000;
  double target_stationarity = 0.0;
  int metric_cadence = 0;
  std::uint64_t seed = 0;

  // scheduler (simulated engine)
  std::string scheduler_kind = "shared_uniform";
  std::uint32_t delta = 0;
  int scheduler_workers = 1;
  std::string delay_law = "uniform";  // constant|uniform|geometric|cost_proportional
  double delay_param = 0.5;

  // threaded engine
  int workers = 1;
  std::string access = "partitioned";  // partitioned | shared
  std::vector<double> block_cost;
  std::uint32_t delta_cap = 64;

  // inner subproblem solver
  double inner_tol = 1e-10;
  int inner_max_iters = 20000;
  double barrier_mu0 = 1.0;

  bool verify_feasible_each_step = false;
  std::string output_prefix;
};

/// Parses the run-config JSON (config keys mirror the RunRequest fields).
RunRequest parse_run_config(const std::string& json_text);

/// Runs, writes <prefix>.trace.csv, <prefix>.events.csv and
/// <prefix>.summary.json, and returns the exit code.
int execute_run(const RunRequest& req, const ProblemSpec* spec_override = nullptr,
                Trace* out = nullptr);

struct GenerateRequest {
  GeneratorSpec gen;
  std::string output;
};
int execute_generate(const GenerateRequest& req);

struct AnalyzeRequest {
  std::string what;  // descent | delays | kepsilon | speedup
  std::vector<std::string> trace_files;   // <prefix>.trace.csv paths
  std::vector<double> eps_levels;         // kepsilon
  double target = 1e-3;                   // speedup
  double alpha = 0.5;                     // kepsilon: C1/C2 trade-off knob
  std::string problem_file;               // kepsilon: F* via the oracle
  double f_star = std::numeric_limits<double>::quiet_NaN();
  std::string output;                     // report path (JSON); empty = stdout
};
int execute_analyze(const AnalyzeRequest& req);

struct OracleRequest {
  std::string problem_file;
  double tol = 1e-8;
  std::uint64_t max_steps = 2'000'000;
  std::string output;  // empty = stdout
};
int execute_oracle(const OracleRequest& req);

/// Sidecar paths derived from a trace path ("X.trace.csv").
std::string summary_path_for(const std::string& trace_path);
std::string events_path_for(const std::string& trace_path);

/// Summary constants needed to re-check a finished run.
struct RunSummaryInfo {
  double gamma = 0.0, beta = 0.0, c_strong = 0.0, lf = 0.0, f0 = 0.0;
  std::uint32_t delta = 0;
  int blocks = 0;
  int window = 1;
  double p_min = 1.0;
};
RunSummaryInfo read_summary_info(const std::string& summary_path);

}  // namespace asyflexa
