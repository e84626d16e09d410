#include <cstdio>
#include <fstream>
#include <sstream>

#include "CLI11.hpp"
#include "asyflexa/driver.hpp"

using namespace asyflexa;

int main(int argc, char** argv) {
  CLI::App app{"asyflexa: asynchronous block successive convex approximation"};
  app.require_subcommand(1);

  // generate -------------------------------------------------------------
  GenerateRequest gen;
  auto* cgen = app.add_subcommand("generate", "write a problem instance file");
  cgen->add_option("--kind", gen.gen.kind,
                   "lasso_dense|lasso_sparse_rows|dc_least_squares|ncc_ball_qp")
      ->required();
  cgen->add_option("--n", gen.gen.n, "total dimension");
  cgen->add_option("--blocks", gen.gen.blocks, "block count");
  cgen->add_option("--lambda", gen.gen.lambda, "relative l1 weight");
  cgen->add_option("--sparse-fraction", gen.gen.sparse_fraction,
                   "fraction of cheap blocks (lasso_sparse_rows)");
  cgen->add_option("--condition", gen.gen.condition, "conditioning target");
  cgen->add_option("--rank", gen.gen.rank, "Hessian rank (0 = full)");
  cgen->add_option("--seed", gen.gen.seed, "generator seed");
  cgen->add_option("--constraint-surrogate", gen.gen.constraint_surrogate,
                   "dc_split|descent_lemma (ncc_ball_qp)");
  cgen->add_option("--out", gen.output, "output problem JSON")->required();

  // run --------------------------------------------------------------------
  std::string config_path;
  RunRequest run;
  bool gamma_auto = false;
  auto* crun = app.add_subcommand("run", "execute a configured run");
  crun->add_option("--config", config_path, "run-config JSON (flags override)");
  crun->add_option("--problem", run.problem_file, "problem JSON");
  crun->add_option("--engine", run.engine, "sim|threaded");
  crun->add_option("--gamma", run.gamma, "stepsize (omit for auto)");
  crun->add_flag("--gamma-auto", gamma_auto, "force the 0.9x-bound stepsize");
  crun->add_option("--surrogate", run.surrogate,
                   "prox_linear|second_order|partial_convexity|dc_split");
  crun->add_option("--beta", run.beta, "surrogate beta (omit for 0.5 L_f)");
  crun->add_option("--budget", run.budget, "iteration budget");
  crun->add_option("--target", run.target_stationarity,
                   "stop when ||M_F|| falls below this");
  crun->add_option("--cadence", run.metric_cadence, "steps between M_F samples");
  crun->add_option("--seed", run.seed, "run seed");
  crun->add_option("--scheduler", run.scheduler_kind,
                   "cyclic|random_sequential|random_parallel|shared_uniform|"
                   "partitioned_shuffle");
  crun->add_option("--delta", run.delta, "max delay bound");
  crun->add_option("--scheduler-workers", run.scheduler_workers,
                   "worker count of the partitioned scheduler kinds");
  crun->add_option("--delay-law", run.delay_law,
                   "constant|uniform|geometric|cost_proportional");
  crun->add_option("--workers", run.workers, "threaded worker count");
  crun->add_option("--access", run.access, "partitioned|shared");
  crun->add_option("--delta-cap", run.delta_cap,
                   "declared delay bound for threaded validation");
  crun->add_option("--inner-tol", run.inner_tol, "subproblem solver tolerance");
  crun->add_option("--inner-max-iters", run.inner_max_iters,
                   "subproblem solver iteration cap");
  crun->add_option("--barrier-mu0", run.barrier_mu0,
                   "initial log-barrier weight");
  crun->add_flag("--verify-feasible", run.verify_feasible_each_step,
                 "check feasibility after every step (NCC)");
  crun->add_option("--out-prefix", run.output_prefix, "output file prefix");

  // analyze ----------------------------------------------------------------
  AnalyzeRequest ana;
  std::string eps_arg;
  auto* cana = app.add_subcommand("analyze", "reports over finished runs");
  cana->add_option("--what", ana.what, "descent|delays|kepsilon|speedup")
      ->required();
  cana->add_option("--trace", ana.trace_files, "trace CSV files")->required();
  cana->add_option("--eps", eps_arg, "comma-separated epsilon levels");
  cana->add_option("--alpha", ana.alpha, "C1/C2 trade-off constant in (0,1)");
  cana->add_option("--target", ana.target, "speedup stationarity target");
  cana->add_option("--problem", ana.problem_file,
                   "problem JSON (kepsilon: F* via the oracle)");
  cana->add_option("--fstar", ana.f_star, "known optimal value");
  cana->add_option("--out", ana.output, "report JSON path");

  // oracle -----------------------------------------------------------------
  OracleRequest orc;
  auto* corc = app.add_subcommand("oracle", "high-accuracy reference solve");
  corc->add_option("--problem", orc.problem_file, "problem JSON")->required();
  corc->add_option("--tol", orc.tol, "target stationarity");
  corc->add_option("--max-steps", orc.max_steps, "step budget");
  corc->add_option("--out", orc.output, "result JSON path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cgen->parsed()) return execute_generate(gen);
    if (crun->parsed()) {
      RunRequest req = run;
      if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) {
          std::fprintf(stderr, "cannot open %s\n", config_path.c_str());
          return kExitError;
        }
        std::stringstream ss;
        ss << in.rdbuf();
        req = parse_run_config(ss.str());
        // command-line flags override config values
        for (const auto* opt : crun->get_options()) {
          if (opt->count() == 0) continue;
          const std::string name = opt->get_name();
          if (name == "--problem") req.problem_file = run.problem_file;
          else if (name == "--engine") req.engine = run.engine;
          else if (name == "--gamma") req.gamma = run.gamma;
          else if (name == "--surrogate") req.surrogate = run.surrogate;
          else if (name == "--beta") req.beta = run.beta;
          else if (name == "--budget") req.budget = run.budget;
          else if (name == "--target")
            req.target_stationarity = run.target_stationarity;
          else if (name == "--cadence") req.metric_cadence = run.metric_cadence;
          else if (name == "--seed") req.seed = run.seed;
          else if (name == "--scheduler") req.scheduler_kind = run.scheduler_kind;
          else if (name == "--delta") req.delta = run.delta;
          else if (name == "--scheduler-workers")
            req.scheduler_workers = run.scheduler_workers;
          else if (name == "--delay-law") req.delay_law = run.delay_law;
          else if (name == "--workers") req.workers = run.workers;
          else if (name == "--access") req.access = run.access;
          else if (name == "--delta-cap") req.delta_cap = run.delta_cap;
          else if (name == "--inner-tol") req.inner_tol = run.inner_tol;
          else if (name == "--inner-max-iters")
            req.inner_max_iters = run.inner_max_iters;
          else if (name == "--barrier-mu0") req.barrier_mu0 = run.barrier_mu0;
          else if (name == "--verify-feasible")
            req.verify_feasible_each_step = run.verify_feasible_each_step;
          else if (name == "--out-prefix") req.output_prefix = run.output_prefix;
        }
      }
      if (gamma_auto) req.gamma = 0.0;
      if (req.problem_file.empty()) {
        std::fprintf(stderr, "run: --problem or a config problem_file needed\n");
        return kExitError;
      }
      return execute_run(req);
    }
    if (cana->parsed()) {
      if (!eps_arg.empty()) {
        std::stringstream ss(eps_arg);
        std::string cell;
        while (std::getline(ss, cell, ','))
          ana.eps_levels.push_back(std::stod(cell));
      }
      return execute_analyze(ana);
    }
    if (corc->parsed()) return execute_oracle(orc);
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return kExitError;
  }
  return kExitError;
}
