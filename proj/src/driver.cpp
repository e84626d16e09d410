#include "asyflexa/driver.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "asyflexa/oracle.hpp"
#include "json.hpp"

namespace asyflexa {

namespace {

using nlohmann::json;

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw StructuralError("cannot open " + path);
  json j;
  in >> j;
  return j;
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw StructuralError("cannot open " + path);
  out << j.dump(2) << "\n";
}

DelayLawKind delay_law_from_string(const std::string& s) {
  if (s == "constant") return DelayLawKind::kConstant;
  if (s == "uniform") return DelayLawKind::kUniform;
  if (s == "geometric") return DelayLawKind::kGeometric;
  if (s == "cost_proportional") return DelayLawKind::kCostProportional;
  throw StructuralError("unknown delay law: " + s);
}

}  // namespace

RunRequest parse_run_config(const std::string& json_text) {
  json j = json::parse(json_text);
  RunRequest req;
  req.problem_file = j.value("problem_file", req.problem_file);
  req.engine = j.value("engine", req.engine);
  if (j.contains("gamma") && !j.at("gamma").is_string())
    req.gamma = j.at("gamma").get<double>();  // "auto" keeps 0
  if (j.contains("surrogate")) {
    const auto& s = j.at("surrogate");
    if (s.is_string()) {
      req.surrogate = s.get<std::string>();
    } else {
      req.surrogate = s.value("kind", req.surrogate);
      if (s.contains("beta") && !s.at("beta").is_string())
        req.beta = s.at("beta").get<double>();
    }
  }
  req.budget = j.value("budget", req.budget);
  req.target_stationarity =
      j.value("target_stationarity", req.target_stationarity);
  req.metric_cadence = j.value("metric_cadence", req.metric_cadence);
  req.seed = j.value("seed", req.seed);
  if (j.contains("scheduler")) {
    const auto& s = j.at("scheduler");
    req.scheduler_kind = s.value("kind", req.scheduler_kind);
    req.delta = s.value("delta", req.delta);
    req.scheduler_workers = s.value("workers", req.scheduler_workers);
    if (s.contains("delay_law")) {
      const auto& dl = s.at("delay_law");
      if (dl.is_string()) {
        req.delay_law = dl.get<std::string>();
      } else {
        req.delay_law = dl.value("kind", req.delay_law);
        req.delay_param = dl.value("param", req.delay_param);
      }
    }
  }
  if (j.contains("workers")) {
    const auto& w = j.at("workers");
    if (w.is_number()) {
      req.workers = w.get<int>();
    } else {
      req.workers = w.value("count", req.workers);
      req.access = w.value("access", req.access);
      if (w.contains("cost_model") && w.at("cost_model").is_array())
        req.block_cost = w.at("cost_model").get<std::vector<double>>();
      req.delta_cap = w.value("delta_cap", req.delta_cap);
    }
  }
  req.inner_tol = j.value("inner_tol", req.inner_tol);
  req.inner_max_iters = j.value("inner_max_iters", req.inner_max_iters);
  req.barrier_mu0 = j.value("barrier_mu0", req.barrier_mu0);
  req.verify_feasible_each_step =
      j.value("verify_feasible_each_step", req.verify_feasible_each_step);
  req.output_prefix = j.value("output_prefix", req.output_prefix);
  return req;
}

std::string summary_path_for(const std::string& trace_path) {
  const std::string suffix = ".trace.csv";
  if (trace_path.size() > suffix.size() &&
      trace_path.compare(trace_path.size() - suffix.size(), suffix.size(),
                         suffix) == 0)
    return trace_path.substr(0, trace_path.size() - suffix.size()) +
           ".summary.json";
  return trace_path + ".summary.json";
}

std::string events_path_for(const std::string& trace_path) {
  const std::string suffix = ".trace.csv";
  if (trace_path.size() > suffix.size() &&
      trace_path.compare(trace_path.size() - suffix.size(), suffix.size(),
                         suffix) == 0)
    return trace_path.substr(0, trace_path.size() - suffix.size()) +
           ".events.csv";
  return trace_path + ".events.csv";
}

int execute_run(const RunRequest& req, const ProblemSpec* spec_override,
                Trace* out) {
  ProblemSpec spec = spec_override != nullptr
                         ? *spec_override
                         : read_problem_json(req.problem_file);

  RunConfig cfg;
  cfg.gamma = req.gamma;
  cfg.surrogate = surrogate_kind_from_string(req.surrogate);
  cfg.beta = req.beta;
  cfg.budget = req.budget;
  cfg.target_stationarity = req.target_stationarity;
  cfg.metric_cadence = req.metric_cadence;
  cfg.seed = req.seed;
  cfg.ncc = spec.has_constraints();
  cfg.verify_feasible_each_step = req.verify_feasible_each_step;
  cfg.delta = req.delta;
  cfg.delta_cap = req.delta_cap;
  cfg.inner.tol = req.inner_tol;
  cfg.inner.max_iters = req.inner_max_iters;
  cfg.inner.barrier_mu0 = req.barrier_mu0;

  SchedulerConfig scfg;
  scfg.kind = scheduler_kind_from_string(req.scheduler_kind);
  scfg.blocks = spec.blocks();
  scfg.delta = req.delta;
  scfg.workers = req.scheduler_workers;
  scfg.seed = req.seed;
  scfg.delay_law.kind = delay_law_from_string(req.delay_law);
  scfg.delay_law.param = req.delay_param;
  if (scfg.delay_law.kind == DelayLawKind::kCostProportional) {
    scfg.delay_law.block_cost.assign(spec.blocks(), 1.0);
    if (const auto* sq = dynamic_cast<const SparseQuadraticSmooth*>(
            spec.smooth.get()))
      for (int b = 0; b < spec.blocks(); ++b)
        scfg.delay_law.block_cost[b] = static_cast<double>(sq->block_nnz(b));
  }

  Trace trace;
  int code = kExitOk;
  try {
    if (req.engine == "sim") {
      auto sched = make_scheduler(scfg);
      trace = run_simulated(spec, cfg, *sched);
    } else if (req.engine == "threaded") {
      cfg.engine = EngineKind::kThreaded;
      cfg.workers = req.workers;
      if (const char* cap = std::getenv("ASYFLEXA_THREADS")) {
        const int c = std::atoi(cap);
        if (c > 0) cfg.workers = std::min(cfg.workers, c);
      }
      cfg.partitioned_access = req.access != "shared";
      cfg.block_cost = req.block_cost;
      trace = run_threaded(spec, cfg);
    } else {
      throw StructuralError("unknown engine: " + req.engine);
    }
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "run failed: %s\n", ex.what());
    return kExitError;
  }
  if (!trace.error.empty()) {
    std::fprintf(stderr, "run aborted: %s\n", trace.error.c_str());
    code = kExitError;
  } else if (trace.censored) {
    code = kExitCensored;
  }

  if (!req.output_prefix.empty()) {
    write_trace_csv(req.output_prefix + ".trace.csv", trace);
    write_events_csv(req.output_prefix + ".events.csv", trace.events);

    SchedulerConfig vcfg = scfg;
    vcfg.finalize();
    if (req.engine == "threaded") vcfg.delta = cfg.delta_cap;
    json summary;
    summary["problem"] = spec.name;
    summary["engine"] = req.engine;
    summary["surrogate"] = to_string(trace.surrogate);
    summary["gamma"] = trace.gamma;
    summary["beta"] = trace.beta;
    summary["c_strong"] = trace.c_strong;
    summary["L_f"] = trace.lf;
    summary["delta"] = trace.delta;
    summary["blocks"] = spec.blocks();
    summary["n"] = spec.dim();
    summary["seed"] = req.seed;
    summary["budget"] = req.budget;
    summary["steps"] = trace.steps.size();
    summary["F0"] = trace.F0;
    summary["final_F"] = trace.final_F;
    summary["final_MF"] = trace.final_MF;
    summary["censored"] = trace.censored;
    summary["window_T"] = vcfg.window;
    summary["p_min"] = vcfg.p_min;
    if (spec.has_constraints())
      summary["feasibility_violations"] = trace.feasibility_violations;
    if (!trace.events.empty()) {
      auto val = validate_trace(trace.events, vcfg);
      summary["max_delay"] = val.max_delay;
      summary["c1_violations"] = val.c1_violations;
      summary["c3_violations"] = val.c3_violations;
      auto ds = delay_stats(trace.events, spec.blocks(), trace.delta,
                            vcfg.window);
      summary["avg_delay"] = ds.avg_delay;
      summary["window_bound_C"] = ds.window_bound;
    }
    if (req.engine == "threaded") {
      summary["workers"] = cfg.workers;
      summary["torn_reads"] = trace.torn_reads;
      summary["replay_max_abs_diff"] = trace.replay_max_abs_diff;
      summary["c1_unverifiable"] = trace.c1_unverifiable;
    }
    if (code == kExitError && !trace.error.empty())
      summary["error"] = trace.error;
    write_json_file(req.output_prefix + ".summary.json", summary);
  }
  if (out != nullptr) *out = std::move(trace);
  return code;
}

int execute_generate(const GenerateRequest& req) {
  try {
    ProblemSpec spec = generate_problem(req.gen);
    validate_instance(spec, 5, req.gen.seed + 1);
    write_problem_json(req.output, spec);
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "generate failed: %s\n", ex.what());
    return kExitError;
  }
  return kExitOk;
}

RunSummaryInfo read_summary_info(const std::string& summary_path) {
  json j = read_json_file(summary_path);
  RunSummaryInfo info;
  info.gamma = j.at("gamma").get<double>();
  info.beta = j.at("beta").get<double>();
  info.c_strong = j.at("c_strong").get<double>();
  info.lf = j.at("L_f").get<double>();
  info.f0 = j.at("F0").get<double>();
  info.delta = j.at("delta").get<std::uint32_t>();
  info.blocks = j.at("blocks").get<int>();
  info.window = j.value("window_T", 1);
  info.p_min = j.value("p_min", 1.0);
  return info;
}

int execute_analyze(const AnalyzeRequest& req) {
  try {
    json report;
    report["what"] = req.what;
    if (req.what == "descent") {
      json rows = json::array();
      bool all_pass = true;
      for (const auto& path : req.trace_files) {
        Trace t = read_trace_csv(path);
        auto info = read_summary_info(summary_path_for(path));
        t.F0 = info.f0;
        TheoryConstants tc;
        tc.c_strong = info.c_strong;
        tc.lf = info.lf;
        tc.delta = info.delta;
        tc.gamma = info.gamma;
        ProblemSpec dummy;  // the check runs off the trace columns alone
        auto rep = check_lyapunov_descent(t, dummy, tc);
        all_pass = all_pass && rep.pass;
        rows.push_back({{"trace", path},
                        {"checked", rep.checked},
                        {"violations", rep.violations},
                        {"min_slack", rep.min_slack},
                        {"tol", rep.tol}});
        std::printf("%s: violations: %llu (min slack %.3e)\n", path.c_str(),
                    static_cast<unsigned long long>(rep.violations),
                    rep.min_slack);
      }
      report["traces"] = rows;
      report["pass"] = all_pass;
    } else if (req.what == "delays") {
      json rows = json::array();
      for (const auto& path : req.trace_files) {
        auto events = read_events_csv(events_path_for(path));
        auto info = read_summary_info(summary_path_for(path));
        auto ds = delay_stats(events, info.blocks, info.delta, info.window);
        json row;
        row["trace"] = path;
        row["avg_delay"] = ds.avg_delay;
        row["max_delay"] = ds.max_delay;
        row["per_block_avg"] = ds.per_block_avg;
        row["updates_per_block"] = ds.updates_per_block;
        row["window_bound_C"] = ds.window_bound;
        rows.push_back(std::move(row));
        std::printf("%s: avg delay %.3f, max delay %u\n", path.c_str(),
                    ds.avg_delay, ds.max_delay);
      }
      report["traces"] = rows;
    } else if (req.what == "kepsilon") {
      if (req.trace_files.empty())
        throw StructuralError("kepsilon: no traces");
      std::vector<Trace> traces;
      for (const auto& path : req.trace_files)
        traces.push_back(read_trace_csv(path));
      auto info = read_summary_info(summary_path_for(req.trace_files[0]));
      TheoryConstants tc;
      tc.c_strong = info.c_strong;
      tc.lf = info.lf;
      tc.lip_base = info.lf;                     // prox-linear declaration
      tc.lip_inner = info.lf + 2.0 * info.beta;  // prox-linear declaration
      tc.delta = info.delta;
      tc.gamma = info.gamma;
      tc.window = info.window;
      tc.p_min = info.p_min;
      tc.blocks_n = info.blocks;
      tc.alpha = req.alpha;
      double fstar = req.f_star;
      if (std::isnan(fstar)) {
        if (req.problem_file.empty())
          throw StructuralError("kepsilon: need --fstar or --problem");
        oracle::OracleOptions opt;
        opt.tol = 1e-7;
        auto res = oracle::reference_solve(read_problem_json(req.problem_file),
                                           opt);
        fstar = res.objective;
      }
      auto table = k_epsilon(traces, req.eps_levels, tc, info.f0, fstar);
      json rows = json::array();
      for (const auto& r : table.rows) {
        rows.push_back({{"epsilon", r.epsilon},
                        {"k", r.k_empirical},
                        {"censored", r.censored},
                        {"bound", r.k_bound}});
        std::printf("eps %.3e: K = %llu%s (bound %.3e)\n", r.epsilon,
                    static_cast<unsigned long long>(r.k_empirical),
                    r.censored ? " [censored]" : "", r.k_bound);
      }
      report["rows"] = rows;
      report["loglog_slope"] = table.loglog_slope;
      std::printf("log-log slope: %.3f\n", table.loglog_slope);
    } else if (req.what == "speedup") {
      std::vector<Trace> traces;
      std::vector<int> workers;
      for (const auto& path : req.trace_files) {
        traces.push_back(read_trace_csv(path));
        json j = read_json_file(summary_path_for(path));
        workers.push_back(j.value("workers", 1));
      }
      auto rows = speedup_report(traces, workers, req.target);
      json jrows = json::array();
      for (const auto& r : rows) {
        jrows.push_back({{"workers", r.workers},
                         {"seconds", r.seconds_to_target},
                         {"censored", r.censored},
                         {"speedup", r.speedup},
                         {"efficiency", r.efficiency}});
        std::printf("workers %d: %.3fs speedup %.2f efficiency %.2f%s\n",
                    r.workers, r.seconds_to_target, r.speedup, r.efficiency,
                    r.censored ? " [censored]" : "");
      }
      report["rows"] = jrows;
    } else {
      throw StructuralError("unknown analysis: " + req.what);
    }
    if (!req.output.empty()) write_json_file(req.output, report);
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "analyze failed: %s\n", ex.what());
    return kExitError;
  }
  return kExitOk;
}

int execute_oracle(const OracleRequest& req) {
  try {
    ProblemSpec spec = read_problem_json(req.problem_file);
    oracle::OracleOptions opt;
    opt.tol = req.tol;
    opt.max_steps = req.max_steps;
    auto res = oracle::reference_solve(spec, opt);
    json j;
    j["method"] = res.method;
    j["objective"] = res.objective;
    j["certified_tol"] = res.certified_tol;
    j["censored"] = res.censored;
    j["steps"] = res.steps;
    j["minimizer"] = res.minimizer;
    if (req.output.empty())
      std::printf("%s\n", j.dump(2).c_str());
    else
      write_json_file(req.output, j);
    return res.censored ? kExitCensored : kExitOk;
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "oracle failed: %s\n", ex.what());
    return kExitError;
  }
}

}  // namespace asyflexa
