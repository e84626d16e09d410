// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Tolerances and thresholds are pinned here, in code.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <thread>
#include <vector>

#include "asyflexa/engine.hpp"
#include "asyflexa/generators.hpp"
#include "asyflexa/metrics.hpp"
#include "asyflexa/oracle.hpp"
#include "asyflexa/subproblem.hpp"

using namespace asyflexa;

namespace {

int g_failures = 0;

void report(int index, const std::string& name, bool pass,
            const std::string& detail) {
  std::printf("[%s] criterion %d: %s — %s\n", pass ? "PASS" : "FAIL", index,
              name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

void report_skip(int index, const std::string& name,
                 const std::string& why) {
  std::printf("[SKIP] criterion %d: %s — %s\n", index, name.c_str(),
              why.c_str());
  std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

Trace run_sim(const ProblemSpec& spec, RunConfig cfg, SchedulerConfig scfg) {
  auto sched = make_scheduler(scfg);
  return run_simulated(spec, cfg, *sched);
}

// --------------------------------------------------------------------------
// 1. Lyapunov descent: 100 seeded simulated runs, all five scheduler kinds,
//    delta in {0, 2, 5, 10}, gamma = 0.9x the bound; zero violations at
//    tol 1e-9 (1 + |F(x0)|). Runtime budget: 2 minutes.
// --------------------------------------------------------------------------
void criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  auto spec = make_lasso_dense(200, 20, 0.25, 10.0, 0, 404);
  const SchedulerKind kinds[] = {
      SchedulerKind::kCyclic, SchedulerKind::kRandomSequential,
      SchedulerKind::kRandomParallel, SchedulerKind::kSharedUniform,
      SchedulerKind::kPartitionedShuffle};
  const std::uint32_t deltas[] = {0, 2, 5, 10};

  int runs = 0;
  std::uint64_t violations = 0;
  double worst_slack = 0.0;
  for (std::uint32_t delta : deltas) {
    for (auto kind : kinds) {
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        RunConfig cfg;
        cfg.budget = 1000;
        cfg.delta = delta;
        cfg.seed = seed;
        SchedulerConfig scfg;
        scfg.kind = kind;
        scfg.blocks = 20;
        scfg.delta = delta;
        scfg.workers = static_cast<int>(delta) + 1;  // staircase within C1
        scfg.seed = seed;
        auto trace = run_sim(spec, cfg, scfg);
        TheoryConstants tc;
        tc.c_strong = trace.c_strong;
        tc.lf = trace.lf;
        tc.delta = trace.delta;
        tc.gamma = trace.gamma;
        auto rep = check_lyapunov_descent(trace, spec, tc);
        violations += rep.violations;
        worst_slack = std::min(worst_slack, rep.min_slack);
        ++runs;
      }
    }
  }
  const double secs = seconds_since(t0);
  char detail[256];
  std::snprintf(detail, sizeof(detail),
                "%d runs, %llu violations, min slack %.3e, %.1fs (limit 120s)",
                runs, static_cast<unsigned long long>(violations), worst_slack,
                secs);
  report(1, "Lyapunov descent per realization", runs == 100 &&
         violations == 0 && secs <= 120.0, detail);
}

// --------------------------------------------------------------------------
// 2. Synchronous reduction: delta = 0 cyclic matches the independent oracle
//    sweep step for step within 1e-12 over 500 steps, 20 random instances.
// --------------------------------------------------------------------------
void criterion_2() {
  double worst = 0.0;
  int instances = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const int n = 30 + static_cast<int>(seed % 4) * 10;
    const int blocks = 5 + static_cast<int>(seed % 3);
    auto spec = make_lasso_dense(n, blocks, 0.2 + 0.02 * (seed % 5), 8.0, 0,
                                 seed);
    const double beta = 0.5 * spec.smooth->lipschitz();
    RunConfig cfg;
    cfg.gamma = 0.5;
    cfg.beta = beta;
    cfg.budget = 500;
    cfg.record_iterates = true;
    SchedulerConfig scfg;
    scfg.kind = SchedulerKind::kCyclic;
    scfg.blocks = blocks;
    auto trace = run_sim(spec, cfg, scfg);

    BlockVector x = spec.start_point();
    for (int k = 0; k < 500; ++k) {
      oracle::sync_block_step(spec, k % blocks, 0.5, beta, x);
      for (int j = 0; j < n; ++j)
        worst = std::max(worst,
                         std::fabs(x.raw()[j] - trace.iterates[k][j]));
    }
    ++instances;
  }
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "%d instances x 500 steps, max |engine - oracle| = %.3e",
                instances, worst);
  report(2, "synchronous reduction equals the oracle sweep",
         instances == 20 && worst <= 1e-12, detail);
}

// --------------------------------------------------------------------------
// 3. Stationarity convergence: 10 seeds, shared-uniform delta = 5; the
//    seed-averaged ||M_F||^2 reaches 1e-4; the log-log slope of K_eps vs
//    1/eps over {1e-1, 1e-2, 1e-3} is 1.0 +- 0.3; the worst-case bound
//    dominates every empirical K_eps.
// --------------------------------------------------------------------------
void criterion_3() {
  // a harmonic eigenvalue spectrum (lambda_j ~ 1/j) keeps the O(1/k)
  // stationarity regime across the measured epsilon range
  auto spec = make_lasso_dense(200, 20, 0.02, 10.0, 0, 1001, "harmonic");
  std::vector<Trace> traces;
  RunConfig cfg;
  cfg.budget = 200000;
  cfg.delta = 5;
  cfg.metric_cadence = 25;
  SchedulerConfig scfg;
  scfg.kind = SchedulerKind::kSharedUniform;
  scfg.blocks = 20;
  scfg.delta = 5;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    cfg.seed = seed;
    scfg.seed = seed;
    traces.push_back(run_sim(spec, cfg, scfg));
  }

  TheoryConstants tc;
  tc.c_strong = traces[0].c_strong;
  tc.lf = traces[0].lf;
  tc.lip_base = traces[0].lf;
  tc.lip_inner = traces[0].lf + 2.0 * traces[0].beta;
  tc.delta = 5;
  tc.gamma = traces[0].gamma;
  tc.window = 20;
  tc.p_min = 1.0 / 20.0;
  tc.blocks_n = 20;

  oracle::OracleOptions opt;
  opt.tol = 1e-8;
  opt.max_steps = 20'000'000;
  auto star = oracle::reference_solve(spec, opt);

  const std::vector<double> eps{1e-1, 1e-2, 1e-3, 1e-4};
  auto table = k_epsilon(traces, eps, tc, traces[0].F0, star.objective);

  bool reached_1e4 = !table.rows[3].censored;
  bool bound_ok = true;
  for (const auto& row : table.rows)
    if (!row.censored)
      bound_ok = bound_ok &&
                 row.k_bound >= static_cast<double>(row.k_empirical);
  // the slope criterion uses the three upper levels
  auto slope_table = k_epsilon(traces, {1e-1, 1e-2, 1e-3}, tc, traces[0].F0,
                               star.objective);
  const double slope = slope_table.loglog_slope;
  const bool slope_ok = slope >= 0.7 && slope <= 1.3;

  char detail[256];
  std::snprintf(detail, sizeof(detail),
                "K(1e-1)=%llu K(1e-2)=%llu K(1e-3)=%llu K(1e-4)=%llu%s, "
                "slope=%.3f, bound dominates: %s",
                static_cast<unsigned long long>(table.rows[0].k_empirical),
                static_cast<unsigned long long>(table.rows[1].k_empirical),
                static_cast<unsigned long long>(table.rows[2].k_empirical),
                static_cast<unsigned long long>(table.rows[3].k_empirical),
                table.rows[3].censored ? " [censored]" : "", slope,
                bound_ok ? "yes" : "no");
  report(3, "O(1/eps) stationarity convergence", reached_1e4 && slope_ok &&
         bound_ok, detail);
}

// --------------------------------------------------------------------------
// 4. Best-response properties: the descent inequality on 1e4 samples with
//    zero violations beyond 1e-9; the Lipschitz ratio <= (L_B / c) * 1.05 on
//    >= 1e3 pairs.
// --------------------------------------------------------------------------
void criterion_4() {
  auto spec = make_lasso_dense(120, 12, 0.25, 8.0, 0, 2024);
  auto rep = verify_best_response_properties(spec, SurrogateKind::kProxLinear,
                                             10000, 7, 0.0, 1e-9, 1.05);
  char detail[200];
  std::snprintf(detail, sizeof(detail),
                "%d trials, %d descent violations (min margin %.2e), "
                "max ratio %.4f vs bound %.4f",
                rep.trials, rep.descent_violations, rep.descent_min_margin,
                rep.max_lipschitz_ratio, rep.declared_ratio_bound * 1.05);
  report(4, "best-response descent and Lipschitz properties",
         rep.descent_violations == 0 &&
             rep.max_lipschitz_ratio <= rep.declared_ratio_bound * 1.05,
         detail);
}

// --------------------------------------------------------------------------
// 5. Surrogate axioms: B2/D2/D5 residuals <= 1e-10 and D3 gap >= -1e-12 on
//    5e3 samples across all surrogate kinds.
// --------------------------------------------------------------------------
void criterion_5() {
  auto spec = make_dc_least_squares(60, 6, 0.1, 55);
  Rng rng(321);
  double worst_b2 = 0.0;
  int samples = 0;

  const SurrogateKind kinds[] = {
      SurrogateKind::kProxLinear, SurrogateKind::kSecondOrder,
      SurrogateKind::kPartialConvexity, SurrogateKind::kDcSplit};
  std::vector<double> gs, gf;
  for (int t = 0; t < 2500; ++t) {
    BlockVector y(spec.partition);
    for (int b = 0; b < spec.blocks(); ++b) {
      std::vector<double> raw(spec.partition->size(b));
      for (auto& v : raw) v = rng.normal();
      spec.sets[b]->project(raw, y.block(b));
    }
    const int i = static_cast<int>(rng.below(spec.blocks()));
    const auto kind = kinds[t % 4];
    auto m = build_surrogate(kind, spec, i, y, 0.6);
    const int ni = spec.partition->size(i);
    gs.resize(ni);
    gf.resize(ni);
    m.grad(y.block(i), gs);
    spec.smooth->grad_block(i, y.all(), gf);
    double r = 0.0;
    for (int j = 0; j < ni; ++j) r += (gs[j] - gf[j]) * (gs[j] - gf[j]);
    worst_b2 = std::max(worst_b2, std::sqrt(r));
    ++samples;
  }

  double worst_d2 = 0.0, worst_d5 = 0.0, worst_d3 = 0.0;
  const ConstraintSurrogateKind ckinds[] = {
      ConstraintSurrogateKind::kDescentLemma,
      ConstraintSurrogateKind::kDcSplit};
  for (int t = 0; t < 2500; ++t) {
    auto comp = make_ring_constraint(1.0, ckinds[t % 2]);
    std::vector<double> y(3);
    for (auto& v : y) v = rng.normal();
    const double yn = norm2(y);
    for (auto& v : y) v *= (1.0 + rng.uniform01()) / yn;  // feasible base
    auto cs = build_constraint_surrogate(comp, y);
    worst_d2 = std::max(worst_d2,
                        std::fabs(cs.value(y) - comp.fn->value(y)));
    std::vector<double> g1(3), g2(3);
    cs.grad(y, g1);
    comp.fn->grad(y, g2);
    double r = 0.0;
    for (int j = 0; j < 3; ++j) r += (g1[j] - g2[j]) * (g1[j] - g2[j]);
    worst_d5 = std::max(worst_d5, std::sqrt(r));
    for (int zt = 0; zt < 2; ++zt) {
      std::vector<double> z{3 * rng.normal(), 3 * rng.normal(),
                            3 * rng.normal()};
      worst_d3 = std::max(worst_d3, comp.fn->value(z) - cs.value(z));
    }
    ++samples;
  }

  char detail[200];
  std::snprintf(detail, sizeof(detail),
                "%d samples; B2 %.2e, D2 %.2e, D5 %.2e, D3 gap %.2e",
                samples, worst_b2, worst_d2, worst_d5, worst_d3);
  report(5, "surrogate axioms B2/D2/D3/D5",
         samples == 5000 && worst_b2 <= 1e-10 && worst_d2 <= 1e-10 &&
             worst_d5 <= 1e-10 && worst_d3 <= 1e-12,
         detail);
}

// --------------------------------------------------------------------------
// 6. NCC feasibility: every iterate of 20 seeded runs on ncc-ball-qp passes
//    check_feasibility at 1e-9; final ||M_F^c|| <= 1e-4.
// --------------------------------------------------------------------------
void criterion_6() {
  std::uint64_t violations = 0;
  double worst_mf = 0.0;
  int runs = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto spec = make_ncc_ball_qp(40, 8, ConstraintSurrogateKind::kDcSplit,
                                 900 + seed);
    RunConfig cfg;
    cfg.budget = 40000;
    cfg.delta = 2;
    cfg.seed = seed;
    cfg.ncc = true;
    cfg.metric_cadence = 50;
    cfg.target_stationarity = 5e-5;  // stop well inside the 1e-4 gate
    cfg.verify_feasible_each_step = true;
    cfg.feasibility_tol = 1e-9;
    SchedulerConfig scfg;
    scfg.kind = SchedulerKind::kSharedUniform;
    scfg.blocks = 8;
    scfg.delta = 2;
    scfg.seed = seed;
    auto trace = run_sim(spec, cfg, scfg);
    violations += trace.feasibility_violations;
    worst_mf = std::max(worst_mf, trace.final_MF);
    ++runs;
  }
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "%d runs, %llu infeasible iterates, worst final ||M_F^c|| = %.3e",
                runs, static_cast<unsigned long long>(violations), worst_mf);
  report(6, "NCC iterate feasibility and stationarity",
         runs == 20 && violations == 0 && worst_mf <= 1e-4, detail);
}

// --------------------------------------------------------------------------
// 7. Threaded-engine contracts: balanced run with 4 workers has zero C3
//    violations, zero torn reads and bitwise replay closure; the unbalanced
//    sparse-row instance shows cheap blocks reading fresher data than dense
//    blocks (direction only).
// --------------------------------------------------------------------------
void criterion_7() {
  bool pass = true;
  std::string detail;

  {  // balanced dense LASSO
    auto spec = make_lasso_dense(200, 20, 0.25, 8.0, 0, 71);
    RunConfig cfg;
    cfg.workers = 4;
    cfg.budget = 4000;
    cfg.seed = 5;
    cfg.partitioned_access = false;
    auto trace = run_threaded(spec, cfg);
    SchedulerConfig vcfg;
    vcfg.kind = SchedulerKind::kSharedUniform;
    vcfg.blocks = 20;
    vcfg.delta = cfg.delta_cap;
    vcfg.finalize();
    auto val = validate_trace(trace.events, vcfg);
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "balanced: c3=%llu torn=%llu replay diff=%.1e; ",
                  static_cast<unsigned long long>(val.c3_violations),
                  static_cast<unsigned long long>(trace.torn_reads),
                  trace.replay_max_abs_diff);
    detail += buf;
    pass = pass && trace.error.empty() && val.c3_violations == 0 &&
           trace.torn_reads == 0 && trace.replay_max_abs_diff <= 1e-12;
  }

  {  // unbalanced sparse-row instance: delay direction
    auto spec = make_lasso_sparse_rows(400, 20, 0.25, 0.5, 72);
    const auto* sq =
        dynamic_cast<const SparseQuadraticSmooth*>(spec.smooth.get());
    RunConfig cfg;
    cfg.workers = 4;
    cfg.budget = 6000;
    cfg.seed = 6;
    cfg.partitioned_access = false;  // every worker updates every block
    cfg.block_cost.resize(20);
    double mean_nnz = 0.0;
    for (int b = 0; b < 20; ++b) mean_nnz += static_cast<double>(sq->block_nnz(b));
    mean_nnz /= 20.0;
    for (int b = 0; b < 20; ++b)
      cfg.block_cost[b] = static_cast<double>(sq->block_nnz(b)) / mean_nnz;
    auto trace = run_threaded(spec, cfg);
    auto ds = delay_stats(trace.events, 20, cfg.delta_cap, 20);

    // cheap and dense groups by stored row weight
    double cheap_sum = 0.0, dense_sum = 0.0;
    int cheap_n = 0, dense_n = 0;
    for (int b = 0; b < 20; ++b) {
      if (static_cast<double>(sq->block_nnz(b)) < mean_nnz) {
        cheap_sum += ds.per_block_avg[b];
        ++cheap_n;
      } else {
        dense_sum += ds.per_block_avg[b];
        ++dense_n;
      }
    }
    const double cheap_avg = cheap_sum / std::max(cheap_n, 1);
    const double dense_avg = dense_sum / std::max(dense_n, 1);
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "unbalanced: cheap avg delay %.2f < dense avg delay %.2f "
                  "(max %u)",
                  cheap_avg, dense_avg, ds.max_delay);
    detail += buf;
    pass = pass && trace.error.empty() && cheap_n > 0 && dense_n > 0 &&
           cheap_avg < dense_avg;
  }

  report(7, "threaded-engine contracts and delay direction", pass, detail);
}

// --------------------------------------------------------------------------
// 8. Speedup: on a >= 4-core machine the 4-worker time to ||M_F|| <= 1e-3 is
//    at most 0.6x the 1-worker time on the dense balanced LASSO (n = 2000).
//    Reported with the efficiency table; skipped (not failed) below 4 cores
//    per the criterion's own precondition.
// --------------------------------------------------------------------------
void criterion_8() {
  const unsigned cores = std::thread::hardware_concurrency();
  auto spec = make_lasso_dense(2000, 100, 0.2, 10.0, 0, 88);
  const double target = 1e-3;

  // oversubscribed workers read data that is thousands of writes stale and
  // stall at this stepsize, so the ladder stops at the real core count; the
  // 0.6x gate applies only with four real cores
  std::vector<int> counts;
  if (cores >= 4)
    counts = {1, 2, 4};
  else
    counts = {1, std::min(2, static_cast<int>(std::max(cores, 1u)))};

  std::vector<Trace> traces;
  for (int w : counts) {
    RunConfig cfg;
    cfg.workers = w;
    cfg.budget = 150000;
    cfg.seed = 17;
    cfg.gamma = 0.25;  // shared stepsize across worker counts
    cfg.metric_cadence = 200;
    cfg.target_stationarity = target;
    cfg.partitioned_access = true;
    traces.push_back(run_threaded(spec, cfg));
  }
  auto rows = speedup_report(traces, counts, target);
  std::string detail;
  for (const auto& r : rows) {
    char buf[120];
    std::snprintf(buf, sizeof(buf), "w=%d: %.2fs speedup %.2f eff %.2f%s; ",
                  r.workers, r.seconds_to_target, r.speedup, r.efficiency,
                  r.censored ? " censored" : "");
    detail += buf;
  }
  if (cores < 4) {
    report_skip(8, "almost-linear speedup",
                detail + "(needs >= 4 hardware threads, found " +
                    std::to_string(cores) + ")");
    return;
  }
  const auto& four = rows.back();
  const bool pass = !rows.front().censored && !four.censored &&
                    four.seconds_to_target <=
                        0.6 * rows.front().seconds_to_target;
  report(8, "almost-linear speedup", pass, detail);
}

// --------------------------------------------------------------------------
// 9. Complexity-constant arithmetic against hand-computed fixtures.
// --------------------------------------------------------------------------
void criterion_9() {
  bool pass = true;
  // worked example: all cross terms off
  {
    TheoryConstants tc;
    tc.lip_base = 0.0;
    tc.lip_inner = 0.0;
    tc.blocks_n = 1;
    tc.p_min = 1.0;
    tc.alpha = 0.5;
    tc.gamma = 0.5;
    tc.c_strong = 2.0;
    tc.lf = 1.0;
    tc.delta = 0;
    tc.window = 1;
    auto [c1, c2] = complexity_constants(tc);
    pass = pass && std::fabs(c1 - 24.0) <= 1e-12 * 24.0 && c2 == 0.0;
  }
  // binary-exact second fixture: C1 = 1312, C2 = 3072 by hand
  {
    TheoryConstants tc;
    tc.lip_base = 2.0;
    tc.lip_inner = 1.0;
    tc.blocks_n = 4;
    tc.p_min = 0.25;
    tc.alpha = 0.5;
    tc.gamma = 0.25;
    tc.c_strong = 2.0;
    tc.lf = 2.0;
    tc.delta = 2;
    tc.window = 3;
    auto [c1, c2] = complexity_constants(tc);
    pass = pass && std::fabs(c1 - 1312.0) <= 1e-12 * 1312.0 &&
           std::fabs(c2 - 3072.0) <= 1e-12 * 3072.0;
  }
  report(9, "complexity-constant arithmetic", pass,
         "C1/C2 match the hand-computed fixtures to 1e-12");
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  std::printf("acceptance total: %.1fs, %d failing criteria\n",
              seconds_since(t0), g_failures);
  return g_failures == 0 ? 0 : 1;
}
