#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "asyflexa/engine.hpp"
#include "asyflexa/generators.hpp"
#include "asyflexa/metrics.hpp"
#include "asyflexa/oracle.hpp"
#include "test_support.hpp"

using namespace asyflexa;

TEST_CASE("compose_delayed_view") {
  auto part = std::make_shared<BlockPartition>(std::vector<int>{1, 1, 1});
  VersionedHistory hist(part, 6);
  // iterates x^0..x^5 with x^k = (10k, 20k, 30k) for easy reading
  hist.reset({0, 0, 0});
  for (int k = 1; k <= 5; ++k)
    hist.push({10.0 * k, 20.0 * k, 30.0 * k});
  CHECK(hist.current() == 5);

  SUBCASE("d = 0 returns the current iterate") {
    std::vector<std::uint32_t> d{0, 0, 0};
    auto v = hist.compose(d);
    CHECK(v.raw() == std::vector<double>{50, 100, 150});
  }
  SUBCASE("the shared-memory example d^5 = (3,1,0)") {
    // block 1 from k=2, block 2 from k=4, block 3 from k=5: a vector that
    // never existed in memory as a whole
    std::vector<std::uint32_t> d{3, 1, 0};
    auto v = hist.compose(d);
    CHECK(v.raw() == std::vector<double>{20, 80, 150});
  }
  SUBCASE("delays past the start clamp to x^0") {
    VersionedHistory h2(part, 8);
    h2.reset({1, 2, 3});
    h2.push({4, 2, 3});
    std::vector<std::uint32_t> d{0, 5, 5};
    auto v = h2.compose(d);
    CHECK(v.raw() == std::vector<double>{4, 2, 3});
  }
  SUBCASE("evicted iterates raise a structural error") {
    VersionedHistory h3(part, 2);
    h3.reset({0, 0, 0});
    h3.push({1, 1, 1});
    h3.push({2, 2, 2});
    std::vector<std::uint32_t> d{2, 0, 0};
    CHECK_THROWS_AS(h3.compose(d), StructuralError);
  }
}

TEST_CASE("stepsize bound and auto gamma") {
  CHECK(max_stepsize_bound(1.0, 1.0, 0) == doctest::Approx(1.0));
  CHECK(max_stepsize_bound(1.0, 1.0, 2) == doctest::Approx(1.0 / 3.0));
  CHECK(auto_gamma(1.0, 1.0, 0) == doctest::Approx(0.9));
}

namespace {

Trace run_sim(const ProblemSpec& spec, RunConfig cfg, SchedulerConfig scfg) {
  auto sched = make_scheduler(scfg);
  return run_simulated(spec, cfg, *sched);
}

}  // namespace

TEST_CASE("single step with gamma = 1 lands on the best response") {
  auto spec = asyflexa::testing::one_dim_lasso(1.0);
  RunConfig cfg;
  cfg.gamma = 1.0;
  cfg.beta = 0.5;
  cfg.budget = 1;
  cfg.record_iterates = true;
  SchedulerConfig scfg;
  scfg.kind = SchedulerKind::kCyclic;
  scfg.blocks = 1;
  auto trace = run_sim(spec, cfg, scfg);
  REQUIRE(trace.steps.size() == 1);
  CHECK(trace.iterates[0][0] == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("half step lands on the soft-threshold midpoint") {
  auto spec = asyflexa::testing::one_dim_lasso(1.0);
  RunConfig cfg;
  cfg.gamma = 0.5;
  cfg.beta = 0.5;
  cfg.budget = 1;
  cfg.record_iterates = true;
  SchedulerConfig scfg;
  scfg.kind = SchedulerKind::kCyclic;
  scfg.blocks = 1;
  auto trace = run_sim(spec, cfg, scfg);
  CHECK(trace.iterates[0][0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(trace.steps[0].step_norm == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("a stationary start never moves, for any scheduler") {
  auto spec = asyflexa::testing::identity_lasso(8, 4, 0.5);
  for (auto kind : {SchedulerKind::kCyclic, SchedulerKind::kSharedUniform,
                    SchedulerKind::kPartitionedShuffle}) {
    RunConfig cfg;
    cfg.gamma = 0.8;
    cfg.budget = 60;
    cfg.delta = 3;
    SchedulerConfig scfg;
    scfg.kind = kind;
    scfg.blocks = 4;
    scfg.delta = 3;
    scfg.workers = 2;
    scfg.seed = 11;
    auto trace = run_sim(spec, cfg, scfg);
    for (double v : trace.final_x) CHECK(v == 0.0);
    for (const auto& s : trace.steps) CHECK(s.step_norm == 0.0);
  }
}

TEST_CASE("zero budget returns the start point and an empty trace") {
  auto spec = asyflexa::testing::one_dim_lasso(1.0);
  RunConfig cfg;
  cfg.gamma = 0.5;
  cfg.budget = 0;
  SchedulerConfig scfg;
  scfg.kind = SchedulerKind::kCyclic;
  scfg.blocks = 1;
  auto trace = run_sim(spec, cfg, scfg);
  CHECK(trace.steps.empty());
  CHECK(trace.final_x == spec.x0);
  CHECK(trace.final_F == doctest::Approx(trace.F0));
}

TEST_CASE("same seed gives an identical trace, bit for bit") {
  auto spec = make_lasso_dense(40, 8, 0.2, 10.0, 0, 3);
  RunConfig cfg;
  cfg.budget = 300;
  cfg.delta = 4;
  cfg.seed = 21;
  SchedulerConfig scfg;
  scfg.kind = SchedulerKind::kSharedUniform;
  scfg.blocks = 8;
  scfg.delta = 4;
  scfg.seed = 21;
  auto a = run_sim(spec, cfg, scfg);
  auto b = run_sim(spec, cfg, scfg);
  REQUIRE(a.steps.size() == b.steps.size());
  for (std::size_t s = 0; s < a.steps.size(); ++s) {
    CHECK(a.steps[s].i == b.steps[s].i);
    CHECK(a.steps[s].F == b.steps[s].F);
    CHECK(a.steps[s].step_norm == b.steps[s].step_norm);
  }
  CHECK(a.final_x == b.final_x);
}

TEST_CASE("synchronous cyclic run matches the oracle sweep step for step") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    auto spec = make_lasso_dense(30, 6, 0.25, 12.0, 0, seed);
    const double beta = 0.5 * spec.smooth->lipschitz();
    RunConfig cfg;
    cfg.gamma = 0.5;
    cfg.beta = beta;
    cfg.budget = 500;
    cfg.record_iterates = true;
    SchedulerConfig scfg;
    scfg.kind = SchedulerKind::kCyclic;
    scfg.blocks = 6;
    auto trace = run_sim(spec, cfg, scfg);

    BlockVector x = spec.start_point();
    for (int k = 0; k < 500; ++k) {
      oracle::sync_block_step(spec, k % 6, 0.5, beta, x);
      double maxdiff = 0.0;
      for (int j = 0; j < spec.dim(); ++j)
        maxdiff = std::max(maxdiff,
                           std::fabs(x.raw()[j] - trace.iterates[k][j]));
      CHECK(maxdiff <= 1e-12);
    }
  }
}

TEST_CASE("Lyapunov sequence is non-increasing under the stepsize bound") {
  auto spec = make_lasso_dense(40, 8, 0.3, 10.0, 0, 17);
  for (auto kind : {SchedulerKind::kCyclic, SchedulerKind::kRandomSequential,
                    SchedulerKind::kRandomParallel, SchedulerKind::kSharedUniform,
                    SchedulerKind::kPartitionedShuffle}) {
    RunConfig cfg;
    cfg.budget = 400;
    cfg.delta = 5;
    cfg.seed = 9;
    SchedulerConfig scfg;
    scfg.kind = kind;
    scfg.blocks = 8;
    scfg.delta = 5;
    scfg.workers = 3;
    scfg.seed = 9;
    auto trace = run_sim(spec, cfg, scfg);
    double prev = trace.F0;
    for (const auto& s : trace.steps) {
      CHECK(s.Ftilde <= prev + 1e-9 * (1.0 + std::fabs(trace.F0)));
      CHECK(s.Ftilde >= s.F - 1e-12);  // F* <= F <= Ftilde
      prev = s.Ftilde;
    }
  }
}

TEST_CASE("early stop on the stationarity target") {
  auto spec = make_lasso_dense(30, 6, 0.3, 5.0, 0, 23);
  RunConfig cfg;
  cfg.budget = 200000;
  cfg.metric_cadence = 20;
  cfg.target_stationarity = 1e-3;
  SchedulerConfig scfg;
  scfg.kind = SchedulerKind::kCyclic;
  scfg.blocks = 6;
  auto trace = run_sim(spec, cfg, scfg);
  CHECK_FALSE(trace.censored);
  CHECK(trace.steps.size() < 200000);
  CHECK(trace.final_MF <= 1e-3);
}

TEST_CASE("inner-solver failure aborts with the partial trace") {
  auto spec = make_lasso_dense(20, 4, 0.2, 5.0, 0, 2);
  RunConfig cfg;
  cfg.surrogate = SurrogateKind::kSecondOrder;  // forces the iterative path
  cfg.budget = 50;
  cfg.inner.tol = 1e-300;
  cfg.inner.max_iters = 2;
  SchedulerConfig scfg;
  scfg.kind = SchedulerKind::kCyclic;
  scfg.blocks = 4;
  auto trace = run_sim(spec, cfg, scfg);
  CHECK_FALSE(trace.error.empty());
  CHECK(trace.steps.empty());  // first step already failed
}

// ---------------------------------------------------------------------------
// Threaded engine
// ---------------------------------------------------------------------------

TEST_CASE("one worker sees no delays and replays exactly") {
  auto spec = make_lasso_dense(24, 6, 0.25, 8.0, 0, 5);
  RunConfig cfg;
  cfg.workers = 1;
  cfg.budget = 200;
  cfg.seed = 3;
  cfg.partitioned_access = false;
  auto trace = run_threaded(spec, cfg);
  REQUIRE(trace.error.empty());
  CHECK(trace.steps.size() == 200);
  for (const auto& e : trace.events) CHECK(e.max_delay() == 0);
  CHECK(trace.replay_max_abs_diff == 0.0);
  CHECK(trace.torn_reads == 0);
}

TEST_CASE("four workers: C3 holds, no torn reads, bitwise replay closure") {
  auto spec = make_lasso_dense(40, 10, 0.25, 8.0, 0, 7);
  for (bool partitioned : {true, false}) {
    CAPTURE(partitioned);
    RunConfig cfg;
    cfg.workers = 4;
    cfg.budget = 600;
    cfg.seed = 13;
    cfg.partitioned_access = partitioned;
    auto trace = run_threaded(spec, cfg);
    REQUIRE(trace.error.empty());
    CHECK(trace.steps.size() == 600);
    CHECK(trace.torn_reads == 0);
    CHECK(trace.replay_max_abs_diff <= 1e-12);
    SchedulerConfig vcfg;
    vcfg.kind = SchedulerKind::kSharedUniform;
    vcfg.blocks = 10;
    vcfg.delta = cfg.delta_cap;
    vcfg.finalize();
    auto val = validate_trace(trace.events, vcfg);
    CHECK(val.c3_violations == 0);
  }
}

TEST_CASE("threaded trace validates against the declared delay cap") {
  auto spec = make_lasso_dense(30, 6, 0.25, 8.0, 0, 9);
  RunConfig cfg;
  cfg.workers = 3;
  cfg.budget = 300;
  cfg.seed = 1;
  auto trace = run_threaded(spec, cfg);
  REQUIRE(trace.error.empty());
  std::uint32_t maxd = 0;
  for (const auto& e : trace.events) maxd = std::max(maxd, e.max_delay());
  CHECK(trace.c1_unverifiable == (maxd > cfg.delta_cap));
  CHECK(maxd < cfg.budget);
}

TEST_CASE("real asynchronous traces satisfy the per-realization descent") {
  // auto gamma is chosen for the declared cap; any realized delay within the
  // cap must therefore yield a monotone Lyapunov sequence
  auto spec = make_lasso_dense(60, 12, 0.25, 8.0, 0, 29);
  for (int workers : {2, 4}) {
    CAPTURE(workers);
    RunConfig cfg;
    cfg.workers = workers;
    cfg.budget = 2000;
    cfg.seed = 31;
    cfg.partitioned_access = false;
    auto trace = run_threaded(spec, cfg);
    REQUIRE(trace.error.empty());
    REQUIRE_FALSE(trace.c1_unverifiable);
    TheoryConstants tc;
    tc.c_strong = trace.c_strong;
    tc.lf = trace.lf;
    tc.delta = trace.delta;
    tc.gamma = trace.gamma;
    auto rep = check_lyapunov_descent(trace, spec, tc);
    CHECK(rep.violations == 0);
  }
}

TEST_CASE("a threaded trace replays from its events file bit for bit") {
  auto spec = make_lasso_dense(30, 6, 0.25, 8.0, 0, 11);
  RunConfig cfg;
  cfg.workers = 3;
  cfg.budget = 400;
  cfg.seed = 2;
  auto threaded = run_threaded(spec, cfg);
  REQUIRE(threaded.error.empty());

  const std::string path = "/tmp/asyflexa_replay_events.csv";
  write_events_csv(path, threaded.events);
  auto events = read_events_csv(path);
  std::uint32_t maxd = 0;
  for (const auto& e : events) maxd = std::max(maxd, e.max_delay());

  RunConfig sim;
  sim.gamma = threaded.gamma;
  sim.beta = threaded.beta;
  sim.budget = events.size();
  sim.delta = maxd;
  SchedulerConfig rcfg;
  rcfg.blocks = 6;
  rcfg.delta = maxd;
  auto sched = replay(events, rcfg);
  auto replayed = run_simulated(spec, sim, *sched);
  REQUIRE(replayed.final_x.size() == threaded.final_x.size());
  for (std::size_t j = 0; j < replayed.final_x.size(); ++j)
    CHECK(replayed.final_x[j] == threaded.final_x[j]);
  std::remove(path.c_str());
}

TEST_CASE("threaded NCC run keeps iterates feasible and replays exactly") {
  for (auto kind : {ConstraintSurrogateKind::kDcSplit,
                    ConstraintSurrogateKind::kDescentLemma}) {
    auto spec = make_ncc_ball_qp(12, 3, kind, 19);
    RunConfig cfg;
    cfg.workers = 2;
    cfg.budget = 150;
    cfg.seed = 5;
    cfg.ncc = true;
    auto trace = run_threaded(spec, cfg);
    REQUIRE(trace.error.empty());
    BlockVector fin(spec.partition, trace.final_x);
    CHECK(check_feasibility(spec, fin, 1e-9).feasible);
    CHECK(trace.replay_max_abs_diff <= 1e-12);
    CHECK(trace.torn_reads == 0);
  }
}

TEST_CASE("every surrogate kind keeps the Lyapunov sequence descending") {
  auto spec = make_dc_least_squares(24, 6, 0.1, 77);
  for (auto kind : {SurrogateKind::kProxLinear, SurrogateKind::kSecondOrder,
                    SurrogateKind::kPartialConvexity, SurrogateKind::kDcSplit}) {
    CAPTURE(to_string(kind));
    RunConfig cfg;
    cfg.surrogate = kind;
    cfg.budget = 300;
    cfg.delta = 3;
    cfg.seed = 4;
    SchedulerConfig scfg;
    scfg.kind = SchedulerKind::kSharedUniform;
    scfg.blocks = 6;
    scfg.delta = 3;
    scfg.seed = 4;
    auto trace = run_sim(spec, cfg, scfg);
    TheoryConstants tc;
    tc.c_strong = trace.c_strong;
    tc.lf = trace.lf;
    tc.delta = trace.delta;
    tc.gamma = trace.gamma;
    auto rep = check_lyapunov_descent(trace, spec, tc);
    CHECK(rep.violations == 0);
  }
}

TEST_CASE("the engine's Lyapunov column matches an all-iterate recomputation") {
  auto spec = make_lasso_dense(20, 4, 0.3, 6.0, 0, 13);
  RunConfig cfg;
  cfg.budget = 60;
  cfg.delta = 3;
  cfg.seed = 2;
  cfg.record_iterates = true;
  SchedulerConfig scfg;
  scfg.kind = SchedulerKind::kSharedUniform;
  scfg.blocks = 4;
  scfg.delta = 3;
  scfg.seed = 2;
  auto trace = run_sim(spec, cfg, scfg);
  // window x^{k-delta}..x^k with the convention x^l = x^0 below zero
  for (std::size_t k = 1; k <= trace.steps.size(); ++k) {
    std::vector<std::vector<double>> window;
    for (int l = static_cast<int>(k) - 3; l <= static_cast<int>(k); ++l)
      window.push_back(l <= 0 ? spec.x0 : trace.iterates[l - 1]);
    const double want = lyapunov(window, spec, 3, spec.smooth->lipschitz());
    CHECK(trace.steps[k - 1].Ftilde ==
          doctest::Approx(want).epsilon(1e-10));
  }
}
