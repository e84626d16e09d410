#include "asyflexa/engine.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "asyflexa/metrics.hpp"

namespace asyflexa {

// ---------------------------------------------------------------------------
// VersionedHistory
// ---------------------------------------------------------------------------

VersionedHistory::VersionedHistory(PartitionPtr part, std::uint32_t depth)
    : part_(std::move(part)), depth_(std::max<std::uint32_t>(depth, 1)) {
  ring_.assign(depth_, std::vector<double>(part_->dim(), 0.0));
}

void VersionedHistory::reset(const std::vector<double>& x0) {
  k_ = 0;
  for (auto& slot : ring_) slot = x0;
}

void VersionedHistory::push(const std::vector<double>& x) {
  k_ += 1;
  ring_[k_ % depth_] = x;
}

std::span<const double> VersionedHistory::iterate(std::int64_t l) const {
  if (l < 0) l = 0;
  const auto ul = static_cast<std::uint64_t>(l);
  if (ul > k_ || k_ - ul >= depth_)
    throw StructuralError("history: iterate no longer buffered");
  return ring_[ul % depth_];
}

BlockVector VersionedHistory::compose(std::span<const std::uint32_t> d) const {
  if (static_cast<int>(d.size()) != part_->count())
    throw StructuralError("compose: delay vector length mismatch");
  BlockVector out(part_);
  for (int j = 0; j < part_->count(); ++j) {
    const std::int64_t l = static_cast<std::int64_t>(k_) - d[j];
    const auto src = iterate(l);
    const int off = part_->offset(j);
    for (int c = 0; c < part_->size(j); ++c)
      out.block(j)[c] = src[off + c];
  }
  return out;
}

BlockVector compose_delayed_view(const VersionedHistory& hist,
                                 std::span<const std::uint32_t> d) {
  return hist.compose(d);
}

double max_stepsize_bound(double c_strong, double lf, std::uint32_t delta) {
  if (c_strong <= 0.0 || lf <= 0.0)
    throw StructuralError("stepsize bound: constants must be positive");
  const double dd = static_cast<double>(delta);
  return c_strong / (lf + 0.5 * dd * dd * lf);
}

double auto_gamma(double c_strong, double lf, std::uint32_t delta) {
  return 0.9 * max_stepsize_bound(c_strong, lf, delta);
}

// ---------------------------------------------------------------------------
// Simulated engine
// ---------------------------------------------------------------------------

namespace {

struct ResolvedConfig {
  double gamma = 0.0;
  double beta = 0.0;
  double c_strong = 0.0;
};

ResolvedConfig resolve(const ProblemSpec& spec, const RunConfig& cfg,
                       std::uint32_t delta) {
  ResolvedConfig r;
  r.beta = cfg.beta > 0.0 ? cfg.beta : default_beta(spec);
  // c_f~ depends only on beta and the declared block moduli, not on the base
  BlockVector probe = spec.start_point();
  r.c_strong = build_surrogate(cfg.surrogate, spec, 0, probe, r.beta)
                   .strong_convexity();
  for (int i = 1; i < spec.blocks(); ++i)
    r.c_strong = std::min(
        r.c_strong, build_surrogate(cfg.surrogate, spec, i, probe, r.beta)
                        .strong_convexity());
  r.gamma = cfg.gamma > 0.0
                ? cfg.gamma
                : auto_gamma(r.c_strong, spec.smooth->lipschitz(), delta);
  if (r.gamma <= 0.0 || r.gamma > 1.0)
    throw StructuralError("run: gamma must lie in (0, 1]");
  if (r.gamma >=
      max_stepsize_bound(r.c_strong, spec.smooth->lipschitz(), delta))
    std::fprintf(stderr,
                 "warning: gamma %.6g is at or above the stepsize bound "
                 "%.6g; descent is not guaranteed\n",
                 r.gamma,
                 max_stepsize_bound(r.c_strong, spec.smooth->lipschitz(),
                                    delta));
  return r;
}

// Lyapunov tail: delta*Lf/2 * sum of weighted recent squared step norms,
// newest difference weighted delta, oldest weighted 1.
double lyapunov_tail(const std::deque<double>& recent_sq, std::uint32_t delta,
                     double lf) {
  if (delta == 0) return 0.0;
  double s = 0.0;
  double w = static_cast<double>(delta);
  for (auto it = recent_sq.rbegin(); it != recent_sq.rend(); ++it, w -= 1.0)
    s += w * *it;
  return 0.5 * static_cast<double>(delta) * lf * s;
}

double eval_mf(const ProblemSpec& spec, const BlockVector& x, bool ncc,
               double inner_tol) {
  return ncc ? stationarity_ncc(spec, x, inner_tol) : stationarity(spec, x);
}

}  // namespace

Trace run_simulated(const ProblemSpec& spec, const RunConfig& cfg,
                    Scheduler& sched) {
  spec.validate();
  const std::uint32_t delta = std::max(cfg.delta, sched.config().delta);
  const ResolvedConfig rc = resolve(spec, cfg, delta);
  const double lf = spec.smooth->lipschitz();
  const bool ncc = cfg.ncc && spec.has_constraints();

  Trace trace;
  trace.gamma = rc.gamma;
  trace.beta = rc.beta;
  trace.c_strong = rc.c_strong;
  trace.lf = lf;
  trace.delta = delta;
  trace.surrogate = cfg.surrogate;

  BlockVector x = spec.start_point();
  if (ncc) {
    auto rep = check_feasibility(spec, x, cfg.feasibility_tol);
    if (!rep.feasible)
      throw InvariantViolation("run: NCC requires a feasible starting point");
  }

  // History depth must cover the largest delay the scheduler may emit.
  std::uint32_t depth = delta + 1;
  VersionedHistory hist(spec.partition, depth);
  hist.reset(x.raw());

  double F = eval_objective(spec, x);
  trace.F0 = F;
  if (cfg.metric_cadence > 0) trace.MF0 = eval_mf(spec, x, ncc, cfg.inner.tol);
  std::deque<double> recent_sq;  // ||x^{l+1} - x^l||^2, newest at back

  const bool incremental = spec.smooth->has_delta_value();
  std::vector<double> grad_now;
  std::vector<ConstraintSurrogate> css;
  bool reached = false;

  for (std::uint64_t step = 0; step < cfg.budget; ++step) {
    auto ev = sched.next();
    if (!ev.has_value()) break;  // finite replay exhausted
    const ScheduleEvent& e = *ev;
    const int i = e.i;
    if (e.d[i] != 0)
      throw InvariantViolation("run: event violates C3 (d_i != 0)");
    if (e.max_delay() >= depth)
      throw StructuralError(
          "run: event delay exceeds history depth; raise delta");

    BlockVector view = hist.compose(e.d);
    SurrogateModel model = build_surrogate(cfg.surrogate, spec, i, view, rc.beta);
    css.clear();
    if (ncc)
      for (const auto& comp : spec.constraints[i])
        css.push_back(build_constraint_surrogate(comp, x.block(i)));

    BestResponseRequest req{i,
                            &view,
                            &model,
                            spec.regs[i].get(),
                            spec.sets[i].get(),
                            ncc ? &css : nullptr,
                            cfg.inner,
                            nullptr};
    BestResponseResult br;
    try {
      br = ncc ? best_response_ncc(req) : best_response(req);
    } catch (const ConvergenceError& ex) {
      trace.error = ex.what();  // abort with the partial trace
      break;
    }

    const auto xi = x.block(i);
    const int ni = spec.partition->size(i);
    std::vector<double> h(ni);
    double step_sq = 0.0;
    for (int j = 0; j < ni; ++j) {
      const double diff = br.point[j] - xi[j];
      step_sq += diff * diff;
      h[j] = rc.gamma * diff;
    }

    // objective tracking: exact block delta when the smooth term supports it
    double g_old = spec.regs[i]->value(xi);
    if (incremental) {
      grad_now.resize(ni);
      if (e.max_delay() == 0) {
        copy_to(model.base_gradient(), grad_now);
      } else {
        spec.smooth->grad_block(i, x.all(), grad_now);
      }
      F += spec.smooth->delta_value(i, grad_now, h, x.all());
    }
    for (int j = 0; j < ni; ++j) x.block(i)[j] = xi[j] + h[j];
    F += spec.regs[i]->value(x.block(i)) - g_old;
    if (!incremental || (step & 1023) == 1023)
      F = eval_objective(spec, x);  // periodic refresh kills drift

    hist.push(x.raw());
    if (cfg.record_iterates) trace.iterates.push_back(x.raw());
    if (delta > 0) {
      recent_sq.push_back(rc.gamma * rc.gamma * step_sq);
      if (recent_sq.size() > delta) recent_sq.pop_front();
    }

    if (cfg.verify_feasible_each_step && ncc) {
      auto rep = check_feasibility(spec, x, cfg.feasibility_tol);
      if (!rep.feasible) trace.feasibility_violations += 1;
    }

    StepRecord rec;
    rec.k = e.k;
    rec.i = i;
    rec.d_min = *std::min_element(e.d.begin(), e.d.end());
    rec.d_max = e.max_delay();
    rec.step_norm = std::sqrt(step_sq);
    rec.F = F;
    rec.Ftilde = F + lyapunov_tail(recent_sq, delta, lf);
    const bool sample_mf =
        cfg.metric_cadence > 0 && (step + 1) % cfg.metric_cadence == 0;
    if (sample_mf) {
      rec.MF = eval_mf(spec, x, ncc, cfg.inner.tol);
      if (cfg.target_stationarity > 0.0 &&
          rec.MF <= cfg.target_stationarity) {
        trace.steps.push_back(rec);
        trace.events.push_back(e);
        reached = true;
        break;
      }
    }
    trace.steps.push_back(rec);
    trace.events.push_back(e);
  }

  trace.final_x = x.raw();
  trace.final_F = eval_objective(spec, x);
  trace.final_MF = eval_mf(spec, x, ncc, cfg.inner.tol);
  trace.censored = cfg.target_stationarity > 0.0 && !reached &&
                   trace.final_MF > cfg.target_stationarity;
  return trace;
}

// ---------------------------------------------------------------------------
// Threaded engine
// ---------------------------------------------------------------------------

namespace {

inline std::uint64_t fnv1a(std::span<const double> data) {
  std::uint64_t h = 1469598103934665603ull;
  for (double v : data) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xFFu;
      h *= 1099511628211ull;
    }
  }
  return h;
}

struct alignas(64) BlockSlot {
  std::mutex write_lock;
  std::atomic<std::uint64_t> stamp{0};     // even: 2*(writer iteration + 1)
  std::atomic<std::uint64_t> checksum{0};  // fnv of the published block
};

struct WorkerEvent {
  std::uint64_t k;
  int worker;
  int i;
  double step_norm;
  std::int64_t wall_ns;
  std::vector<std::uint32_t> tags;  // per-block version tags = stamp/2
};

void spin_cost(double units) {
  if (units <= 0.0) return;
  volatile double sink = 1.0;
  const long iters = static_cast<long>(units * 2000.0);
  for (long t = 0; t < iters; ++t) sink = sink * 1.0000001 + 1e-9;
  (void)sink;
}

}  // namespace

Trace run_threaded(const ProblemSpec& spec, const RunConfig& cfg) {
  spec.validate();
  if (cfg.workers < 1) throw StructuralError("run: workers must be >= 1");
  const int N = spec.blocks();
  const int n = spec.dim();
  const bool ncc = cfg.ncc && spec.has_constraints();
  const ResolvedConfig rc = resolve(spec, cfg, cfg.delta_cap);

  BlockVector x0v = spec.start_point();
  if (ncc) {
    auto rep = check_feasibility(spec, x0v, cfg.feasibility_tol);
    if (!rep.feasible)
      throw InvariantViolation("run: NCC requires a feasible starting point");
  }

  std::vector<double> shared = x0v.raw();
  std::vector<BlockSlot> slots(N);
  for (int j = 0; j < N; ++j)
    slots[j].checksum.store(fnv1a(x0v.block(j)), std::memory_order_relaxed);

  std::atomic<std::uint64_t> next_k{0};
  std::atomic<std::uint64_t> torn{0};
  std::atomic<bool> failed{false};
  std::mutex error_mu;
  std::string error_msg;

  // worker block assignment
  std::vector<std::vector<int>> partitions;
  if (cfg.partitioned_access) {
    partitions.resize(cfg.workers);
    for (int b = 0; b < N; ++b) partitions[b % cfg.workers].push_back(b);
  }

  std::vector<std::vector<WorkerEvent>> logs(cfg.workers);
  const auto t0 = std::chrono::steady_clock::now();

  auto worker_fn = [&](int w) {
    Rng rng = Rng::stream(cfg.seed, static_cast<std::uint64_t>(w));
    std::vector<int> own;
    std::size_t cursor = 0;
    if (cfg.partitioned_access) {
      own = partitions[w];
      rng.shuffle(own);
    }
    BlockVector local(spec.partition);
    std::vector<std::uint32_t> tags(N);
    std::vector<double> scratch;
    std::vector<ConstraintSurrogate> css;
    auto& log = logs[w];
    log.reserve(cfg.budget / cfg.workers + 16);

    try {
      while (!failed.load(std::memory_order_relaxed) &&
             next_k.load(std::memory_order_relaxed) < cfg.budget) {
        int i;
        if (cfg.partitioned_access) {
          if (own.empty()) break;
          if (cursor == own.size()) {  // epoch boundary
            rng.shuffle(own);
            cursor = 0;
          }
          i = own[cursor++];
        } else {
          i = static_cast<int>(rng.below(static_cast<std::uint64_t>(N)));
        }

        std::unique_lock<std::mutex> guard(slots[i].write_lock);

        // own block: stable while the lock is held
        tags[i] = static_cast<std::uint32_t>(
            slots[i].stamp.load(std::memory_order_acquire) / 2);
        {
          const int off = spec.partition->offset(i);
          for (int c = 0; c < spec.partition->size(i); ++c)
            local.block(i)[c] = shared[off + c];
        }
        // other blocks: seqlock snapshot, stale but never torn
        for (int j = 0; j < N; ++j) {
          if (j == i) continue;
          const int off = spec.partition->offset(j);
          const int nj = spec.partition->size(j);
          while (true) {
            const std::uint64_t s1 =
                slots[j].stamp.load(std::memory_order_acquire);
            if (s1 & 1ull) continue;
            for (int c = 0; c < nj; ++c)
              local.block(j)[c] = std::atomic_ref<double>(shared[off + c])
                                      .load(std::memory_order_relaxed);
            const std::uint64_t sum =
                slots[j].checksum.load(std::memory_order_relaxed);
            std::atomic_thread_fence(std::memory_order_acquire);
            const std::uint64_t s2 =
                slots[j].stamp.load(std::memory_order_relaxed);
            if (s1 == s2) {
              if (fnv1a(local.block(j)) != sum)
                torn.fetch_add(1, std::memory_order_relaxed);
              tags[j] = static_cast<std::uint32_t>(s1 / 2);
              break;
            }
          }
        }

        // solve the block subproblem on the inconsistent view
        SurrogateModel model =
            build_surrogate(cfg.surrogate, spec, i, local, rc.beta);
        css.clear();
        if (ncc)
          for (const auto& comp : spec.constraints[i])
            css.push_back(build_constraint_surrogate(comp, local.block(i)));
        BestResponseRequest req{i,      &local,
                                &model, spec.regs[i].get(),
                                spec.sets[i].get(),
                                ncc ? &css : nullptr,
                                cfg.inner};
        BestResponseResult br = ncc ? best_response_ncc(req) : best_response(req);

        if (!cfg.block_cost.empty()) spin_cost(cfg.block_cost[i]);

        const std::uint64_t k = next_k.fetch_add(1, std::memory_order_acq_rel);
        if (k >= cfg.budget) break;  // someone else finished the budget

        double step_sq = 0.0;
        scratch.resize(spec.partition->size(i));
        for (int c = 0; c < spec.partition->size(i); ++c) {
          const double cur = local.block(i)[c];
          const double diff = br.point[c] - cur;
          step_sq += diff * diff;
          scratch[c] = cur + rc.gamma * diff;
        }

        // publish: odd stamp, write, checksum, even stamp carrying k
        const std::uint64_t odd =
            slots[i].stamp.load(std::memory_order_relaxed) | 1ull;
        slots[i].stamp.store(odd, std::memory_order_relaxed);
        std::atomic_thread_fence(std::memory_order_release);
        {
          const int off = spec.partition->offset(i);
          for (int c = 0; c < spec.partition->size(i); ++c)
            std::atomic_ref<double>(shared[off + c])
                .store(scratch[c], std::memory_order_relaxed);
        }
        slots[i].checksum.store(fnv1a(scratch), std::memory_order_relaxed);
        slots[i].stamp.store(2 * (k + 1), std::memory_order_release);
        guard.unlock();

        WorkerEvent we;
        we.k = k;
        we.worker = w;
        we.i = i;
        we.step_norm = std::sqrt(step_sq);
        we.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
        we.tags = tags;
        log.push_back(std::move(we));
      }
    } catch (const std::exception& ex) {
      failed.store(true, std::memory_order_relaxed);
      std::lock_guard<std::mutex> g(error_mu);
      if (error_msg.empty()) error_msg = ex.what();
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(cfg.workers);
  for (int w = 0; w < cfg.workers; ++w) threads.emplace_back(worker_fn, w);
  for (auto& t : threads) t.join();

  // merge logs, order by commit index
  std::vector<WorkerEvent> merged;
  for (auto& log : logs)
    for (auto& e : log) merged.push_back(std::move(e));
  std::sort(merged.begin(), merged.end(),
            [](const WorkerEvent& a, const WorkerEvent& b) { return a.k < b.k; });

  // canonical delays: freshest iterate index holding the value that was read
  std::vector<std::vector<std::uint64_t>> writes(N);
  for (const auto& e : merged) writes[e.i].push_back(e.k);
  std::vector<ScheduleEvent> events;
  events.reserve(merged.size());
  for (const auto& e : merged) {
    ScheduleEvent se;
    se.k = e.k;
    se.i = e.i;
    se.d.resize(N);
    for (int j = 0; j < N; ++j) {
      const auto& wj = writes[j];
      auto it = std::lower_bound(wj.begin(), wj.end(),
                                 static_cast<std::uint64_t>(e.tags[j]));
      se.d[j] = (it != wj.end() && *it <= e.k)
                    ? static_cast<std::uint32_t>(e.k - *it)
                    : 0u;
    }
    events.push_back(std::move(se));
  }

  std::uint32_t max_delay = 0;
  for (const auto& e : events) max_delay = std::max(max_delay, e.max_delay());

  // replay through the simulated engine to fill F / Ftilde / MF and to
  // cross-check the final iterate
  RunConfig sim_cfg = cfg;
  sim_cfg.engine = EngineKind::kSimulated;
  sim_cfg.gamma = rc.gamma;
  sim_cfg.beta = rc.beta;
  sim_cfg.delta = std::max(cfg.delta_cap, max_delay);
  sim_cfg.budget = events.size();
  sim_cfg.target_stationarity = 0.0;  // replay everything
  SchedulerConfig rcfg;
  rcfg.kind = SchedulerKind::kSharedUniform;
  rcfg.blocks = N;
  rcfg.delta = sim_cfg.delta;
  auto rep_sched = replay(events, rcfg);
  Trace trace = run_simulated(spec, sim_cfg, *rep_sched);
  trace.delta = sim_cfg.delta;  // the bound the Lyapunov column was built with
  trace.c1_unverifiable = max_delay > cfg.delta_cap;
  trace.torn_reads = torn.load();
  trace.error = error_msg;

  // attach wall clock / worker ids; verify the recorded step norms replayed
  for (std::size_t s = 0; s < trace.steps.size() && s < merged.size(); ++s) {
    trace.steps[s].worker = merged[s].worker;
    trace.steps[s].wall_ns = merged[s].wall_ns;
  }

  double max_diff = 0.0;
  for (int c = 0; c < n; ++c)
    max_diff = std::max(max_diff, std::fabs(trace.final_x[c] - shared[c]));
  trace.replay_max_abs_diff = max_diff;
  trace.final_x = shared;  // the live store is the authoritative result
  if (cfg.target_stationarity > 0.0)
    trace.censored = trace.final_MF > cfg.target_stationarity;
  return trace;
}

// ---------------------------------------------------------------------------
// Run-trace CSV
// ---------------------------------------------------------------------------

void write_trace_csv(const std::string& path, const Trace& trace) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) throw StructuralError("cannot open " + path);
  std::fputs("k,worker,i,d_min,d_max,step_norm,F,Ftilde,MF,wall_ns\n", f);
  for (const auto& s : trace.steps) {
    std::fprintf(f, "%llu,%d,%d,%u,%u,%.17g,%.17g,%.17g,",
                 static_cast<unsigned long long>(s.k), s.worker, s.i, s.d_min,
                 s.d_max, s.step_norm, s.F, s.Ftilde);
    if (std::isnan(s.MF))
      std::fputs(",", f);
    else
      std::fprintf(f, "%.17g,", s.MF);
    std::fprintf(f, "%lld\n", static_cast<long long>(s.wall_ns));
  }
  std::fclose(f);
}

Trace read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw StructuralError("cannot open " + path);
  Trace trace;
  std::string line;
  if (!std::getline(in, line))
    throw StructuralError("trace csv: missing header");
  if (line.rfind("k,worker,i", 0) != 0)
    throw StructuralError("trace csv: unexpected schema");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    StepRecord r;
    auto next_cell = [&](bool required) -> std::optional<std::string> {
      if (!std::getline(ss, cell, ',')) {
        if (required) throw StructuralError("trace csv: short row");
        return std::nullopt;
      }
      return cell;
    };
    r.k = std::stoull(*next_cell(true));
    r.worker = std::stoi(*next_cell(true));
    r.i = std::stoi(*next_cell(true));
    r.d_min = static_cast<std::uint32_t>(std::stoul(*next_cell(true)));
    r.d_max = static_cast<std::uint32_t>(std::stoul(*next_cell(true)));
    r.step_norm = std::stod(*next_cell(true));
    r.F = std::stod(*next_cell(true));
    r.Ftilde = std::stod(*next_cell(true));
    auto mf = next_cell(true);
    r.MF = (mf->empty()) ? std::numeric_limits<double>::quiet_NaN()
                         : std::stod(*mf);
    auto wall = next_cell(false);
    r.wall_ns = wall ? std::stoll(*wall) : 0;
    trace.steps.push_back(r);
  }
  if (!trace.steps.empty()) {
    trace.final_F = trace.steps.back().F;
    for (auto it = trace.steps.rbegin(); it != trace.steps.rend(); ++it)
      if (!std::isnan(it->MF)) {
        trace.final_MF = it->MF;
        break;
      }
  }
  return trace;
}

}  // namespace asyflexa
