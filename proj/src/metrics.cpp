#include "asyflexa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>

#include "asyflexa/surrogate.hpp"

namespace asyflexa {

double stationarity(const ProblemSpec& spec, const BlockVector& x) {
  // project first so the mapping is evaluated on X
  BlockVector xp(spec.partition);
  for (int i = 0; i < spec.blocks(); ++i)
    spec.sets[i]->project(x.block(i), xp.block(i));

  double total = 0.0;
  std::vector<double> g, v, y;
  for (int i = 0; i < spec.blocks(); ++i) {
    const int ni = spec.partition->size(i);
    g.resize(ni);
    v.resize(ni);
    y.resize(ni);
    spec.smooth->grad_block(i, xp.all(), g);
    for (int j = 0; j < ni; ++j) v[j] = xp.block(i)[j] - g[j];
    composite_prox(*spec.regs[i], *spec.sets[i], 1.0, v, y);
    for (int j = 0; j < ni; ++j) {
      const double m = xp.block(i)[j] - y[j];
      total += m * m;
    }
  }
  return std::sqrt(total);
}

double stationarity_ncc(const ProblemSpec& spec, const BlockVector& x,
                        double inner_tol) {
  if (!spec.has_constraints()) return stationarity(spec, x);
  auto rep = check_feasibility(spec, x, 1e-7);
  if (!rep.feasible)
    throw InvariantViolation("stationarity_ncc: infeasible point");

  double total = 0.0;
  std::vector<double> g, v, y, tmp;
  for (int i = 0; i < spec.blocks(); ++i) {
    const int ni = spec.partition->size(i);
    g.resize(ni);
    v.resize(ni);
    y.resize(ni);
    spec.smooth->grad_block(i, x.all(), g);
    for (int j = 0; j < ni; ++j) v[j] = x.block(i)[j] - g[j];

    std::vector<ConstraintSurrogate> css;
    for (const auto& comp : spec.constraints[i])
      css.push_back(build_constraint_surrogate(comp, x.block(i)));

    // prox of g + X + surrogate sets at v (unit weight)
    std::vector<std::function<void(std::span<const double>, std::span<double>)>>
        ops;
    if (!spec.regs[i]->is_zero())
      ops.push_back(
          [&spec, i](std::span<const double> in, std::span<double> o) {
            spec.regs[i]->prox(1.0, in, o);
          });
    if (!spec.sets[i]->is_whole_space())
      ops.push_back(
          [&spec, i](std::span<const double> in, std::span<double> o) {
            spec.sets[i]->project(in, o);
          });
    for (const auto& cs : css)
      ops.push_back([&cs](std::span<const double> in, std::span<double> o) {
        cs.project(in, o);
      });
    if (ops.empty()) {
      copy_to(v, y);
    } else if (ops.size() == 1) {
      ops[0](v, y);
    } else {
      dykstra_prox(ops, v, y, 2000, inner_tol);
    }
    for (int j = 0; j < ni; ++j) {
      const double m = x.block(i)[j] - y[j];
      total += m * m;
    }
  }
  return std::sqrt(total);
}

double lyapunov(const std::vector<std::vector<double>>& window,
                const ProblemSpec& spec, std::uint32_t delta, double lf) {
  if (window.size() != static_cast<std::size_t>(delta) + 1)
    throw StructuralError("lyapunov: window must hold delta + 1 iterates");
  BlockVector xk(spec.partition, window.back());
  double s = eval_objective(spec, xk);
  // weight on ||x^{l+1} - x^l||^2 is l - (k-1) + delta: oldest 1, newest delta
  for (std::uint32_t j = 0; j < delta; ++j) {
    const double w = static_cast<double>(j + 1);
    s += 0.5 * static_cast<double>(delta) * lf * w *
         sq_dist(window[j + 1], window[j]);
  }
  return s;
}

std::pair<double, double> complexity_constants(const TheoryConstants& tc) {
  if (tc.alpha <= 0.0 || tc.alpha >= 1.0)
    throw StructuralError("complexity: alpha must lie strictly in (0, 1)");
  if (tc.p_min <= 0.0 || tc.p_min > 1.0)
    throw StructuralError("complexity: p_min must lie in (0, 1]");
  const double bound = max_stepsize_bound(tc.c_strong, tc.lf, tc.delta);
  if (tc.gamma <= 0.0 || tc.gamma >= bound)
    throw StructuralError("complexity: gamma must lie below the stepsize bound");
  const double dd = static_cast<double>(tc.delta);
  const double denom = tc.gamma *
                       (tc.c_strong - tc.gamma * (tc.lf + 0.5 * dd * dd * tc.lf)) *
                       (tc.p_min - tc.p_min * tc.alpha);
  const double l_yhat = tc.lf + 1.0;
  const double blocks_term = tc.gamma * tc.gamma * tc.p_min / tc.alpha *
                             (1.0 + l_yhat * l_yhat);
  const double c1 =
      2.0 * (1.0 + (1.0 + tc.lip_inner) * (1.0 + tc.lip_base + tc.lip_inner) +
             blocks_term * static_cast<double>(tc.blocks_n)) /
      denom;
  const double c2 = 2.0 * static_cast<double>(tc.window) * tc.lip_base *
                    (1.0 + tc.lip_base + tc.lip_inner) / denom;
  return {c1, c2};
}

DescentReport check_lyapunov_descent(const Trace& trace,
                                     const ProblemSpec& spec,
                                     const TheoryConstants& tc, double tol) {
  DescentReport rep;
  rep.tol = tol >= 0.0 ? tol : 1e-9 * (1.0 + std::fabs(trace.F0));
  rep.min_slack = std::numeric_limits<double>::infinity();
  const double dd = static_cast<double>(tc.delta);
  const double coeff =
      tc.gamma * (tc.c_strong - tc.gamma * (tc.lf + 0.5 * dd * dd * tc.lf));

  // rebuild Ftilde from the F and step_norm columns (independent of the
  // engine's own Ftilde accounting)
  std::deque<double> recent;
  double prev = trace.F0;  // Ftilde at k = 0 equals F(x^0)
  for (const auto& s : trace.steps) {
    recent.push_back(tc.gamma * tc.gamma * s.step_norm * s.step_norm);
    if (recent.size() > tc.delta) recent.pop_front();
    double tail = 0.0;
    double w = dd;
    for (auto it = recent.rbegin(); it != recent.rend(); ++it, w -= 1.0)
      tail += w * *it;
    const double ftilde = s.F + 0.5 * dd * tc.lf * tail;
    const double slack = prev - ftilde - coeff * s.step_norm * s.step_norm;
    rep.min_slack = std::min(rep.min_slack, slack);
    if (slack < -rep.tol) rep.violations += 1;
    rep.checked += 1;
    prev = ftilde;
  }
  if (rep.checked == 0) rep.min_slack = 0.0;
  rep.pass = rep.violations == 0;
  (void)spec;
  return rep;
}

DelayReport delay_stats(const std::vector<ScheduleEvent>& events, int blocks,
                        std::uint32_t delta, int window) {
  if (events.empty()) throw StructuralError("delay_stats: empty trace");
  DelayReport rep;
  rep.per_block_avg.assign(blocks, 0.0);
  rep.updates_per_block.assign(blocks, 0);

  double sum = 0.0;
  std::uint64_t count = 0;
  for (const auto& e : events) {
    double esum = 0.0;
    for (auto v : e.d) {
      esum += v;
      rep.max_delay = std::max(rep.max_delay, v);
    }
    sum += esum;
    count += e.d.size();
    rep.per_block_avg[e.i] += esum / static_cast<double>(e.d.size());
    rep.updates_per_block[e.i] += 1;
  }
  rep.avg_delay = sum / static_cast<double>(count);
  for (int b = 0; b < blocks; ++b)
    if (rep.updates_per_block[b] > 0)
      rep.per_block_avg[b] /= static_cast<double>(rep.updates_per_block[b]);

  // M_i^k = max_{l in [k, k+T]} |Kbar_i^l| with Kbar_i^l the updates of i in
  // [l - delta, l - 1]; C = max over i and k.
  const std::int64_t K = static_cast<std::int64_t>(events.size());
  const std::int64_t D = static_cast<std::int64_t>(delta);
  const std::int64_t T = std::max(window, 1);
  int c_bound = 0;
  std::vector<std::vector<std::int64_t>> per_block_updates(blocks);
  for (std::int64_t t = 0; t < K; ++t)
    per_block_updates[events[t].i].push_back(t);
  for (int b = 0; b < blocks; ++b) {
    const auto& ups = per_block_updates[b];
    // |Kbar_b^l| for l = 0..K via two pointers, then sliding max over T+1
    std::vector<int> kbar(K + 1, 0);
    std::size_t lo = 0, hi = 0;
    for (std::int64_t l = 0; l <= K; ++l) {
      while (hi < ups.size() && ups[hi] <= l - 1) ++hi;
      while (lo < ups.size() && ups[lo] < l - D) ++lo;
      kbar[l] = static_cast<int>(hi - lo);
    }
    std::deque<std::int64_t> dq;  // indices, values decreasing
    for (std::int64_t l = 0; l <= K; ++l) {
      while (!dq.empty() && kbar[dq.back()] <= kbar[l]) dq.pop_back();
      dq.push_back(l);
      while (dq.front() < l - T) dq.pop_front();
      if (l >= T) c_bound = std::max(c_bound, kbar[dq.front()]);
    }
  }
  rep.window_bound = c_bound;
  return rep;
}

KEpsilonTable k_epsilon(const std::vector<Trace>& traces,
                        const std::vector<double>& eps_levels,
                        const TheoryConstants& tc, double f0, double f_star) {
  if (traces.empty()) throw StructuralError("k_epsilon: no traces");
  // collect the sampled (k, ||M_F||^2) series per trace; require matching ks;
  // the k = 0 entry comes from the recorded ||M_F(x^0)|| when present
  std::vector<std::uint64_t> ks;
  std::vector<double> mean_sq;
  bool have_mf0 = true;
  for (const auto& t : traces) have_mf0 = have_mf0 && std::isfinite(t.MF0);
  for (std::size_t t = 0; t < traces.size(); ++t) {
    std::size_t idx = 0;
    if (have_mf0) {
      if (t == 0) {
        ks.push_back(0);
        mean_sq.push_back(traces[t].MF0 * traces[t].MF0);
      } else {
        mean_sq[0] += traces[t].MF0 * traces[t].MF0;
      }
      ++idx;
    }
    for (const auto& s : traces[t].steps) {
      if (std::isnan(s.MF)) continue;
      if (t == 0) {
        ks.push_back(s.k);
        mean_sq.push_back(s.MF * s.MF);
      } else {
        if (idx >= ks.size() || ks[idx] != s.k)
          throw StructuralError("k_epsilon: traces disagree on the cadence");
        mean_sq[idx] += s.MF * s.MF;
      }
      ++idx;
    }
  }
  for (auto& v : mean_sq) v /= static_cast<double>(traces.size());

  KEpsilonTable table;
  auto [c1, c2] = complexity_constants(tc);
  const double capC = static_cast<double>(tc.delta);  // worst case C = delta
  for (double eps : eps_levels) {
    KEpsilonRow row;
    row.epsilon = eps;
    row.censored = true;
    for (std::size_t j = 0; j < ks.size(); ++j) {
      if (mean_sq[j] <= eps) {
        row.k_empirical = ks[j];
        row.censored = false;
        break;
      }
    }
    row.k_bound = (c1 * (tc.window + 1) +
                   c2 * tc.gamma * tc.gamma * capC * (tc.window + capC)) *
                  (f0 - f_star) / eps;
    table.rows.push_back(row);
  }

  // least-squares slope of log K vs log(1/eps) over the uncensored rows
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  int m = 0;
  for (const auto& row : table.rows) {
    if (row.censored || row.k_empirical == 0) continue;
    const double lx = std::log(1.0 / row.epsilon);
    const double ly = std::log(static_cast<double>(row.k_empirical));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++m;
  }
  if (m >= 2) {
    const double denom = m * sxx - sx * sx;
    if (std::fabs(denom) > 1e-30)
      table.loglog_slope = (m * sxy - sx * sy) / denom;
  }
  return table;
}

std::vector<SpeedupRow> speedup_report(const std::vector<Trace>& traces,
                                       const std::vector<int>& worker_counts,
                                       double target) {
  if (traces.size() != worker_counts.size())
    throw StructuralError("speedup: one trace per worker count required");
  std::vector<SpeedupRow> rows;
  double t1 = 0.0;
  for (std::size_t r = 0; r < traces.size(); ++r) {
    SpeedupRow row;
    row.workers = worker_counts[r];
    row.censored = true;
    for (const auto& s : traces[r].steps) {
      if (!std::isnan(s.MF) && s.MF <= target) {
        row.seconds_to_target = static_cast<double>(s.wall_ns) * 1e-9;
        row.censored = false;
        break;
      }
    }
    if (r == 0) t1 = row.seconds_to_target;
    if (!row.censored && row.seconds_to_target > 0.0 && t1 > 0.0) {
      row.speedup = t1 / row.seconds_to_target;
      row.efficiency = row.speedup / row.workers;
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace asyflexa
