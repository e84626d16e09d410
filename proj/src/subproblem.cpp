#include "asyflexa/subproblem.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace asyflexa {

namespace {

// prox of g + indicators of the set and all projectable surrogate-feasible
// regions, evaluated through cyclic Dykstra; exact shapes project in closed
// form. General convex shapes are excluded (the barrier path owns those).
void constrained_prox(const BestResponseRequest& req, double t,
                      std::span<const double> v, std::span<double> out) {
  const bool has_cs = req.constraint_surrogates != nullptr &&
                      !req.constraint_surrogates->empty();
  if (!has_cs) {
    composite_prox(*req.reg, *req.set, t, v, out);
    return;
  }
  std::vector<std::function<void(std::span<const double>, std::span<double>)>>
      ops;
  if (!req.reg->is_zero())
    ops.push_back([&req, t](std::span<const double> in, std::span<double> o) {
      req.reg->prox(t, in, o);
    });
  if (!req.set->is_whole_space())
    ops.push_back([&req](std::span<const double> in, std::span<double> o) {
      req.set->project(in, o);
    });
  for (const auto& cs : *req.constraint_surrogates) {
    if (cs.shape() == SurrogateShape::kGeneralConvex) continue;
    ops.push_back([&cs](std::span<const double> in, std::span<double> o) {
      cs.project(in, o);
    });
  }
  if (ops.empty()) {
    copy_to(v, out);
    return;
  }
  if (ops.size() == 1) {
    ops[0](v, out);
    return;
  }
  dykstra_prox(ops, v, out);
}

// A final cyclic-projection polish so the returned point satisfies the
// surrogate constraints and the set to machine precision (the D3 chain then
// yields true-constraint feasibility). General convex shapes come from the
// strictly interior barrier path and need no polish.
void feasibility_polish(const BestResponseRequest& req, std::span<double> z,
                        int passes = 64) {
  if (req.constraint_surrogates == nullptr) return;
  std::vector<double> tmp(z.size());
  for (int p = 0; p < passes; ++p) {
    bool moved = false;
    for (const auto& cs : *req.constraint_surrogates) {
      if (cs.shape() == SurrogateShape::kGeneralConvex) continue;
      if (cs.value(z) > 0.0) {
        cs.project(z, tmp);
        copy_to(tmp, z);
        moved = true;
      }
    }
    if (!req.set->contains(z, 0.0)) {
      req.set->project(z, tmp);
      copy_to(tmp, z);
      moved = true;
    }
    if (!moved) return;
  }
}

bool all_shapes_projectable(const BestResponseRequest& req) {
  if (req.constraint_surrogates == nullptr) return true;
  for (const auto& cs : *req.constraint_surrogates)
    if (cs.shape() == SurrogateShape::kGeneralConvex) return false;
  return true;
}

// FISTA with gradient-mapping restart on f~ + g + indicators.
BestResponseResult fista_solve(const BestResponseRequest& req,
                               std::span<const double> start) {
  const SurrogateModel& f = *req.surrogate;
  const std::size_t ni = start.size();
  const double step = 1.0 / f.lip_inner();
  const double tres = 1.0 / (f.strong_convexity() + f.lip_inner());

  std::vector<double> z(start.begin(), start.end());
  std::vector<double> zp(z), y(z), g(ni), cand(ni), next(ni);
  const double scale = 1.0 + norm2(f.base_gradient());
  const double tol = req.options.tol * scale;

  double theta = 1.0;
  BestResponseResult res;
  for (int it = 0; it < req.options.max_iters; ++it) {
    f.grad(y, g);
    for (std::size_t j = 0; j < ni; ++j) cand[j] = y[j] - step * g[j];
    constrained_prox(req, step, cand, next);

    // restart when momentum points against the step
    double inner = 0.0;
    for (std::size_t j = 0; j < ni; ++j)
      inner += (y[j] - next[j]) * (next[j] - z[j]);
    if (inner > 0.0) {
      theta = 1.0;
      copy_to(z, y);
      f.grad(y, g);
      for (std::size_t j = 0; j < ni; ++j) cand[j] = y[j] - step * g[j];
      constrained_prox(req, step, cand, next);
    }

    copy_to(z, zp);
    copy_to(next, z);
    const double theta_next =
        0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
    const double mom = (theta - 1.0) / theta_next;
    for (std::size_t j = 0; j < ni; ++j)
      y[j] = z[j] + mom * (z[j] - zp[j]);
    theta = theta_next;

    if (it % 4 == 3 || it == req.options.max_iters - 1) {
      f.grad(z, g);
      for (std::size_t j = 0; j < ni; ++j) cand[j] = z[j] - tres * g[j];
      constrained_prox(req, tres, cand, next);
      double r = 0.0;
      for (std::size_t j = 0; j < ni; ++j)
        r += (z[j] - next[j]) * (z[j] - next[j]);
      res.residual = std::sqrt(r);
      if (res.residual <= tol) {
        res.point = std::move(z);
        res.iterations = it + 1;
        return res;
      }
    }
  }
  throw ConvergenceError("best response: inner solver did not reach tolerance",
                         std::move(z), res.residual);
}

// Log-barrier path for general convex surrogate shapes: projected gradient
// on f~ + g + mu * sum_j -log(-c~_j), mu shrinking by 0.2 per stage.
BestResponseResult barrier_solve(const BestResponseRequest& req,
                                 std::span<const double> start) {
  const SurrogateModel& f = *req.surrogate;
  const auto& css = *req.constraint_surrogates;
  const std::size_t ni = start.size();

  std::vector<double> z(start.begin(), start.end());
  std::vector<double> g(ni), gc(ni), cand(ni), next(ni), tmp(ni);

  // Strictly interior start: pull inward along the surrogate gradients.
  auto max_cval = [&](std::span<const double> p) {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& cs : css) m = std::max(m, cs.value(p));
    return m;
  };
  for (int tries = 0; tries < 200 && max_cval(z) >= 0.0; ++tries) {
    for (const auto& cs : css) {
      if (cs.value(z) >= 0.0) {
        cs.grad(z, gc);
        const double gn = sq_norm(gc);
        if (gn == 0.0) break;
        const double push = (cs.value(z) + 1e-3) / gn;
        for (std::size_t j = 0; j < ni; ++j) cand[j] = z[j] - push * gc[j];
        req.set->project(cand, z);
      }
    }
  }
  if (max_cval(z) >= 0.0)
    throw ConvergenceError("barrier: no strictly feasible interior point",
                           std::move(z), max_cval(z));

  const double scale = 1.0 + norm2(f.base_gradient());
  const double tol = req.options.tol * scale;
  double mu = req.options.barrier_mu0;
  int total_it = 0;

  // smooth part of the barrier objective (f~ plus the log terms)
  auto smooth_val = [&](std::span<const double> p) {
    double s = f.value(p);
    for (const auto& cs : css) s -= mu * std::log(-cs.value(p));
    return s;
  };

  while (true) {
    double step = 1.0 / (f.lip_inner() + mu);
    for (int it = 0; it < req.options.max_iters; ++it, ++total_it) {
      f.grad(z, g);
      for (const auto& cs : css) {
        const double c = cs.value(z);
        cs.grad(z, gc);
        axpy(-mu / c, gc, g);  // c < 0 in the interior
      }
      const double fz = smooth_val(z);
      step = std::min(step * 2.0, 1.0 / (f.lip_inner() + mu));
      bool moved = false;
      for (int bt = 0; bt < 80; ++bt) {
        for (std::size_t j = 0; j < ni; ++j) cand[j] = z[j] - step * g[j];
        composite_prox(*req.reg, *req.set, step, cand, next);
        if (max_cval(next) < 0.0) {
          // descent-lemma acceptance keeps the barrier objective monotone
          double lin = 0.0, d2 = 0.0;
          for (std::size_t j = 0; j < ni; ++j) {
            const double d = next[j] - z[j];
            lin += g[j] * d;
            d2 += d * d;
          }
          if (smooth_val(next) <= fz + lin + 0.5 * d2 / step + 1e-14 * scale) {
            moved = true;
            break;
          }
        }
        step *= 0.5;
      }
      if (!moved) break;
      double delta = std::sqrt(sq_dist(z, next));
      copy_to(next, z);
      if (delta <= 0.05 * tol * step / (1.0 + step)) break;
      if (total_it > 50 * req.options.max_iters)
        throw ConvergenceError("barrier: iteration budget exhausted",
                               std::move(z), delta);
    }
    if (mu <= req.options.tol) break;
    mu *= 0.2;
  }

  BestResponseResult res;
  res.iterations = total_it;
  // barrier KKT certificate: prox residual of the final barrier problem
  // plus the remaining barrier weight
  {
    const std::size_t nz = z.size();
    std::vector<double> gb(nz), cand(nz), p(nz);
    f.grad(z, gb);
    for (const auto& cs : css) {
      const double c = cs.value(z);
      cs.grad(z, gc);
      if (c < 0.0) axpy(-mu / c, gc, gb);
    }
    const double t = 1.0 / (f.lip_inner() + mu * 100.0);
    for (std::size_t j = 0; j < nz; ++j) cand[j] = z[j] - t * gb[j];
    composite_prox(*req.reg, *req.set, t, cand, p);
    res.residual = std::sqrt(sq_dist(z, p)) + mu;
  }
  res.point = std::move(z);
  return res;
}

}  // namespace

double best_response_residual(const BestResponseRequest& req,
                              std::span<const double> z) {
  const SurrogateModel& f = *req.surrogate;
  const std::size_t ni = z.size();
  const double t = 1.0 / (f.strong_convexity() + f.lip_inner());
  std::vector<double> g(ni), cand(ni), p(ni);
  f.grad(z, g);
  for (std::size_t j = 0; j < ni; ++j) cand[j] = z[j] - t * g[j];
  constrained_prox(req, t, cand, p);
  double r = std::sqrt(sq_dist(z, p));
  // general shapes are not part of the prox; count their violation instead
  if (req.constraint_surrogates != nullptr)
    for (const auto& cs : *req.constraint_surrogates)
      if (cs.shape() == SurrogateShape::kGeneralConvex)
        r += std::max(0.0, cs.value(z));
  return r;
}

BestResponseResult best_response(const BestResponseRequest& req) {
  if (req.surrogate == nullptr || req.delayed_view == nullptr ||
      req.reg == nullptr || req.set == nullptr)
    throw StructuralError("best_response: incomplete request");
  const SurrogateModel& f = *req.surrogate;
  const auto yi = f.base_block();
  const std::size_t ni = yi.size();

  if (f.kind() == SurrogateKind::kProxLinear) {
    const double inv2b = 1.0 / (2.0 * f.beta());
    std::vector<double> cand(ni);
    const auto g0 = f.base_gradient();
    for (std::size_t j = 0; j < ni; ++j) cand[j] = yi[j] - inv2b * g0[j];
    // closed forms: soft-threshold + clip for separable g on box/whole
    // space, plain projection when g is zero
    const bool separable_ok =
        (req.set->is_whole_space() || req.set->is_box()) &&
        req.reg->separable();
    if (separable_ok || req.reg->is_zero()) {
      BestResponseResult res;
      res.point.resize(ni);
      composite_prox(*req.reg, *req.set, inv2b, cand, res.point);
      res.closed_form = true;
      return res;
    }
  }
  return fista_solve(req, req.start != nullptr ? std::span<const double>(*req.start)
                                               : yi);
}

BestResponseResult best_response_ncc(const BestResponseRequest& req) {
  if (req.constraint_surrogates == nullptr ||
      req.constraint_surrogates->empty())
    return best_response(req);

  // Iterate-feasibility invariant: the block's current value is feasible for the
  // surrogate set (D2 makes the base itself surrogate-feasible).
  const auto yi = req.surrogate->base_block();
  for (const auto& cs : *req.constraint_surrogates) {
    if (cs.value(yi) > req.options.feas_tol)
      throw InvariantViolation(
          "best_response_ncc: current block violates its constraints");
  }

  const std::span<const double> start =
      req.start != nullptr ? std::span<const double>(*req.start) : yi;
  BestResponseResult res = all_shapes_projectable(req)
                               ? fista_solve(req, start)
                               : barrier_solve(req, start);
  feasibility_polish(req, res.point);
  return res;
}

// ---------------------------------------------------------------------------
// Best-response map property verification
// ---------------------------------------------------------------------------

PropertyReport verify_best_response_properties(const ProblemSpec& spec,
                                               SurrogateKind kind, int trials,
                                               std::uint64_t seed, double beta,
                                               double tol, double ratio_slack) {
  if (trials < 1) throw StructuralError("verify: trials must be >= 1");
  if (beta <= 0.0) beta = default_beta(spec);
  const bool ncc = spec.has_constraints();
  Rng rng(seed);

  PropertyReport rep;
  rep.trials = trials;
  rep.descent_min_margin = std::numeric_limits<double>::infinity();

  BlockVector base = spec.start_point();
  const double spread = 1.0;

  auto random_point = [&](BlockVector& out) {
    out = base;
    for (int b = 0; b < spec.blocks(); ++b) {
      std::vector<double> raw(spec.partition->size(b));
      for (std::size_t j = 0; j < raw.size(); ++j)
        raw[j] = base.block(b)[j] + spread * rng.normal();
      spec.sets[b]->project(raw, out.block(b));
      if (ncc) {
        // keep the sample feasible for the true constraints: project onto
        // the dc surrogate set built at the sample itself repeatedly
        for (int pass = 0; pass < 50; ++pass) {
          bool ok = true;
          for (const auto& comp : spec.constraints[b]) {
            if (comp.fn->value(out.block(b)) > 0.0) {
              ok = false;
              auto cs = build_constraint_surrogate(comp, base.block(b));
              std::vector<double> tmp(raw.size());
              cs.project(out.block(b), tmp);
              copy_to(tmp, out.block(b));
            }
          }
          if (ok) break;
        }
      }
    }
  };

  BlockVector y, z;
  std::vector<double> gy;
  for (int t = 0; t < trials; ++t) {
    const int i = static_cast<int>(rng.below(spec.blocks()));
    const int ni = spec.partition->size(i);
    random_point(y);
    random_point(z);

    SurrogateModel sy = build_surrogate(kind, spec, i, y, beta);
    SurrogateModel sz = build_surrogate(kind, spec, i, z, beta);
    if (t == 0) rep.declared_ratio_bound = sy.lip_base() / sy.strong_convexity();

    std::vector<ConstraintSurrogate> csy, csz;
    if (ncc) {
      for (const auto& comp : spec.constraints[i]) {
        csy.push_back(build_constraint_surrogate(comp, y.block(i)));
        csz.push_back(build_constraint_surrogate(comp, z.block(i)));
      }
    }

    BestResponseRequest ry{i, &y, &sy, spec.regs[i].get(), spec.sets[i].get(),
                           ncc ? &csy : nullptr, {}};
    BestResponseRequest rz{i, &z, &sz, spec.regs[i].get(), spec.sets[i].get(),
                           ncc ? &csz : nullptr, {}};
    auto xy = ncc ? best_response_ncc(ry) : best_response(ry);
    auto xz = ncc ? best_response_ncc(rz) : best_response(rz);

    // descent: (x^ - y_i)' grad_i f(y) + g(x^) - g(y_i) <= -c ||x^ - y_i||^2
    gy.resize(ni);
    spec.smooth->grad_block(i, y.all(), gy);
    double lhs = spec.regs[i]->value(xy.point) - spec.regs[i]->value(y.block(i));
    double d2 = 0.0;
    for (int j = 0; j < ni; ++j) {
      const double d = xy.point[j] - y.block(i)[j];
      lhs += d * gy[j];
      d2 += d * d;
    }
    const double margin = -sy.strong_convexity() * d2 - lhs;
    rep.descent_min_margin = std::min(rep.descent_min_margin, margin);
    if (margin < -tol) rep.descent_violations += 1;

    // Lipschitz ratio (convex case) / Hoelder-1/2 fit (NCC case)
    const double dist = std::sqrt(sq_dist(y.all(), z.all()));
    if (dist > 1e-12) {
      const double num = std::sqrt(sq_dist(xy.point, xz.point));
      rep.max_lipschitz_ratio = std::max(rep.max_lipschitz_ratio, num / dist);
      rep.fitted_holder_const =
          std::max(rep.fitted_holder_const, num / std::sqrt(dist));
    }
  }

  rep.pass = rep.descent_violations == 0 &&
             (ncc || rep.max_lipschitz_ratio <=
                         rep.declared_ratio_bound * ratio_slack);
  return rep;
}

}  // namespace asyflexa
