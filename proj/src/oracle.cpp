#include "asyflexa/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace asyflexa {
namespace oracle {

namespace {

// The oracle keeps its own prox/projection code so the cross-check does not
// share descent logic with the main pipeline.

double reg_lambda(const Regularizer& g) {
  if (g.is_zero()) return 0.0;
  const auto* l1 = dynamic_cast<const L1Reg*>(&g);
  if (l1 == nullptr)
    throw StructuralError("oracle: unsupported regularizer kind " + g.kind());
  return l1->lambda();
}

void own_soft_clip(double lambda_t, const BlockSet& X,
                   std::span<const double> v, std::span<double> out) {
  for (std::size_t j = 0; j < v.size(); ++j) {
    double z = v[j];
    if (z > lambda_t)
      z -= lambda_t;
    else if (z < -lambda_t)
      z += lambda_t;
    else
      z = 0.0;
    out[j] = z;
  }
  if (X.is_whole_space()) return;
  if (const auto* box = dynamic_cast<const BoxSet*>(&X)) {
    for (std::size_t j = 0; j < v.size(); ++j)
      out[j] = std::min(box->hi()[j], std::max(box->lo()[j], out[j]));
    return;
  }
  if (lambda_t == 0.0) {
    if (const auto* ball = dynamic_cast<const BallSet*>(&X)) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < v.size(); ++j) {
        const double t = out[j] - ball->center()[j];
        d2 += t * t;
      }
      const double d = std::sqrt(d2);
      if (d > ball->radius()) {
        const double s = ball->radius() / d;
        for (std::size_t j = 0; j < v.size(); ++j)
          out[j] = ball->center()[j] + s * (out[j] - ball->center()[j]);
      }
      return;
    }
  }
  throw StructuralError("oracle: unsupported set kind " + X.kind());
}

// Exact projection onto the intersection of simple pieces via the oracle's
// own Dykstra loop (balls, halfspaces, boxes).
struct Piece {
  // ball: ||x - c|| <= r;  halfspace: a'x <= b;  box via lo/hi
  enum Kind { kBall, kHalf, kBox } kind;
  std::vector<double> c, a, lo, hi;
  double r = 0.0, b = 0.0;

  void project(std::span<const double> v, std::span<double> out) const {
    copy_to(v, out);
    switch (kind) {
      case kBall: {
        double d2 = 0.0;
        for (std::size_t j = 0; j < v.size(); ++j) {
          const double t = out[j] - c[j];
          d2 += t * t;
        }
        const double d = std::sqrt(d2);
        if (d > r && d > 0.0) {
          const double s = r / d;
          for (std::size_t j = 0; j < v.size(); ++j)
            out[j] = c[j] + s * (out[j] - c[j]);
        }
        return;
      }
      case kHalf: {
        double av = 0.0, aa = 0.0;
        for (std::size_t j = 0; j < v.size(); ++j) {
          av += a[j] * out[j];
          aa += a[j] * a[j];
        }
        if (av > b && aa > 0.0) {
          const double s = (av - b) / aa;
          for (std::size_t j = 0; j < v.size(); ++j) out[j] -= s * a[j];
        }
        return;
      }
      case kBox:
        for (std::size_t j = 0; j < v.size(); ++j)
          out[j] = std::min(hi[j], std::max(lo[j], out[j]));
        return;
    }
  }
};

void own_dykstra(const std::vector<Piece>& pieces, std::span<const double> v,
                 std::span<double> out) {
  const std::size_t n = v.size();
  std::vector<std::vector<double>> corr(pieces.size(),
                                        std::vector<double>(n, 0.0));
  std::vector<double> z(v.begin(), v.end()), in(n), prev(n);
  for (int sweep = 0; sweep < 2000; ++sweep) {
    copy_to(z, prev);
    for (std::size_t p = 0; p < pieces.size(); ++p) {
      for (std::size_t j = 0; j < n; ++j) in[j] = z[j] + corr[p][j];
      pieces[p].project(in, z);
      for (std::size_t j = 0; j < n; ++j) corr[p][j] = in[j] - z[j];
    }
    if (sweep > 0 && std::sqrt(sq_dist(z, prev)) < 1e-14 * (1.0 + norm2(v)))
      break;
  }
  copy_to(z, out);
}

std::vector<Piece> ncc_pieces(const ProblemSpec& spec, int i,
                              std::span<const double> yi) {
  std::vector<Piece> pieces;
  if (const auto* box = dynamic_cast<const BoxSet*>(spec.sets[i].get())) {
    Piece p;
    p.kind = Piece::kBox;
    p.lo = box->lo();
    p.hi = box->hi();
    pieces.push_back(std::move(p));
  } else if (!spec.sets[i]->is_whole_space()) {
    throw StructuralError("oracle: unsupported set for NCC sweeps");
  }
  for (const auto& comp : spec.constraints[i]) {
    const std::size_t nj = yi.size();
    std::vector<double> g(nj);
    comp.fn->grad(yi, g);
    const double cy = comp.fn->value(yi);
    if (comp.surrogate == ConstraintSurrogateKind::kDescentLemma) {
      // c(y) + g'(x-y) + L/2||x-y||^2 <= 0  is a ball
      Piece p;
      p.kind = Piece::kBall;
      p.c.resize(nj);
      double r2 = -2.0 * cy / comp.curvature;
      for (std::size_t j = 0; j < nj; ++j) {
        const double gl = g[j] / comp.curvature;
        p.c[j] = yi[j] - gl;
        r2 += gl * gl;
      }
      p.r = r2 > 0.0 ? std::sqrt(r2) : 0.0;
      pieces.push_back(std::move(p));
    } else {
      if (!comp.dc_plus->affine())
        throw StructuralError("oracle: NCC sweeps need affine dc-plus parts");
      // c(y) + (grad c+ - grad c-)(y)'(x-y) <= 0  is a halfspace
      Piece p;
      p.kind = Piece::kHalf;
      p.a.resize(nj);
      std::vector<double> gp(nj), gm(nj);
      comp.dc_plus->grad(yi, gp);
      comp.dc_minus->grad(yi, gm);
      double ay = 0.0;
      for (std::size_t j = 0; j < nj; ++j) {
        p.a[j] = gp[j] - gm[j];
        ay += p.a[j] * yi[j];
      }
      p.b = ay - cy;
      pieces.push_back(std::move(p));
    }
  }
  return pieces;
}

}  // namespace

void sync_block_step(const ProblemSpec& spec, int i, double gamma, double beta,
                     BlockVector& x) {
  const int ni = spec.partition->size(i);
  std::vector<double> g(ni), cand(ni), z(ni);
  spec.smooth->grad_block(i, x.all(), g);
  const double inv2b = 1.0 / (2.0 * beta);
  auto xi = x.block(i);
  for (int j = 0; j < ni; ++j) cand[j] = xi[j] - inv2b * g[j];

  if (!spec.has_constraints() || spec.constraints[i].empty()) {
    const double lam = reg_lambda(*spec.regs[i]);
    own_soft_clip(lam * inv2b, *spec.sets[i], cand, z);
  } else {
    if (!spec.regs[i]->is_zero())
      throw StructuralError("oracle: NCC sweeps require g = 0");
    auto pieces = ncc_pieces(spec, i, xi);
    own_dykstra(pieces, cand, z);
  }
  for (int j = 0; j < ni; ++j) xi[j] = xi[j] + gamma * (z[j] - xi[j]);
}

OracleResult reference_solve(const ProblemSpec& spec,
                             const OracleOptions& opt) {
  spec.validate();
  const double beta = opt.beta > 0.0 ? opt.beta : 0.5 * spec.smooth->lipschitz();
  BlockVector x = spec.start_point();

  OracleResult res;
  res.method = spec.has_constraints() ? "sync-block-sca-ncc" : "sync-block-sca";
  res.certified_tol = opt.tol;

  // own stationarity residual: unit-step prox-projection per block
  auto residual = [&]() {
    double total = 0.0;
    std::vector<double> g, cand, z;
    for (int i = 0; i < spec.blocks(); ++i) {
      const int ni = spec.partition->size(i);
      g.resize(ni);
      cand.resize(ni);
      z.resize(ni);
      spec.smooth->grad_block(i, x.all(), g);
      for (int j = 0; j < ni; ++j) cand[j] = x.block(i)[j] - g[j];
      if (!spec.has_constraints() || spec.constraints[i].empty()) {
        own_soft_clip(reg_lambda(*spec.regs[i]), *spec.sets[i], cand, z);
      } else {
        auto pieces = ncc_pieces(spec, i, x.block(i));
        own_dykstra(pieces, cand, z);
      }
      for (int j = 0; j < ni; ++j) {
        const double m = x.block(i)[j] - z[j];
        total += m * m;
      }
    }
    return std::sqrt(total);
  };

  const int N = spec.blocks();
  res.censored = true;
  for (std::uint64_t step = 0; step < opt.max_steps; ++step) {
    sync_block_step(spec, static_cast<int>(step % N), opt.gamma, beta, x);
    res.steps = step + 1;
    if ((step + 1) % static_cast<std::uint64_t>(N) == 0) {
      if (residual() <= opt.tol) {
        res.censored = false;
        break;
      }
    }
  }
  res.minimizer = x.raw();
  res.objective = eval_objective(spec, x);
  return res;
}

std::vector<double> brute_force_best_response(const BestResponseRequest& req,
                                              double resolution) {
  const auto yi = req.surrogate->base_block();
  const int ni = static_cast<int>(yi.size());
  if (ni > 2)
    throw StructuralError("brute force: block dimension must be <= 2");

  std::vector<double> lo(ni), hi(ni);
  if (const auto* box = dynamic_cast<const BoxSet*>(req.set)) {
    lo = box->lo();
    hi = box->hi();
  } else if (const auto* ball = dynamic_cast<const BallSet*>(req.set)) {
    for (int j = 0; j < ni; ++j) {
      lo[j] = ball->center()[j] - ball->radius();
      hi[j] = ball->center()[j] + ball->radius();
    }
  } else {
    throw StructuralError("brute force: feasible set must be bounded");
  }

  auto objective = [&](std::span<const double> z) {
    return req.surrogate->value(z) + req.reg->value(z);
  };
  auto feasible = [&](std::span<const double> z) {
    if (!req.set->contains(z, 1e-12)) return false;
    if (req.constraint_surrogates != nullptr)
      for (const auto& cs : *req.constraint_surrogates)
        if (cs.value(z) > 1e-12) return false;
    return true;
  };

  std::vector<double> best;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<double> z(ni);
  const long steps0 =
      std::lround(std::floor((hi[0] - lo[0]) / resolution)) + 1;
  const long steps1 =
      ni == 2 ? std::lround(std::floor((hi[1] - lo[1]) / resolution)) + 1 : 1;
  for (long a = 0; a < steps0; ++a) {
    z[0] = lo[0] + static_cast<double>(a) * resolution;
    for (long b = 0; b < steps1; ++b) {
      if (ni == 2) z[1] = lo[1] + static_cast<double>(b) * resolution;
      if (!feasible(z)) continue;
      const double val = objective(z);
      if (val < best_val) {
        best_val = val;
        best = z;
      }
    }
  }
  if (best.empty())
    throw StructuralError("brute force: no feasible grid point");
  return best;
}

}  // namespace oracle
}  // namespace asyflexa
