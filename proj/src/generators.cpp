#include "asyflexa/generators.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

namespace asyflexa {

namespace {

double spectral_norm_dense(const std::vector<double>& Q, int n) {
  return power_iteration_norm(
      [&Q, n](std::span<const double> v, std::span<double> out) {
        for (int r = 0; r < n; ++r) {
          double s = 0.0;
          const double* row = Q.data() + static_cast<std::size_t>(r) * n;
          for (int c = 0; c < n; ++c) s += row[c] * v[c];
          out[r] = s;
        }
      },
      n);
}

double spectral_norm_csr(const CsrMatrix& Q) {
  return power_iteration_norm(
      [&Q](std::span<const double> v, std::span<double> out) {
        Q.times(v, out);
      },
      Q.n);
}

std::vector<double> sparse_ground_truth(int n, Rng& rng) {
  std::vector<double> x(n, 0.0);
  const int nnz = std::max(1, n / 10);
  for (int t = 0; t < nnz; ++t)
    x[rng.below(n)] = rng.normal();
  return x;
}

// q = -Q x_true + noise, lambda = rel * max|q|, c chosen so f(x_true) ~ 0
void finish_lasso(ProblemSpec& spec, const std::vector<double>& x_true,
                  double lambda_rel, Rng& rng,
                  std::function<void(std::span<const double>, std::span<double>)>
                      apply_q,
                  std::vector<double>& q_out, double& c_out) {
  const int n = spec.partition->dim();
  std::vector<double> qx(n);
  apply_q(x_true, qx);
  q_out.resize(n);
  double qmax = 0.0;
  for (int j = 0; j < n; ++j) {
    q_out[j] = -qx[j] + 0.02 * rng.normal();
    qmax = std::max(qmax, std::fabs(q_out[j]));
  }
  c_out = 0.5 * dot(x_true, qx);
  const double lambda = lambda_rel * qmax;
  spec.regs.assign(spec.blocks(),
                   lambda > 0.0
                       ? std::static_pointer_cast<const Regularizer>(
                             std::make_shared<L1Reg>(lambda))
                       : std::static_pointer_cast<const Regularizer>(
                             std::make_shared<ZeroReg>()));
}

}  // namespace

ProblemSpec make_lasso_dense(int n, int blocks, double lambda, double condition,
                             int rank, std::uint64_t seed,
                             const std::string& spectrum) {
  Rng rng(seed);
  const int m = rank > 0 ? std::min(rank, n) : n;

  std::vector<double> Q(static_cast<std::size_t>(n) * n, 0.0);
  if (spectrum == "harmonic") {
    // explicit eigenvalues lambda_j = 1/(j+1), mixed across blocks by a
    // Householder reflection: Q = (I - 2vv') D (I - 2vv')
    std::vector<double> d(n, 0.0);
    for (int j = 0; j < m; ++j) d[j] = 1.0 / static_cast<double>(j + 1);
    std::vector<double> v(n);
    for (auto& t : v) t = rng.normal();
    const double vn = norm2(v);
    for (auto& t : v) t /= vn;
    std::vector<double> dv(n);
    double vdv = 0.0;
    for (int j = 0; j < n; ++j) {
      dv[j] = d[j] * v[j];
      vdv += v[j] * dv[j];
    }
    for (int a = 0; a < n; ++a) {
      double* row = Q.data() + static_cast<std::size_t>(a) * n;
      for (int b = 0; b < n; ++b)
        row[b] = -2.0 * v[a] * dv[b] - 2.0 * dv[a] * v[b] +
                 4.0 * vdv * v[a] * v[b];
      row[a] += d[a];
    }
  } else {
    // Q = B'B with B m x n, columns scaled geometrically for conditioning
    std::vector<double> B(static_cast<std::size_t>(m) * n);
    for (auto& v : B) v = rng.normal() / std::sqrt(static_cast<double>(m));
    if (condition > 1.0) {
      for (int c = 0; c < n; ++c) {
        const double s = std::pow(condition, -static_cast<double>(c) / (n - 1));
        for (int r = 0; r < m; ++r) B[static_cast<std::size_t>(r) * n + c] *= s;
      }
    }
    for (int r = 0; r < m; ++r) {
      const double* row = B.data() + static_cast<std::size_t>(r) * n;
      for (int a = 0; a < n; ++a) {
        const double ra = row[a];
        if (ra == 0.0) continue;
        double* qrow = Q.data() + static_cast<std::size_t>(a) * n;
        for (int b = 0; b < n; ++b) qrow[b] += ra * row[b];
      }
    }
    if (rank <= 0 && condition > 1.0) {
      // B'B from a square Gaussian factor is near-singular; a ridge pins the
      // condition number to the requested target
      const double mu = spectral_norm_dense(Q, n) / condition;
      for (int j = 0; j < n; ++j) Q[static_cast<std::size_t>(j) * n + j] += mu;
    }
  }

  ProblemSpec spec;
  spec.name = "lasso_dense";
  spec.partition = BlockPartition::uniform(n, blocks);
  std::vector<double> q;
  double c = 0.0;
  auto x_true = sparse_ground_truth(n, rng);
  spec.sets.assign(blocks, std::make_shared<WholeSpace>());
  finish_lasso(spec, x_true, lambda, rng,
               [&Q, n](std::span<const double> v, std::span<double> out) {
                 for (int r = 0; r < n; ++r) {
                   double s = 0.0;
                   const double* row = Q.data() + static_cast<std::size_t>(r) * n;
                   for (int cc = 0; cc < n; ++cc) s += row[cc] * v[cc];
                   out[r] = s;
                 }
               },
               q, c);
  const double lf = spectral_norm_dense(Q, n);
  spec.smooth = std::make_shared<QuadraticSmooth>(spec.partition, std::move(Q),
                                                  std::move(q), c, lf);
  spec.x0.assign(n, 0.0);
  return spec;
}

ProblemSpec make_lasso_sparse_rows(int n, int blocks, double lambda,
                                   double sparse_fraction, std::uint64_t seed) {
  Rng rng(seed);
  auto part = BlockPartition::uniform(n, blocks);

  // Mark a fraction of blocks cheap: their Hessian rows keep only a couple
  // of entries; the rest get wide random rows. Diagonal dominance keeps the
  // matrix PSD without a factorization.
  std::vector<bool> cheap(blocks, false);
  {
    std::vector<int> order(blocks);
    for (int b = 0; b < blocks; ++b) order[b] = b;
    rng.shuffle(order);
    const int n_cheap =
        std::clamp(static_cast<int>(std::lround(sparse_fraction * blocks)), 0,
                   blocks);
    for (int t = 0; t < n_cheap; ++t) cheap[order[t]] = true;
  }

  std::vector<int> dense_coords;
  for (int r = 0; r < n; ++r)
    if (!cheap[part->block_of(r)]) dense_coords.push_back(r);

  std::map<std::pair<int, int>, double> upper;
  const int wide = std::max(8, n / 16);
  for (int r = 0; r < n; ++r) {
    const int br = part->block_of(r);
    if (cheap[br]) {
      // near-empty row: tridiagonal inside the own block only
      if (r + 1 < n && part->block_of(r + 1) == br)
        upper[{r, r + 1}] = 0.5 * rng.normal();
      continue;
    }
    for (int t = 0; t < wide && dense_coords.size() > 1; ++t) {
      const int cidx = dense_coords[rng.below(dense_coords.size())];
      if (cidx == r) continue;
      auto key = std::minmax(r, cidx);
      upper[{key.first, key.second}] = 0.5 * rng.normal();
    }
  }
  std::vector<double> diag(n, 0.0);
  for (const auto& [rc, v] : upper) {
    diag[rc.first] += std::fabs(v);
    diag[rc.second] += std::fabs(v);
  }
  std::vector<int> rows, cols;
  std::vector<double> vals;
  for (int r = 0; r < n; ++r) {
    rows.push_back(r);
    cols.push_back(r);
    vals.push_back(diag[r] + 1.0);
  }
  for (const auto& [rc, v] : upper) {
    rows.push_back(rc.first);
    cols.push_back(rc.second);
    vals.push_back(v);
    rows.push_back(rc.second);
    cols.push_back(rc.first);
    vals.push_back(v);
  }
  CsrMatrix Q = CsrMatrix::from_triplets(n, rows, cols, vals);

  ProblemSpec spec;
  spec.name = "lasso_sparse_rows";
  spec.partition = part;
  spec.sets.assign(blocks, std::make_shared<WholeSpace>());
  std::vector<double> q;
  double c = 0.0;
  auto x_true = sparse_ground_truth(n, rng);
  finish_lasso(spec, x_true, lambda, rng,
               [&Q](std::span<const double> v, std::span<double> out) {
                 Q.times(v, out);
               },
               q, c);
  const double lf = spectral_norm_csr(Q);
  spec.smooth = std::make_shared<SparseQuadraticSmooth>(
      spec.partition, std::move(Q), std::move(q), c, lf);
  spec.x0.assign(n, 0.0);
  return spec;
}

ProblemSpec make_dc_least_squares(int n, int blocks, double lambda,
                                  std::uint64_t seed) {
  Rng rng(seed);
  auto part = BlockPartition::uniform(n, blocks);

  // plus = B'B + (sigma eps + tau) I, minus = sigma (eps I + u u');
  // tau = sigma max_i ||u_i||^2 keeps every block of the difference convex
  // while the difference itself is indefinite along u.
  std::vector<double> B(static_cast<std::size_t>(n) * n);
  for (auto& v : B) v = rng.normal() / std::sqrt(static_cast<double>(n));
  std::vector<double> Qp(static_cast<std::size_t>(n) * n, 0.0);
  for (int r = 0; r < n; ++r) {
    const double* row = B.data() + static_cast<std::size_t>(r) * n;
    for (int a = 0; a < n; ++a) {
      const double ra = row[a];
      if (ra == 0.0) continue;
      double* qrow = Qp.data() + static_cast<std::size_t>(a) * n;
      for (int b = 0; b < n; ++b) qrow[b] += ra * row[b];
    }
  }
  std::vector<double> u(n);
  for (auto& v : u) v = rng.normal();
  const double un = norm2(u);
  for (auto& v : u) v /= un;

  const double sigma = 4.0;
  const double eps = 0.05;
  double tau = 0.0;
  for (int b = 0; b < blocks; ++b) {
    double s = 0.0;
    for (int j = 0; j < part->size(b); ++j) {
      const double uj = u[part->offset(b) + j];
      s += uj * uj;
    }
    tau = std::max(tau, s);
  }
  tau *= sigma;

  std::vector<double> Qm(static_cast<std::size_t>(n) * n, 0.0);
  for (int r = 0; r < n; ++r) {
    double* row = Qm.data() + static_cast<std::size_t>(r) * n;
    for (int c = 0; c < n; ++c) row[c] = sigma * u[r] * u[c];
    row[r] += sigma * eps;
    Qp[static_cast<std::size_t>(r) * n + r] += sigma * eps + tau;
  }

  const double lp = spectral_norm_dense(Qp, n);
  const double lm = sigma * (eps + 1.0);  // lambda_max(eps I + u u') = eps + 1
  std::vector<double> zeroq(n, 0.0);
  auto plus = std::make_shared<QuadraticSmooth>(part, Qp, zeroq, 0.0, lp);
  auto minus = std::make_shared<QuadraticSmooth>(part, Qm, zeroq, 0.0, lm);

  // overall gradient Lipschitz constant of the difference
  std::vector<double> Qd(static_cast<std::size_t>(n) * n);
  for (std::size_t j = 0; j < Qd.size(); ++j) Qd[j] = Qp[j] - Qm[j];
  const double lf = spectral_norm_dense(Qd, n);

  ProblemSpec spec;
  spec.name = "dc_least_squares";
  spec.partition = part;
  spec.smooth = std::make_shared<DcQuadraticSmooth>(part, plus, minus,
                                                    std::max(lf, 1e-8), true);
  spec.sets.clear();
  for (int b = 0; b < blocks; ++b)
    spec.sets.push_back(std::make_shared<BoxSet>(part->size(b), -5.0, 5.0));
  const double lam = lambda;
  spec.regs.assign(blocks,
                   lam > 0.0 ? std::static_pointer_cast<const Regularizer>(
                                   std::make_shared<L1Reg>(lam))
                             : std::static_pointer_cast<const Regularizer>(
                                   std::make_shared<ZeroReg>()));
  spec.x0.assign(n, 0.0);
  for (int j = 0; j < n; ++j) spec.x0[j] = 0.5 * rng.normal();
  BlockVector x0v(part, spec.x0);
  for (int b = 0; b < blocks; ++b) {
    std::vector<double> tmp(x0v.block(b).begin(), x0v.block(b).end());
    spec.sets[b]->project(tmp, x0v.block(b));
  }
  spec.x0 = x0v.raw();
  return spec;
}

ProblemSpec make_ncc_ball_qp(int n, int blocks, ConstraintSurrogateKind kind,
                             std::uint64_t seed) {
  Rng rng(seed);
  auto part = BlockPartition::uniform(n, blocks);
  for (int b = 0; b < blocks; ++b)
    if (part->size(b) < 1)
      throw StructuralError("ncc generator: empty block");

  // Q = I + rho S, S symmetric with small entries; diagonally dominant
  std::vector<double> Q(static_cast<std::size_t>(n) * n, 0.0);
  const double rho = 0.4 / std::max(1, n / 8);
  for (int r = 0; r < n; ++r)
    for (int c = r + 1; c < n; ++c)
      if (rng.uniform01() < 8.0 / n) {
        const double v = rho * rng.normal();
        Q[static_cast<std::size_t>(r) * n + c] = v;
        Q[static_cast<std::size_t>(c) * n + r] = v;
      }
  for (int r = 0; r < n; ++r) {
    double s = 0.0;
    for (int c = 0; c < n; ++c)
      if (c != r) s += std::fabs(Q[static_cast<std::size_t>(r) * n + c]);
    Q[static_cast<std::size_t>(r) * n + r] = 1.0 + s;
  }

  // pull every block toward a target strictly inside its ring so the
  // nonconvex constraint is active at the solution
  std::vector<double> target(n);
  BlockVector tv(part);
  for (int b = 0; b < blocks; ++b) {
    auto blk = tv.block(b);
    for (auto& v : blk) v = rng.normal();
    const double bn = norm2(blk);
    const double want = 0.35;
    for (auto& v : blk) v *= want / std::max(bn, 1e-12);
  }
  target = tv.raw();
  std::vector<double> q(n);
  for (int r = 0; r < n; ++r) {
    double s = 0.0;
    for (int c = 0; c < n; ++c)
      s += Q[static_cast<std::size_t>(r) * n + c] * target[c];
    q[r] = -s;
  }

  const double lf = spectral_norm_dense(Q, n);
  ProblemSpec spec;
  spec.name = "ncc_ball_qp";
  spec.partition = part;
  spec.smooth = std::make_shared<QuadraticSmooth>(part, std::move(Q),
                                                  std::move(q), 0.0, lf);
  spec.regs.assign(blocks, std::make_shared<ZeroReg>());
  spec.sets.clear();
  for (int b = 0; b < blocks; ++b)
    spec.sets.push_back(std::make_shared<BoxSet>(part->size(b), -3.0, 3.0));
  spec.constraints.resize(blocks);
  for (int b = 0; b < blocks; ++b)
    spec.constraints[b].push_back(make_ring_constraint(1.0, kind));

  // feasible start on the outer region: ||x0_i|| = 2
  BlockVector x0(part);
  for (int b = 0; b < blocks; ++b) {
    auto blk = x0.block(b);
    for (auto& v : blk) v = rng.normal();
    const double bn = std::max(norm2(blk), 1e-12);
    for (auto& v : blk) v *= 2.0 / bn;
  }
  spec.x0 = x0.raw();
  return spec;
}

ProblemSpec generate_problem(const GeneratorSpec& g) {
  if (g.kind == "lasso_dense")
    return make_lasso_dense(g.n, g.blocks, g.lambda, g.condition, g.rank,
                            g.seed, g.spectrum);
  if (g.kind == "lasso_sparse_rows")
    return make_lasso_sparse_rows(g.n, g.blocks, g.lambda, g.sparse_fraction,
                                  g.seed);
  if (g.kind == "dc_least_squares")
    return make_dc_least_squares(g.n, g.blocks, g.lambda, g.seed);
  if (g.kind == "ncc_ball_qp")
    return make_ncc_ball_qp(
        g.n, g.blocks,
        g.constraint_surrogate == "descent_lemma"
            ? ConstraintSurrogateKind::kDescentLemma
            : ConstraintSurrogateKind::kDcSplit,
        g.seed);
  throw StructuralError("unknown generator kind: " + g.kind);
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

double max_grad_fd_error(const ProblemSpec& spec, const BlockVector& x,
                         double h) {
  std::vector<double> grad(spec.dim());
  spec.smooth->grad_full(x.all(), grad);
  BlockVector xp = x, xm = x;
  double worst = 0.0;
  for (int j = 0; j < spec.dim(); ++j) {
    xp.raw()[j] = x.raw()[j] + h;
    xm.raw()[j] = x.raw()[j] - h;
    const double fd =
        (spec.smooth->value(xp.all()) - spec.smooth->value(xm.all())) /
        (2.0 * h);
    const double scale = std::max(1.0, std::fabs(grad[j]));
    worst = std::max(worst, std::fabs(fd - grad[j]) / scale);
    xp.raw()[j] = x.raw()[j];
    xm.raw()[j] = x.raw()[j];
  }
  return worst;
}

void validate_instance(const ProblemSpec& spec, int probes,
                       std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  BlockVector x(spec.partition);
  for (int p = 0; p < probes; ++p) {
    for (auto& v : x.raw()) v = rng.normal();
    if (max_grad_fd_error(spec, x) > 1e-5)
      throw StructuralError(spec.name + ": gradient fails the FD check");
    // projection idempotency and membership
    for (int b = 0; b < spec.blocks(); ++b) {
      const int nb = spec.partition->size(b);
      std::vector<double> v(nb), p1(nb), p2(nb);
      for (auto& t : v) t = 3.0 * rng.normal();
      spec.sets[b]->project(v, p1);
      spec.sets[b]->project(p1, p2);
      if (std::sqrt(sq_dist(p1, p2)) > 1e-12 * (1.0 + norm2(p1)))
        throw StructuralError(spec.name + ": projection not idempotent");
      if (!spec.sets[b]->contains(p2, 1e-9))
        throw StructuralError(spec.name + ": projection leaves the set");
    }
    // constraint gradients
    if (spec.has_constraints()) {
      for (int b = 0; b < spec.blocks(); ++b) {
        const int nb = spec.partition->size(b);
        std::vector<double> v(nb), g(nb);
        for (auto& t : v) t = 2.0 * rng.normal();
        for (const auto& comp : spec.constraints[b]) {
          comp.fn->grad(v, g);
          for (int j = 0; j < nb; ++j) {
            const double h = 1e-6;
            std::vector<double> vp = v, vm = v;
            vp[j] += h;
            vm[j] -= h;
            const double fd =
                (comp.fn->value(vp) - comp.fn->value(vm)) / (2.0 * h);
            if (std::fabs(fd - g[j]) / std::max(1.0, std::fabs(g[j])) > 1e-5)
              throw StructuralError(spec.name +
                                    ": constraint gradient fails FD check");
          }
        }
      }
    }
  }
  if (spec.has_constraints()) {
    BlockVector x0 = spec.start_point();
    if (!check_feasibility(spec, x0, 1e-12).feasible)
      throw StructuralError(spec.name + ": stored x0 is infeasible");
  }
}

}  // namespace asyflexa
