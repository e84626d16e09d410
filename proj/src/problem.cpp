#include "asyflexa/problem.hpp"

#include <algorithm>
#include <cmath>

namespace asyflexa {

void SmoothTerm::grad_full(std::span<const double> x,
                           std::span<double> out) const {
  for (int i = 0; i < part_->count(); ++i) {
    grad_block(i, x,
               out.subspan(part_->offset(i),
                           static_cast<std::size_t>(part_->size(i))));
  }
}

double SmoothTerm::delta_value(int, std::span<const double>,
                               std::span<const double>,
                               std::span<const double>) const {
  throw StructuralError("smooth term: delta_value not supported");
}

void SmoothTerm::block_hessian(int, std::span<const double>,
                               std::vector<double>&) const {
  throw StructuralError("smooth term: no block Hessian available");
}

// ---------------------------------------------------------------------------
// QuadraticSmooth
// ---------------------------------------------------------------------------

QuadraticSmooth::QuadraticSmooth(PartitionPtr part, std::vector<double> Q,
                                 std::vector<double> q, double c, double lf,
                                 bool blockwise_convex)
    : SmoothTerm(std::move(part), lf), Q_(std::move(Q)), q_(std::move(q)),
      c_(c), blockwise_convex_(blockwise_convex) {
  const std::size_t n = static_cast<std::size_t>(part_->dim());
  if (Q_.size() != n * n || q_.size() != n)
    throw StructuralError("quadratic: matrix/vector size mismatch");
}

double QuadraticSmooth::value(std::span<const double> x) const {
  const int n = part_->dim();
  double s = c_;
  for (int r = 0; r < n; ++r) {
    const double* row = Q_.data() + static_cast<std::size_t>(r) * n;
    double rx = 0.0;
    for (int cidx = 0; cidx < n; ++cidx) rx += row[cidx] * x[cidx];
    s += (0.5 * rx + q_[r]) * x[r];
  }
  return s;
}

void QuadraticSmooth::grad_block(int i, std::span<const double> x,
                                 std::span<double> out) const {
  const int n = part_->dim();
  const int off = part_->offset(i);
  for (int r = 0; r < part_->size(i); ++r) {
    const double* row = Q_.data() + static_cast<std::size_t>(off + r) * n;
    double rx = 0.0;
    for (int cidx = 0; cidx < n; ++cidx) rx += row[cidx] * x[cidx];
    out[r] = rx + q_[off + r];
  }
}

double QuadraticSmooth::delta_value(int i, std::span<const double> g,
                                    std::span<const double> h,
                                    std::span<const double>) const {
  // f(x + h e_i) - f(x) = g'h + 1/2 h'Q_ii h with g the block gradient at x.
  const int n = part_->dim();
  const int off = part_->offset(i);
  const int ni = part_->size(i);
  double s = dot(g, h);
  for (int r = 0; r < ni; ++r) {
    const double* row = Q_.data() + static_cast<std::size_t>(off + r) * n + off;
    double rh = 0.0;
    for (int cidx = 0; cidx < ni; ++cidx) rh += row[cidx] * h[cidx];
    s += 0.5 * h[r] * rh;
  }
  return s;
}

void QuadraticSmooth::block_hessian(int i, std::span<const double>,
                                    std::vector<double>& out) const {
  const int n = part_->dim();
  const int off = part_->offset(i);
  const int ni = part_->size(i);
  out.assign(static_cast<std::size_t>(ni) * ni, 0.0);
  for (int r = 0; r < ni; ++r)
    for (int cidx = 0; cidx < ni; ++cidx)
      out[static_cast<std::size_t>(r) * ni + cidx] =
          Q_[static_cast<std::size_t>(off + r) * n + off + cidx];
}

// ---------------------------------------------------------------------------
// CSR matrix and SparseQuadraticSmooth
// ---------------------------------------------------------------------------

CsrMatrix CsrMatrix::from_triplets(int n, std::span<const int> rows,
                                   std::span<const int> cols,
                                   std::span<const double> vals) {
  if (rows.size() != cols.size() || rows.size() != vals.size())
    throw StructuralError("csr: triplet arrays differ in length");
  CsrMatrix m;
  m.n = n;
  m.row_ptr.assign(n + 1, 0);
  for (int r : rows) {
    if (r < 0 || r >= n) throw StructuralError("csr: row out of range");
    m.row_ptr[r + 1] += 1;
  }
  for (int r = 0; r < n; ++r) m.row_ptr[r + 1] += m.row_ptr[r];
  m.col.resize(vals.size());
  m.val.resize(vals.size());
  std::vector<int> cursor(m.row_ptr.begin(), m.row_ptr.end() - 1);
  for (std::size_t k = 0; k < vals.size(); ++k) {
    if (cols[k] < 0 || cols[k] >= n)
      throw StructuralError("csr: col out of range");
    const int p = cursor[rows[k]]++;
    m.col[p] = cols[k];
    m.val[p] = vals[k];
  }
  // sort each row by column for deterministic evaluation order
  for (int r = 0; r < n; ++r) {
    const int lo = m.row_ptr[r], hi = m.row_ptr[r + 1];
    std::vector<std::pair<int, double>> row;
    row.reserve(hi - lo);
    for (int p = lo; p < hi; ++p) row.emplace_back(m.col[p], m.val[p]);
    std::sort(row.begin(), row.end());
    for (int p = lo; p < hi; ++p) {
      m.col[p] = row[p - lo].first;
      m.val[p] = row[p - lo].second;
    }
  }
  return m;
}

void CsrMatrix::times(std::span<const double> x, std::span<double> out) const {
  for (int r = 0; r < n; ++r) out[r] = row_dot(r, x);
}

double CsrMatrix::row_dot(int r, std::span<const double> x) const {
  double s = 0.0;
  for (int p = row_ptr[r]; p < row_ptr[r + 1]; ++p) s += val[p] * x[col[p]];
  return s;
}

SparseQuadraticSmooth::SparseQuadraticSmooth(PartitionPtr part, CsrMatrix Q,
                                             std::vector<double> q, double c,
                                             double lf, bool blockwise_convex)
    : SmoothTerm(std::move(part), lf), Q_(std::move(Q)), q_(std::move(q)),
      c_(c), blockwise_convex_(blockwise_convex) {
  if (Q_.n != part_->dim() || static_cast<int>(q_.size()) != part_->dim())
    throw StructuralError("sparse quadratic: size mismatch");
}

double SparseQuadraticSmooth::value(std::span<const double> x) const {
  double s = c_;
  for (int r = 0; r < Q_.n; ++r) s += (0.5 * Q_.row_dot(r, x) + q_[r]) * x[r];
  return s;
}

void SparseQuadraticSmooth::grad_block(int i, std::span<const double> x,
                                       std::span<double> out) const {
  const int off = part_->offset(i);
  for (int r = 0; r < part_->size(i); ++r)
    out[r] = Q_.row_dot(off + r, x) + q_[off + r];
}

double SparseQuadraticSmooth::delta_value(int i, std::span<const double> g,
                                          std::span<const double> h,
                                          std::span<const double>) const {
  const int off = part_->offset(i);
  const int ni = part_->size(i);
  double s = dot(g, h);
  for (int r = 0; r < ni; ++r) {
    double rh = 0.0;
    for (int p = Q_.row_ptr[off + r]; p < Q_.row_ptr[off + r + 1]; ++p) {
      const int cidx = Q_.col[p] - off;
      if (cidx >= 0 && cidx < ni) rh += Q_.val[p] * h[cidx];
    }
    s += 0.5 * h[r] * rh;
  }
  return s;
}

void SparseQuadraticSmooth::block_hessian(int i, std::span<const double>,
                                          std::vector<double>& out) const {
  const int off = part_->offset(i);
  const int ni = part_->size(i);
  out.assign(static_cast<std::size_t>(ni) * ni, 0.0);
  for (int r = 0; r < ni; ++r)
    for (int p = Q_.row_ptr[off + r]; p < Q_.row_ptr[off + r + 1]; ++p) {
      const int cidx = Q_.col[p] - off;
      if (cidx >= 0 && cidx < ni)
        out[static_cast<std::size_t>(r) * ni + cidx] = Q_.val[p];
    }
}

long SparseQuadraticSmooth::block_nnz(int i) const {
  long s = 0;
  const int off = part_->offset(i);
  for (int r = 0; r < part_->size(i); ++r) s += Q_.row_nnz(off + r);
  return s;
}

// ---------------------------------------------------------------------------
// DcQuadraticSmooth
// ---------------------------------------------------------------------------

DcQuadraticSmooth::DcQuadraticSmooth(PartitionPtr part,
                                     std::shared_ptr<QuadraticSmooth> plus,
                                     std::shared_ptr<QuadraticSmooth> minus,
                                     double lf, bool blockwise_convex)
    : SmoothTerm(std::move(part), lf), plus_(std::move(plus)),
      minus_(std::move(minus)), blockwise_convex_(blockwise_convex) {}

double DcQuadraticSmooth::value(std::span<const double> x) const {
  return plus_->value(x) - minus_->value(x);
}

void DcQuadraticSmooth::grad_block(int i, std::span<const double> x,
                                   std::span<double> out) const {
  std::vector<double> gm(out.size());
  plus_->grad_block(i, x, out);
  minus_->grad_block(i, x, gm);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] -= gm[j];
}

void DcQuadraticSmooth::block_hessian(int i, std::span<const double> x,
                                      std::vector<double>& out) const {
  std::vector<double> hm;
  plus_->block_hessian(i, x, out);
  minus_->block_hessian(i, x, hm);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] -= hm[j];
}

// ---------------------------------------------------------------------------
// Regularizers
// ---------------------------------------------------------------------------

void L1Reg::prox(double t, std::span<const double> v,
                 std::span<double> out) const {
  const double thr = lambda_ * t;
  for (std::size_t j = 0; j < v.size(); ++j) {
    if (v[j] > thr)
      out[j] = v[j] - thr;
    else if (v[j] < -thr)
      out[j] = v[j] + thr;
    else
      out[j] = 0.0;
  }
}

// ---------------------------------------------------------------------------
// Block sets
// ---------------------------------------------------------------------------

BoxSet::BoxSet(std::vector<double> lo, std::vector<double> hi)
    : lo_(std::move(lo)), hi_(std::move(hi)) {
  if (lo_.size() != hi_.size()) throw StructuralError("box: bound sizes");
  for (std::size_t j = 0; j < lo_.size(); ++j)
    if (lo_[j] > hi_[j]) throw StructuralError("box: lo > hi");
}

BoxSet::BoxSet(int dim, double lo, double hi)
    : lo_(dim, lo), hi_(dim, hi) {
  if (lo > hi) throw StructuralError("box: lo > hi");
}

bool BoxSet::contains(std::span<const double> x, double tol) const {
  for (std::size_t j = 0; j < x.size(); ++j)
    if (x[j] < lo_[j] - tol || x[j] > hi_[j] + tol) return false;
  return true;
}

void BoxSet::project(std::span<const double> v, std::span<double> out) const {
  for (std::size_t j = 0; j < v.size(); ++j)
    out[j] = std::min(hi_[j], std::max(lo_[j], v[j]));
}

BallSet::BallSet(std::vector<double> center, double radius)
    : center_(std::move(center)), radius_(radius) {
  if (radius_ < 0.0) throw StructuralError("ball: negative radius");
}

bool BallSet::contains(std::span<const double> x, double tol) const {
  return std::sqrt(sq_dist(x, center_)) <= radius_ + tol;
}

void BallSet::project(std::span<const double> v, std::span<double> out) const {
  const double d = std::sqrt(sq_dist(v, center_));
  if (d <= radius_) {
    copy_to(v, out);
    return;
  }
  const double scale = radius_ / d;
  for (std::size_t j = 0; j < v.size(); ++j)
    out[j] = center_[j] + scale * (v[j] - center_[j]);
}

HalfspaceSet::HalfspaceSet(std::vector<std::vector<double>> normals,
                           std::vector<double> b)
    : a_(std::move(normals)), b_(std::move(b)) {
  if (a_.size() != b_.size()) throw StructuralError("halfspaces: sizes");
  for (const auto& a : a_)
    if (sq_norm(a) == 0.0)
      throw StructuralError("halfspaces: zero normal");
}

bool HalfspaceSet::contains(std::span<const double> x, double tol) const {
  for (std::size_t j = 0; j < a_.size(); ++j)
    if (dot(a_[j], x) > b_[j] + tol) return false;
  return true;
}

void HalfspaceSet::project(std::span<const double> v,
                           std::span<double> out) const {
  if (a_.size() == 1) {
    copy_to(v, out);
    const double viol = dot(a_[0], out) - b_[0];
    if (viol > 0.0) axpy(-viol / sq_norm(a_[0]), a_[0], out);
    return;
  }
  std::vector<std::function<void(std::span<const double>, std::span<double>)>>
      ops;
  for (std::size_t j = 0; j < a_.size(); ++j) {
    ops.push_back([this, j](std::span<const double> in, std::span<double> o) {
      copy_to(in, o);
      const double viol = dot(a_[j], o) - b_[j];
      if (viol > 0.0) axpy(-viol / sq_norm(a_[j]), a_[j], o);
    });
  }
  dykstra_prox(ops, v, out);
}

ConstraintComponent make_ring_constraint(double radius,
                                         ConstraintSurrogateKind kind) {
  ConstraintComponent c;
  c.fn = std::make_shared<RingFn>(radius);
  c.surrogate = kind;
  c.curvature = 2.0;  // grad of r^2 - ||x||^2 is 2-Lipschitz
  c.dc_plus = std::make_shared<ConstFn>(radius * radius);
  c.dc_minus = std::make_shared<SqNormFn>();
  return c;
}

// ---------------------------------------------------------------------------
// ProblemSpec
// ---------------------------------------------------------------------------

void ProblemSpec::validate() const {
  if (!partition || !smooth) throw StructuralError("spec: missing parts");
  const int N = partition->count();
  if (static_cast<int>(regs.size()) != N ||
      static_cast<int>(sets.size()) != N)
    throw StructuralError("spec: regs/sets must have one entry per block");
  if (!constraints.empty() && static_cast<int>(constraints.size()) != N)
    throw StructuralError("spec: constraints must have one entry per block");
  if (has_constraints()) {
    if (static_cast<int>(x0.size()) != partition->dim())
      throw StructuralError("spec: constrained problem requires stored x0");
  } else if (!x0.empty() &&
             static_cast<int>(x0.size()) != partition->dim()) {
    throw StructuralError("spec: x0 dimension mismatch");
  }
}

BlockVector ProblemSpec::start_point() const {
  BlockVector x(partition);
  if (!x0.empty()) {
    x.raw() = x0;
  } else {
    for (int i = 0; i < blocks(); ++i) {
      std::vector<double> zero(partition->size(i), 0.0);
      sets[i]->project(zero, x.block(i));
    }
  }
  return x;
}

double eval_objective(const ProblemSpec& spec, const BlockVector& x) {
  if (x.dim() != spec.dim())
    throw StructuralError("eval_objective: dimension mismatch");
  double s = spec.smooth->value(x.all());
  for (int i = 0; i < spec.blocks(); ++i) s += spec.regs[i]->value(x.block(i));
  return s;
}

FeasibilityReport check_feasibility(const ProblemSpec& spec,
                                    const BlockVector& x, double tol) {
  FeasibilityReport rep;
  rep.per_block.resize(spec.blocks());
  for (int i = 0; i < spec.blocks(); ++i) {
    auto& b = rep.per_block[i];
    b.in_set = spec.sets[i]->contains(x.block(i), tol);
    if (!spec.constraints.empty()) {
      for (const auto& comp : spec.constraints[i])
        b.max_violation = std::max(b.max_violation, comp.fn->value(x.block(i)));
    }
    rep.max_violation = std::max(rep.max_violation, b.max_violation);
    if (!b.in_set || b.max_violation > tol) rep.feasible = false;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Composite prox
// ---------------------------------------------------------------------------

void composite_prox(const Regularizer& g, const BlockSet& X, double t,
                    std::span<const double> v, std::span<double> out) {
  if (X.is_whole_space()) {
    g.prox(t, v, out);
    return;
  }
  if (g.is_zero()) {
    X.project(v, out);
    return;
  }
  if (X.is_box() && g.separable()) {
    // prox of a separable g then coordinatewise clip is the exact joint prox
    g.prox(t, v, out);
    std::vector<double> tmp(out.begin(), out.end());
    X.project(tmp, out);
    return;
  }
  std::vector<std::function<void(std::span<const double>, std::span<double>)>>
      ops;
  ops.push_back([&g, t](std::span<const double> in, std::span<double> o) {
    g.prox(t, in, o);
  });
  ops.push_back([&X](std::span<const double> in, std::span<double> o) {
    X.project(in, o);
  });
  dykstra_prox(ops, v, out);
}

void dykstra_prox(
    const std::vector<std::function<void(std::span<const double>,
                                         std::span<double>)>>& proxes,
    std::span<const double> v, std::span<double> out, int max_sweeps,
    double tol) {
  const std::size_t n = v.size();
  const std::size_t m = proxes.size();
  std::vector<std::vector<double>> p(m, std::vector<double>(n, 0.0));
  std::vector<double> z(v.begin(), v.end());
  std::vector<double> in(n), prev(n);
  const double scale = 1.0 + norm2(v);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    copy_to(z, prev);
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t r = 0; r < n; ++r) in[r] = z[r] + p[j][r];
      proxes[j](in, z);
      for (std::size_t r = 0; r < n; ++r) p[j][r] = in[r] - z[r];
    }
    if (std::sqrt(sq_dist(z, prev)) <= tol * scale && sweep > 0) break;
  }
  copy_to(z, out);
}

double power_iteration_norm(const std::function<void(std::span<const double>,
                                                     std::span<double>)>& op,
                            int n, double tol, int max_iters,
                            std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n), w(n);
  for (auto& x : v) x = rng.normal();
  double nv = norm2(v);
  for (auto& x : v) x /= nv;
  double lambda = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    op(v, w);
    const double next = norm2(w);
    if (next == 0.0) return 0.0;
    for (int j = 0; j < n; ++j) v[j] = w[j] / next;
    if (std::fabs(next - lambda) <= tol * std::max(1.0, next) && it > 4)
      return next;
    lambda = next;
  }
  return lambda;
}

}  // namespace asyflexa
