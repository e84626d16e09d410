#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "asyflexa/block.hpp"
#include "asyflexa/common.hpp"

namespace asyflexa {

// ---------------------------------------------------------------------------
// Smooth term f: value, per-block gradients, Lipschitz constant of the block
// gradients. Evaluators are read-only after construction and safe to call
// from many threads.
// ---------------------------------------------------------------------------

class SmoothTerm {
 public:
  virtual ~SmoothTerm() = default;

  virtual double value(std::span<const double> x) const = 0;
  virtual void grad_block(int i, std::span<const double> x,
                          std::span<double> out) const = 0;
  virtual void grad_full(std::span<const double> x,
                         std::span<double> out) const;

  double lipschitz() const { return lf_; }

  /// Exact objective change when block i moves by h from x, given the block
  /// gradient g at x. Enables O(block) objective tracking in the engines.
  virtual bool has_delta_value() const { return false; }
  virtual double delta_value(int i, std::span<const double> g,
                             std::span<const double> h,
                             std::span<const double> x) const;

  /// Block Hessian (row-major size(i) x size(i)), for second-order surrogates.
  virtual bool has_block_hessian() const { return false; }
  virtual void block_hessian(int i, std::span<const double> x,
                             std::vector<double>& out) const;

  /// Strong-convexity modulus of x_i -> f(x_i, y_-i), if declared (else 0).
  virtual double block_convexity_modulus(int) const { return 0.0; }
  /// True when every block restriction x_i -> f(x_i, y_-i) is convex.
  virtual bool blockwise_convex() const { return false; }

  /// DC decomposition f = plus - minus (both convex), when available.
  virtual const SmoothTerm* dc_plus() const { return nullptr; }
  virtual const SmoothTerm* dc_minus() const { return nullptr; }

 protected:
  explicit SmoothTerm(PartitionPtr part, double lf)
      : part_(std::move(part)), lf_(lf) {
    if (lf_ <= 0.0) throw StructuralError("smooth term: L_f must be positive");
  }
  PartitionPtr part_;
  double lf_;
};

using SmoothPtr = std::shared_ptr<const SmoothTerm>;

/// f(x) = 1/2 x'Qx + q'x + c with dense row-major symmetric Q.
class QuadraticSmooth : public SmoothTerm {
 public:
  QuadraticSmooth(PartitionPtr part, std::vector<double> Q,
                  std::vector<double> q, double c, double lf,
                  bool blockwise_convex = true);

  double value(std::span<const double> x) const override;
  void grad_block(int i, std::span<const double> x,
                  std::span<double> out) const override;
  bool has_delta_value() const override { return true; }
  double delta_value(int i, std::span<const double> g,
                     std::span<const double> h,
                     std::span<const double> x) const override;
  bool has_block_hessian() const override { return true; }
  void block_hessian(int i, std::span<const double> x,
                     std::vector<double>& out) const override;
  bool blockwise_convex() const override { return blockwise_convex_; }
  double block_convexity_modulus(int i) const override {
    return moduli_.empty() ? 0.0 : moduli_[i];
  }
  void set_block_moduli(std::vector<double> m) { moduli_ = std::move(m); }

  const std::vector<double>& matrix() const { return Q_; }
  const std::vector<double>& linear() const { return q_; }
  double constant() const { return c_; }

 private:
  std::vector<double> Q_;  // n*n row-major
  std::vector<double> q_;
  double c_;
  bool blockwise_convex_;
  std::vector<double> moduli_;
};

/// CSR sparse symmetric Q; same contract as QuadraticSmooth.
struct CsrMatrix {
  int n = 0;
  std::vector<int> row_ptr;  // n+1
  std::vector<int> col;
  std::vector<double> val;

  static CsrMatrix from_triplets(int n, std::span<const int> rows,
                                 std::span<const int> cols,
                                 std::span<const double> vals);
  void times(std::span<const double> x, std::span<double> out) const;
  double row_dot(int r, std::span<const double> x) const;
  int row_nnz(int r) const { return row_ptr[r + 1] - row_ptr[r]; }
};

class SparseQuadraticSmooth : public SmoothTerm {
 public:
  SparseQuadraticSmooth(PartitionPtr part, CsrMatrix Q, std::vector<double> q,
                        double c, double lf, bool blockwise_convex = true);

  double value(std::span<const double> x) const override;
  void grad_block(int i, std::span<const double> x,
                  std::span<double> out) const override;
  bool has_delta_value() const override { return true; }
  double delta_value(int i, std::span<const double> g,
                     std::span<const double> h,
                     std::span<const double> x) const override;
  bool has_block_hessian() const override { return true; }
  void block_hessian(int i, std::span<const double> x,
                     std::vector<double>& out) const override;
  bool blockwise_convex() const override { return blockwise_convex_; }

  const CsrMatrix& matrix() const { return Q_; }
  const std::vector<double>& linear() const { return q_; }
  double constant() const { return c_; }
  /// Number of stored entries in the rows of block i (per-block update cost).
  long block_nnz(int i) const;

 private:
  CsrMatrix Q_;
  std::vector<double> q_;
  double c_;
  bool blockwise_convex_;
};

/// f = plus - minus, both convex quadratics. Gradients are evaluated through
/// the two parts so the DC surrogate's gradient identity is exact in floats.
class DcQuadraticSmooth : public SmoothTerm {
 public:
  DcQuadraticSmooth(PartitionPtr part, std::shared_ptr<QuadraticSmooth> plus,
                    std::shared_ptr<QuadraticSmooth> minus, double lf,
                    bool blockwise_convex);

  double value(std::span<const double> x) const override;
  void grad_block(int i, std::span<const double> x,
                  std::span<double> out) const override;
  bool has_block_hessian() const override { return true; }
  void block_hessian(int i, std::span<const double> x,
                     std::vector<double>& out) const override;
  bool blockwise_convex() const override { return blockwise_convex_; }
  const SmoothTerm* dc_plus() const override { return plus_.get(); }
  const SmoothTerm* dc_minus() const override { return minus_.get(); }

 private:
  std::shared_ptr<QuadraticSmooth> plus_, minus_;
  bool blockwise_convex_;
};

/// Callback-backed smooth term for tests (analytic value + full gradient).
class CallbackSmooth : public SmoothTerm {
 public:
  using ValueFn = std::function<double(std::span<const double>)>;
  using GradFn = std::function<void(std::span<const double>, std::span<double>)>;

  CallbackSmooth(PartitionPtr part, ValueFn f, GradFn g, double lf,
                 bool blockwise_convex = false)
      : SmoothTerm(std::move(part), lf), f_(std::move(f)), g_(std::move(g)),
        blockwise_convex_(blockwise_convex) {}

  double value(std::span<const double> x) const override { return f_(x); }
  void grad_block(int i, std::span<const double> x,
                  std::span<double> out) const override {
    std::vector<double> g(x.size());
    g_(x, g);
    const int off = part_->offset(i);
    for (int j = 0; j < part_->size(i); ++j) out[j] = g[off + j];
  }
  bool blockwise_convex() const override { return blockwise_convex_; }

  void set_block_hessian(
      std::function<void(int, std::span<const double>, std::vector<double>&)>
          h) {
    hess_ = std::move(h);
  }
  bool has_block_hessian() const override { return static_cast<bool>(hess_); }
  void block_hessian(int i, std::span<const double> x,
                     std::vector<double>& out) const override {
    hess_(i, x, out);
  }

 private:
  ValueFn f_;
  GradFn g_;
  bool blockwise_convex_;
  std::function<void(int, std::span<const double>, std::vector<double>&)> hess_;
};

// ---------------------------------------------------------------------------
// Block regularizers g_i: convex, possibly nonsmooth, with a prox evaluator.
// ---------------------------------------------------------------------------

class Regularizer {
 public:
  virtual ~Regularizer() = default;
  virtual double value(std::span<const double> x) const = 0;
  /// out = argmin_z g(z) + ||z - v||^2 / (2t)
  virtual void prox(double t, std::span<const double> v,
                    std::span<double> out) const = 0;
  virtual double lipschitz() const = 0;
  virtual bool is_zero() const { return false; }
  virtual bool separable() const = 0;
  virtual std::string kind() const = 0;
};

using RegPtr = std::shared_ptr<const Regularizer>;

class ZeroReg : public Regularizer {
 public:
  double value(std::span<const double>) const override { return 0.0; }
  void prox(double, std::span<const double> v,
            std::span<double> out) const override {
    copy_to(v, out);
  }
  double lipschitz() const override { return 0.0; }
  bool is_zero() const override { return true; }
  bool separable() const override { return true; }
  std::string kind() const override { return "zero"; }
};

class L1Reg : public Regularizer {
 public:
  explicit L1Reg(double lambda) : lambda_(lambda) {
    if (lambda < 0.0) throw StructuralError("l1: lambda must be >= 0");
  }
  double value(std::span<const double> x) const override {
    return lambda_ * l1_norm(x);
  }
  void prox(double t, std::span<const double> v,
            std::span<double> out) const override;
  double lipschitz() const override { return lambda_; }
  bool separable() const override { return true; }
  std::string kind() const override { return "l1"; }
  double lambda() const { return lambda_; }

 private:
  double lambda_;
};

// ---------------------------------------------------------------------------
// Convex block sets X_i with membership and Euclidean projection.
// ---------------------------------------------------------------------------

class BlockSet {
 public:
  virtual ~BlockSet() = default;
  virtual bool contains(std::span<const double> x, double tol) const = 0;
  virtual void project(std::span<const double> v,
                       std::span<double> out) const = 0;
  virtual bool is_whole_space() const { return false; }
  virtual bool is_box() const { return false; }
  virtual std::string kind() const = 0;
};

using SetPtr = std::shared_ptr<const BlockSet>;

class WholeSpace : public BlockSet {
 public:
  bool contains(std::span<const double>, double) const override { return true; }
  void project(std::span<const double> v, std::span<double> out) const override {
    copy_to(v, out);
  }
  bool is_whole_space() const override { return true; }
  std::string kind() const override { return "whole_space"; }
};

class BoxSet : public BlockSet {
 public:
  BoxSet(std::vector<double> lo, std::vector<double> hi);
  BoxSet(int dim, double lo, double hi);
  bool contains(std::span<const double> x, double tol) const override;
  void project(std::span<const double> v, std::span<double> out) const override;
  bool is_box() const override { return true; }
  std::string kind() const override { return "box"; }
  const std::vector<double>& lo() const { return lo_; }
  const std::vector<double>& hi() const { return hi_; }

 private:
  std::vector<double> lo_, hi_;
};

class BallSet : public BlockSet {
 public:
  BallSet(std::vector<double> center, double radius);
  bool contains(std::span<const double> x, double tol) const override;
  void project(std::span<const double> v, std::span<double> out) const override;
  std::string kind() const override { return "ball"; }
  const std::vector<double>& center() const { return center_; }
  double radius() const { return radius_; }

 private:
  std::vector<double> center_;
  double radius_;
};

/// Intersection of halfspaces a_j'x <= b_j; projection via cyclic Dykstra.
class HalfspaceSet : public BlockSet {
 public:
  HalfspaceSet(std::vector<std::vector<double>> normals, std::vector<double> b);
  bool contains(std::span<const double> x, double tol) const override;
  void project(std::span<const double> v, std::span<double> out) const override;
  std::string kind() const override { return "halfspaces"; }
  const std::vector<std::vector<double>>& normals() const { return a_; }
  const std::vector<double>& offsets() const { return b_; }

 private:
  std::vector<std::vector<double>> a_;
  std::vector<double> b_;
};

// ---------------------------------------------------------------------------
// Nonconvex private constraints c_{i,j}(x_i) <= 0 with surrogate metadata.
// ---------------------------------------------------------------------------

class ConstraintFn {
 public:
  virtual ~ConstraintFn() = default;
  virtual double value(std::span<const double> x) const = 0;
  virtual void grad(std::span<const double> x, std::span<double> out) const = 0;
  virtual bool affine() const { return false; }
};

using ConstraintFnPtr = std::shared_ptr<const ConstraintFn>;

enum class ConstraintSurrogateKind { kDescentLemma, kDcSplit };

struct ConstraintComponent {
  ConstraintFnPtr fn;
  ConstraintSurrogateKind surrogate = ConstraintSurrogateKind::kDescentLemma;
  double curvature = 0.0;        // L of grad c, for descent-lemma
  ConstraintFnPtr dc_plus;       // c = dc_plus - dc_minus, for dc-split
  ConstraintFnPtr dc_minus;
};

/// c(x) = r^2 - ||x||^2 (exterior-of-ball "ring"); dc parts r^2 and ||x||^2.
class RingFn : public ConstraintFn {
 public:
  explicit RingFn(double radius) : r2_(radius * radius) {}
  double value(std::span<const double> x) const override {
    return r2_ - sq_norm(x);
  }
  void grad(std::span<const double> x, std::span<double> out) const override {
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = -2.0 * x[j];
  }
  double r2() const { return r2_; }

 private:
  double r2_;
};

class ConstFn : public ConstraintFn {
 public:
  explicit ConstFn(double c) : c_(c) {}
  double value(std::span<const double>) const override { return c_; }
  void grad(std::span<const double>, std::span<double> out) const override {
    for (auto& v : out) v = 0.0;
  }
  bool affine() const override { return true; }

 private:
  double c_;
};

class SqNormFn : public ConstraintFn {
 public:
  double value(std::span<const double> x) const override { return sq_norm(x); }
  void grad(std::span<const double> x, std::span<double> out) const override {
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = 2.0 * x[j];
  }
};

ConstraintComponent make_ring_constraint(double radius,
                                         ConstraintSurrogateKind kind);

// ---------------------------------------------------------------------------
// Full problem instance.
// ---------------------------------------------------------------------------

struct ProblemSpec {
  std::string name;
  PartitionPtr partition;
  SmoothPtr smooth;
  std::vector<RegPtr> regs;    // one per block (ZeroReg when absent)
  std::vector<SetPtr> sets;    // one per block
  std::vector<std::vector<ConstraintComponent>> constraints;  // per block
  std::vector<double> x0;      // feasible start; required when constrained
  /// MFCQ is assumed, never verified; carried as instance metadata.
  bool mfcq_assumed = true;

  bool has_constraints() const {
    for (const auto& c : constraints)
      if (!c.empty()) return true;
    return false;
  }
  int dim() const { return partition->dim(); }
  int blocks() const { return partition->count(); }
  void validate() const;
  BlockVector start_point() const;
};

struct FeasibilityReport {
  struct Block {
    bool in_set = true;
    double max_violation = 0.0;  // max_j c_{i,j}(x_i), 0 when unconstrained
  };
  std::vector<Block> per_block;
  double max_violation = 0.0;
  bool feasible = true;
};

double eval_objective(const ProblemSpec& spec, const BlockVector& x);
FeasibilityReport check_feasibility(const ProblemSpec& spec,
                                    const BlockVector& x, double tol);

// ---------------------------------------------------------------------------
// Composite prox: argmin_{z in X} g(z) + ||z - v||^2 / (2t).
// Exact closed forms for (zero, any X), (any g, whole space) and
// (separable g, box); cyclic Dykstra splitting otherwise.
// ---------------------------------------------------------------------------

void composite_prox(const Regularizer& g, const BlockSet& X, double t,
                    std::span<const double> v, std::span<double> out);

/// Dykstra splitting over a list of prox operators; converges to the prox of
/// the sum of the underlying convex functions.
void dykstra_prox(
    const std::vector<std::function<void(std::span<const double>,
                                         std::span<double>)>>& proxes,
    std::span<const double> v, std::span<double> out, int max_sweeps = 500,
    double tol = 1e-14);

double power_iteration_norm(const std::function<void(std::span<const double>,
                                                     std::span<double>)>& op,
                            int n, double tol = 1e-8, int max_iters = 10000,
                            std::uint64_t seed = 12345);

}  // namespace asyflexa
