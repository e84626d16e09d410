#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "asyflexa/problem.hpp"

namespace asyflexa {

enum class SurrogateKind { kProxLinear, kSecondOrder, kPartialConvexity, kDcSplit };

SurrogateKind surrogate_kind_from_string(const std::string& s);
std::string to_string(SurrogateKind k);

/// Strongly convex local model f~_i(.; y) of f in block i, built at base y.
/// Immutable after construction; concurrent use is safe.
class SurrogateModel {
 public:
  double value(std::span<const double> xi) const;
  void grad(std::span<const double> xi, std::span<double> out) const;

  SurrogateKind kind() const { return kind_; }
  int block() const { return block_; }
  double beta() const { return beta_; }
  const BlockVector& base() const { return base_; }
  std::span<const double> base_block() const { return base_.block(block_); }

  /// Strong-convexity modulus c_f~ (B1).
  double strong_convexity() const { return c_strong_; }
  /// Declared Lipschitz constant of grad f~(.; y) (B4).
  double lip_inner() const { return lip_inner_; }
  /// Declared Lipschitz constant of grad f~(y_i; .) (B3).
  double lip_base() const { return lip_base_; }
  /// Cached grad_i f(y); equals grad f~(y_i; y) by B2.
  std::span<const double> base_gradient() const { return g0_; }

 private:
  friend SurrogateModel build_surrogate(SurrogateKind, const ProblemSpec&, int,
                                        const BlockVector&, double);
  SurrogateKind kind_ = SurrogateKind::kProxLinear;
  int block_ = 0;
  double beta_ = 0.0;
  BlockVector base_;
  std::vector<double> g0_;     // block gradient of f at base
  std::vector<double> hess_;   // second-order: block Hessian at base
  std::vector<double> gm0_;    // dc-split: block gradient of minus part
  double f0_ = 0.0;            // second-order: f(y); dc-split: minus(y)
  double c_strong_ = 0.0, lip_inner_ = 0.0, lip_base_ = 0.0;
  const SmoothTerm* smooth_ = nullptr;  // owned by the ProblemSpec
};

SurrogateModel build_surrogate(SurrogateKind kind, const ProblemSpec& spec,
                               int i, const BlockVector& y, double beta);

inline double default_beta(const ProblemSpec& spec) {
  return 0.5 * spec.smooth->lipschitz();
}

// ---------------------------------------------------------------------------
// Convex upper surrogates of the nonconvex constraints: touch c at the
// base point, upper-bound it everywhere, match its gradient at the base.
// ---------------------------------------------------------------------------

enum class SurrogateShape { kBall, kHalfspace, kGeneralConvex };

class ConstraintSurrogate {
 public:
  double value(std::span<const double> xi) const;
  void grad(std::span<const double> xi, std::span<double> out) const;

  ConstraintSurrogateKind kind() const { return kind_; }
  SurrogateShape shape() const { return shape_; }
  std::span<const double> base() const { return base_; }

  /// Closed-form projection onto {x : c~(x; y) <= 0}; ball/halfspace only.
  void project(std::span<const double> v, std::span<double> out) const;

 private:
  friend ConstraintSurrogate build_constraint_surrogate(
      const ConstraintComponent&, std::span<const double>);
  ConstraintSurrogateKind kind_ = ConstraintSurrogateKind::kDescentLemma;
  SurrogateShape shape_ = SurrogateShape::kGeneralConvex;
  std::vector<double> base_;
  double c_base_ = 0.0;           // c(y)
  std::vector<double> g_base_;    // grad c(y) (descent-lemma) / a (halfspace)
  double curvature_ = 0.0;
  // ball form ||x - center|| <= radius
  std::vector<double> center_;
  double radius_ = 0.0;
  // halfspace form a'x <= b
  double offset_ = 0.0;
  // dc-split general
  const ConstraintFn* plus_ = nullptr;
  std::vector<double> gm_base_;   // grad c^-(y)
  double minus_base_ = 0.0;       // c^-(y)
};

/// Builds c~_{i,j}(.; y) at base y (the block's current value, per C3).
ConstraintSurrogate build_constraint_surrogate(const ConstraintComponent& comp,
                                               std::span<const double> y);

// ---------------------------------------------------------------------------
// Empirical audit of the surrogate conditions (gradient consistency,
// strong convexity, Lipschitz bounds) against the declared constants.
// ---------------------------------------------------------------------------

struct AuditReport {
  double max_b2_residual = 0.0;
  double min_strong_convexity = 0.0;  // min secant ratio, estimates c_f~
  double max_lip_inner = 0.0;         // max secant ratio, estimates L_E
  double max_lip_base = 0.0;          // max secant ratio, estimates L_B
  double declared_strong_convexity = 0.0;
  double declared_lip_inner = 0.0;
  double declared_lip_base = 0.0;
  bool pass = false;  // declared constants bound the estimates with 5% slack
  int samples = 0;
};

AuditReport audit_surrogate(const SurrogateModel& model,
                            const ProblemSpec& spec, int samples,
                            std::uint64_t seed, double probe_radius = 0.5);

}  // namespace asyflexa
