#include "asyflexa/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace asyflexa {

SurrogateKind surrogate_kind_from_string(const std::string& s) {
  if (s == "prox_linear") return SurrogateKind::kProxLinear;
  if (s == "second_order") return SurrogateKind::kSecondOrder;
  if (s == "partial_convexity") return SurrogateKind::kPartialConvexity;
  if (s == "dc_split") return SurrogateKind::kDcSplit;
  throw StructuralError("unknown surrogate kind: " + s);
}

std::string to_string(SurrogateKind k) {
  switch (k) {
    case SurrogateKind::kProxLinear: return "prox_linear";
    case SurrogateKind::kSecondOrder: return "second_order";
    case SurrogateKind::kPartialConvexity: return "partial_convexity";
    case SurrogateKind::kDcSplit: return "dc_split";
  }
  return "?";
}

double SurrogateModel::value(std::span<const double> xi) const {
  const auto yi = base_block();
  const std::size_t ni = yi.size();
  double quad = 0.0;
  for (std::size_t j = 0; j < ni; ++j) {
    const double d = xi[j] - yi[j];
    quad += d * d;
  }
  switch (kind_) {
    case SurrogateKind::kProxLinear: {
      double lin = 0.0;
      for (std::size_t j = 0; j < ni; ++j) lin += g0_[j] * (xi[j] - yi[j]);
      return lin + beta_ * quad;
    }
    case SurrogateKind::kSecondOrder: {
      double s = f0_ + beta_ * quad;
      for (std::size_t j = 0; j < ni; ++j) {
        const double dj = xi[j] - yi[j];
        double hd = 0.0;
        for (std::size_t l = 0; l < ni; ++l)
          hd += hess_[j * ni + l] * (xi[l] - yi[l]);
        s += g0_[j] * dj + 0.5 * dj * hd;
      }
      return s;
    }
    case SurrogateKind::kPartialConvexity: {
      BlockVector mixed = base_;
      copy_to(xi, mixed.block(block_));
      return smooth_->value(mixed.all()) + beta_ * quad;
    }
    case SurrogateKind::kDcSplit: {
      BlockVector mixed = base_;
      copy_to(xi, mixed.block(block_));
      double s = smooth_->dc_plus()->value(mixed.all()) - f0_ + beta_ * quad;
      for (std::size_t j = 0; j < ni; ++j) s -= gm0_[j] * (xi[j] - yi[j]);
      return s;
    }
  }
  return 0.0;
}

void SurrogateModel::grad(std::span<const double> xi,
                          std::span<double> out) const {
  const auto yi = base_block();
  const std::size_t ni = yi.size();
  switch (kind_) {
    case SurrogateKind::kProxLinear:
      for (std::size_t j = 0; j < ni; ++j)
        out[j] = g0_[j] + 2.0 * beta_ * (xi[j] - yi[j]);
      return;
    case SurrogateKind::kSecondOrder:
      for (std::size_t j = 0; j < ni; ++j) {
        double hd = 0.0;
        for (std::size_t l = 0; l < ni; ++l)
          hd += hess_[j * ni + l] * (xi[l] - yi[l]);
        out[j] = g0_[j] + hd + 2.0 * beta_ * (xi[j] - yi[j]);
      }
      return;
    case SurrogateKind::kPartialConvexity: {
      BlockVector mixed = base_;
      copy_to(xi, mixed.block(block_));
      smooth_->grad_block(block_, mixed.all(), out);
      for (std::size_t j = 0; j < ni; ++j)
        out[j] += 2.0 * beta_ * (xi[j] - yi[j]);
      return;
    }
    case SurrogateKind::kDcSplit: {
      BlockVector mixed = base_;
      copy_to(xi, mixed.block(block_));
      smooth_->dc_plus()->grad_block(block_, mixed.all(), out);
      for (std::size_t j = 0; j < ni; ++j)
        out[j] += -gm0_[j] + 2.0 * beta_ * (xi[j] - yi[j]);
      return;
    }
  }
}

SurrogateModel build_surrogate(SurrogateKind kind, const ProblemSpec& spec,
                               int i, const BlockVector& y, double beta) {
  if (beta <= 0.0) throw StructuralError("surrogate: beta must be positive");
  if (i < 0 || i >= spec.blocks())
    throw StructuralError("surrogate: block index out of range");
  const double lf = spec.smooth->lipschitz();

  SurrogateModel m;
  m.kind_ = kind;
  m.block_ = i;
  m.beta_ = beta;
  m.base_ = y;
  m.smooth_ = spec.smooth.get();
  m.g0_.resize(spec.partition->size(i));
  spec.smooth->grad_block(i, y.all(), m.g0_);

  switch (kind) {
    case SurrogateKind::kProxLinear:
      m.c_strong_ = 2.0 * beta;
      m.lip_inner_ = lf + 2.0 * beta;
      m.lip_base_ = lf;
      break;
    case SurrogateKind::kSecondOrder:
      if (!spec.smooth->has_block_hessian())
        throw StructuralError("second-order surrogate needs a block Hessian");
      spec.smooth->block_hessian(i, y.all(), m.hess_);
      m.f0_ = spec.smooth->value(y.all());
      m.c_strong_ = 2.0 * beta;
      m.lip_inner_ = lf + 2.0 * beta;
      m.lip_base_ = 2.0 * lf + 2.0 * beta;
      break;
    case SurrogateKind::kPartialConvexity:
      if (!spec.smooth->blockwise_convex())
        throw StructuralError(
            "partial-convexity surrogate needs a blockwise convex f");
      m.c_strong_ = 2.0 * beta + spec.smooth->block_convexity_modulus(i);
      m.lip_inner_ = lf + 2.0 * beta;
      m.lip_base_ = lf + 2.0 * beta;
      break;
    case SurrogateKind::kDcSplit: {
      const SmoothTerm* plus = spec.smooth->dc_plus();
      const SmoothTerm* minus = spec.smooth->dc_minus();
      if (plus == nullptr || minus == nullptr)
        throw StructuralError("dc-split surrogate needs a DC decomposition");
      m.gm0_.resize(spec.partition->size(i));
      minus->grad_block(i, y.all(), m.gm0_);
      m.f0_ = minus->value(y.all());
      m.c_strong_ = 2.0 * beta + plus->block_convexity_modulus(i);
      m.lip_inner_ = plus->lipschitz() + 2.0 * beta;
      m.lip_base_ = plus->lipschitz() + minus->lipschitz() + 2.0 * beta;
      break;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Constraint surrogates
// ---------------------------------------------------------------------------

ConstraintSurrogate build_constraint_surrogate(const ConstraintComponent& comp,
                                               std::span<const double> y) {
  ConstraintSurrogate s;
  s.kind_ = comp.surrogate;
  s.base_.assign(y.begin(), y.end());
  s.c_base_ = comp.fn->value(y);

  if (comp.surrogate == ConstraintSurrogateKind::kDescentLemma) {
    if (comp.curvature <= 0.0)
      throw StructuralError("descent-lemma surrogate needs a curvature bound");
    s.curvature_ = comp.curvature;
    s.g_base_.resize(y.size());
    comp.fn->grad(y, s.g_base_);
    // c(y) + g'(x-y) + L/2 ||x-y||^2 <= 0 is the ball
    // ||x - (y - g/L)||^2 <= ||g/L||^2 - 2 c(y)/L
    s.shape_ = SurrogateShape::kBall;
    s.center_.resize(y.size());
    double r2 = -2.0 * s.c_base_ / s.curvature_;
    for (std::size_t j = 0; j < y.size(); ++j) {
      const double gl = s.g_base_[j] / s.curvature_;
      s.center_[j] = y[j] - gl;
      r2 += gl * gl;
    }
    s.radius_ = r2 > 0.0 ? std::sqrt(r2) : 0.0;
    return s;
  }

  if (!comp.dc_plus || !comp.dc_minus)
    throw StructuralError("dc-split surrogate needs the DC decomposition");
  s.plus_ = comp.dc_plus.get();
  s.gm_base_.resize(y.size());
  comp.dc_minus->grad(y, s.gm_base_);
  s.minus_base_ = comp.dc_minus->value(y);
  if (comp.dc_plus->affine()) {
    // c~ is affine: a = grad c^+(y) - grad c^-(y), a'x <= a'y - c(y)
    s.shape_ = SurrogateShape::kHalfspace;
    s.g_base_.resize(y.size());
    comp.dc_plus->grad(y, s.g_base_);
    for (std::size_t j = 0; j < y.size(); ++j) s.g_base_[j] -= s.gm_base_[j];
    s.offset_ = dot(s.g_base_, y) - s.c_base_;
  } else {
    s.shape_ = SurrogateShape::kGeneralConvex;
  }
  return s;
}

double ConstraintSurrogate::value(std::span<const double> xi) const {
  switch (kind_) {
    case ConstraintSurrogateKind::kDescentLemma: {
      double s = c_base_;
      double q = 0.0;
      for (std::size_t j = 0; j < xi.size(); ++j) {
        const double d = xi[j] - base_[j];
        s += g_base_[j] * d;
        q += d * d;
      }
      return s + 0.5 * curvature_ * q;
    }
    case ConstraintSurrogateKind::kDcSplit: {
      if (shape_ == SurrogateShape::kHalfspace)
        return dot(g_base_, xi) - offset_;
      double s = plus_->value(xi) - minus_base_;
      for (std::size_t j = 0; j < xi.size(); ++j)
        s -= gm_base_[j] * (xi[j] - base_[j]);
      return s;
    }
  }
  return 0.0;
}

void ConstraintSurrogate::grad(std::span<const double> xi,
                               std::span<double> out) const {
  switch (kind_) {
    case ConstraintSurrogateKind::kDescentLemma:
      for (std::size_t j = 0; j < xi.size(); ++j)
        out[j] = g_base_[j] + curvature_ * (xi[j] - base_[j]);
      return;
    case ConstraintSurrogateKind::kDcSplit:
      if (shape_ == SurrogateShape::kHalfspace) {
        copy_to(g_base_, out);
        return;
      }
      plus_->grad(xi, out);
      for (std::size_t j = 0; j < xi.size(); ++j) out[j] -= gm_base_[j];
      return;
  }
}

void ConstraintSurrogate::project(std::span<const double> v,
                                  std::span<double> out) const {
  if (shape_ == SurrogateShape::kBall) {
    const double d = std::sqrt(sq_dist(v, center_));
    if (d <= radius_) {
      copy_to(v, out);
      return;
    }
    const double scale = radius_ / d;
    for (std::size_t j = 0; j < v.size(); ++j)
      out[j] = center_[j] + scale * (v[j] - center_[j]);
    return;
  }
  if (shape_ == SurrogateShape::kHalfspace) {
    copy_to(v, out);
    const double viol = dot(g_base_, out) - offset_;
    const double gn = sq_norm(g_base_);
    if (viol > 0.0 && gn > 0.0) axpy(-viol / gn, g_base_, out);
    return;
  }
  throw StructuralError("no closed-form projection for this surrogate shape");
}

// ---------------------------------------------------------------------------
// Audit
// ---------------------------------------------------------------------------

AuditReport audit_surrogate(const SurrogateModel& model,
                            const ProblemSpec& spec, int samples,
                            std::uint64_t seed, double probe_radius) {
  if (samples < 1) throw StructuralError("audit: samples must be >= 1");
  AuditReport rep;
  rep.samples = samples;
  rep.declared_strong_convexity = model.strong_convexity();
  rep.declared_lip_inner = model.lip_inner();
  rep.declared_lip_base = model.lip_base();
  rep.min_strong_convexity = std::numeric_limits<double>::infinity();

  const int i = model.block();
  const int ni = spec.partition->size(i);
  Rng rng(seed);

  auto probe_block = [&](std::span<const double> around,
                         std::vector<double>& out) {
    std::vector<double> raw(ni);
    for (int j = 0; j < ni; ++j)
      raw[j] = around[j] + probe_radius * rng.normal();
    out.resize(ni);
    spec.sets[i]->project(raw, out);
  };
  auto probe_base = [&](const BlockVector& around, BlockVector& out) {
    out = around;
    for (int b = 0; b < spec.blocks(); ++b) {
      std::vector<double> raw(spec.partition->size(b));
      for (std::size_t j = 0; j < raw.size(); ++j)
        raw[j] = around.block(b)[j] + probe_radius * rng.normal();
      spec.sets[b]->project(raw, out.block(b));
    }
  };

  std::vector<double> a, b, ga(ni), gb(ni), gref(ni);
  BlockVector ya, yb;
  for (int s = 0; s < samples; ++s) {
    // B2 at a fresh base
    probe_base(model.base(), ya);
    SurrogateModel ma = build_surrogate(model.kind(), spec, i, ya, model.beta());
    ma.grad(ya.block(i), ga);
    spec.smooth->grad_block(i, ya.all(), gref);
    double r = 0.0;
    for (int j = 0; j < ni; ++j) r += (ga[j] - gref[j]) * (ga[j] - gref[j]);
    rep.max_b2_residual = std::max(rep.max_b2_residual, std::sqrt(r));

    // B1/B4 secants of the original model
    probe_block(model.base_block(), a);
    probe_block(model.base_block(), b);
    const double dist2 = sq_dist(a, b);
    if (dist2 > 1e-20) {
      model.grad(a, ga);
      model.grad(b, gb);
      double inner = 0.0, gnorm2 = 0.0;
      for (int j = 0; j < ni; ++j) {
        const double dg = ga[j] - gb[j];
        inner += dg * (a[j] - b[j]);
        gnorm2 += dg * dg;
      }
      rep.min_strong_convexity =
          std::min(rep.min_strong_convexity, inner / dist2);
      rep.max_lip_inner =
          std::max(rep.max_lip_inner, std::sqrt(gnorm2 / dist2));
    }

    // B3 secants across two rebuilt bases, first argument fixed
    probe_base(model.base(), yb);
    const double based2 = sq_dist(ya.all(), yb.all());
    if (based2 > 1e-20) {
      SurrogateModel mb =
          build_surrogate(model.kind(), spec, i, yb, model.beta());
      probe_block(model.base_block(), a);
      ma.grad(a, ga);
      mb.grad(a, gb);
      double gnorm2 = 0.0;
      for (int j = 0; j < ni; ++j) {
        const double dg = ga[j] - gb[j];
        gnorm2 += dg * dg;
      }
      rep.max_lip_base =
          std::max(rep.max_lip_base, std::sqrt(gnorm2 / based2));
    }
  }

  const double slack = 1.05;
  rep.pass = rep.max_b2_residual <= 1e-8 &&
             rep.min_strong_convexity >= rep.declared_strong_convexity / slack &&
             rep.max_lip_inner <= rep.declared_lip_inner * slack &&
             rep.max_lip_base <= rep.declared_lip_base * slack;
  return rep;
}

}  // namespace asyflexa
