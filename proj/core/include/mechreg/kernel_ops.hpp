#pragma once

#include "mechreg/kernel.hpp"

#include <memory>

namespace mechreg {

namespace detail {
class BaseAt;
class Lifting;
}  // namespace detail

/// A kernel evaluated on one symmetric point set q.
///
/// The scalar base Gram and its derivative data are computed once. Every
/// routine below then works on covectors only. This is the hot path of the
/// integrator, which reuses the same q across fixed-point sweeps.
///
/// The derivative routines ignore the nugget, since it does not depend on q.
class KernelAt {
 public:
  /// `derivatives = false` skips second-derivative data; only apply() and
  /// gram() may then be used.
  KernelAt(const KernelSpec& kernel, const Points& q, bool derivatives = true);
  ~KernelAt();
  KernelAt(KernelAt&&) noexcept;
  KernelAt& operator=(KernelAt&&) noexcept;

  const KernelSpec& kernel() const { return kernel_; }
  const Points& points() const { return q_; }
  Eigen::Index size() const { return q_.rows(); }

  /// K(q,q)p, including r·p when `nugget` is set.
  Points apply(const Points& p, bool nugget = true) const;
  /// ∂_q ⟨a, K(q,q) b⟩.
  Points pair_grad(const Points& a, const Points& b) const;
  /// Directional derivative (D_v K(q,q)) p.
  Points pair_dir(const Points& p, const Points& v) const;
  /// ∂_q ⟨v, pair_grad(a, b)⟩.
  Points pair_hess(const Points& a, const Points& b, const Points& v) const;
  /// Symmetric Gram, nugget included when requested.
  Gram gram(bool nugget = true) const;

 private:
  Eigen::Index covector_dim(const Points& p) const;

  KernelSpec kernel_;
  Points q_;
  std::unique_ptr<detail::Lifting> lift_;
  std::unique_ptr<Points> lifted_;  // stable address, referenced by base_
  std::unique_ptr<detail::BaseAt> base_;
  bool derivatives_ = true;
};

/// K(x, q) p for test points x (no nugget).
Points cross_apply(const KernelSpec& kernel, const Points& x, const Points& q, const Points& p);

/// ∂_q (pᵀ K_r(q,q) p).
Points gram_quadratic_grad(const KernelSpec& kernel, const Points& q, const Points& p);

}  // namespace mechreg
