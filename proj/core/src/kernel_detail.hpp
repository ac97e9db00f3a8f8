#pragma once

#include "mechreg/kernel.hpp"

#include <memory>
#include <vector>

namespace mechreg::detail {

// Scalar base kernel k prepared on one lifted point set U (M × d_u).
//
// Covector pairs enter only through an M×M weight matrix Ω, so the same three
// primitives serve every family:
//   grad_weighted:  G_a = Σ_b Ω_ab ∇₁k(u_a,u_b)
//   directional:    S_ab = ∇₁k(u_a,u_b)·ν_a + ∇₂k(u_a,u_b)·ν_b
//   hess_weighted:  H_a = Σ_b Ω_ab ∂₁∂₁k(u_a,u_b)ν_a + Σ_b Ω_ba (∂₂∇₁k(u_b,u_a))ᵀν_b
class BaseAt {
 public:
  virtual ~BaseAt() = default;
  const Matrix& gram() const { return K_; }
  virtual Points grad_weighted(const Matrix& omega) const = 0;
  virtual Matrix directional(const Points& nu) const = 0;
  virtual Points hess_weighted(const Matrix& omega, const Points& nu) const = 0;

 protected:
  Matrix K_;
};

std::unique_ptr<BaseAt> make_base(const ScalarFamily& family, const Points& U, bool derivatives);
Matrix base_cross(const ScalarFamily& family, const Points& A, const Points& B);
Eigen::Index base_input_dim(const ScalarFamily& family);  // 0 = any

// Linear map from N points (and covectors) to M lifted ones. The identity for
// scalar families; patch/range packing over the group for REM kernels.
class Lifting {
 public:
  virtual ~Lifting() = default;
  virtual Points lift_points(const Points& q) const = 0;
  virtual Points pull_points(const Points& g, Eigen::Index n) const = 0;
  virtual Points lift_covectors(const Points& p) const = 0;
  virtual Points pull_covectors(const Points& pi, Eigen::Index n) const = 0;
};

std::unique_ptr<Lifting> make_lifting(const KernelSpec& kernel);
std::unique_ptr<Lifting> make_rem_lifting(const RemSpec& spec);

// Dense block Gram from the lifted scalar Gram, for REM kernels.
Matrix rem_block_gram(const RemSpec& spec, const Matrix& lifted_gram, Eigen::Index rows, Eigen::Index cols);

}  // namespace mechreg::detail
