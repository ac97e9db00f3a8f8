#pragma once

#include "mechreg/common.hpp"
#include "mechreg/feature_map.hpp"
#include "mechreg/linalg.hpp"

#include <memory>
#include <optional>
#include <string>
#include <variant>

namespace mechreg {

struct RemSpec;

/// k(x,x') = exp(-|x-x'|²/s²).
struct GaussianKernel {
  double bandwidth = 1.0;
};

/// k(x,x') = a(x)ᵀa(x') + 1.
struct ActivationKernel {
  Activation activation;
};

/// k(x,x') = xᵀx'.
struct LinearKernel {};

/// k(x,x') = φ(x)ᵀφ(x') for an explicit feature map.
struct FeatureKernel {
  std::shared_ptr<const FeatureMap> map;
};

using ScalarFamily = std::variant<GaussianKernel, ActivationKernel, LinearKernel, FeatureKernel>;

/// Kernel definition consumed by every Gram, gradient and regression routine.
///
/// Scalar families act as k(x,x')·I on covectors of width `output_dim`
/// (0 means "whatever width the covectors have"). A REM kernel wraps a scalar
/// base family through group averaging and patch projections; see rem.hpp.
/// The nugget r is added to diagonal blocks of symmetric Grams only.
class KernelSpec {
 public:
  static KernelSpec gaussian(double bandwidth, double nugget = 0.0, Eigen::Index output_dim = 0);
  static KernelSpec activation(Activation a, double nugget = 0.0, Eigen::Index output_dim = 0);
  static KernelSpec linear(double nugget = 0.0, Eigen::Index output_dim = 0);
  static KernelSpec feature(std::shared_ptr<const FeatureMap> map, double nugget = 0.0,
                            Eigen::Index output_dim = 0);
  static KernelSpec rem(std::shared_ptr<const RemSpec> spec, double nugget = 0.0);

  const ScalarFamily& family() const { return family_; }
  const std::shared_ptr<const RemSpec>& rem_spec() const { return rem_; }
  bool is_rem() const { return rem_ != nullptr; }
  double nugget() const { return nugget_; }
  Eigen::Index output_dim() const { return output_dim_; }
  std::string family_name() const;

  /// True when analytic position derivatives exist (no relu anywhere).
  bool differentiable() const;
  void require_differentiable(const std::string& where) const;

  KernelSpec with_nugget(double r) const;
  KernelSpec with_output_dim(Eigen::Index d) const;

  /// Scalar base value k(a,b) on (lifted) points.
  double base_value(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) const;

 private:
  KernelSpec() = default;

  ScalarFamily family_;
  std::shared_ptr<const RemSpec> rem_;
  double nugget_ = 0.0;
  Eigen::Index output_dim_ = 0;
};

/// K(A,B) in one of two layouts. Scalar: `values` is m×n and the full Gram is
/// values ⊗ I_block. Dense: `values` is (m·block)×(n·block), sample-major.
struct Gram {
  Matrix values;
  Eigen::Index block = 1;
  bool scalar = true;

  Eigen::Index rows() const { return scalar ? values.rows() : values.rows() / block; }
  Eigen::Index cols() const { return scalar ? values.cols() : values.cols() / block; }
  /// Full (m·block)×(n·block) matrix.
  Matrix dense() const;
  /// Row i of the result is Σ_j K(A_i,B_j) P_j.
  Points apply(const Points& P) const;
  void add_identity(double shift);
};

/// Block Gram K(A,B). When A and B are the same point list (exact equality)
/// the nugget is added to diagonal blocks.
Gram gram(const KernelSpec& kernel, const Points& A, const Points& B);
/// Symmetric Gram K_r(A,A), nugget included.
Gram gram(const KernelSpec& kernel, const Points& A);
/// K(A,B) without nugget, whatever A and B are.
Gram cross_gram(const KernelSpec& kernel, const Points& A, const Points& B);

/// Cholesky solver for K + shift·I.
class GramSolver {
 public:
  GramSolver(const Gram& g, double shift, double jitter = SpdSolver::default_jitter);

  Points solve(const Points& rhs) const;
  Eigen::Index points() const { return n_; }

 private:
  bool scalar_;
  Eigen::Index block_;
  Eigen::Index n_;
  std::optional<SpdSolver> solver_;
};

/// Row-major flattening helpers: vec(P)[i·d + k] = P(i,k).
Vector flatten(const Points& P);
Points unflatten(const Eigen::Ref<const Vector>& v, Eigen::Index rows, Eigen::Index cols);

}  // namespace mechreg
