#pragma once

#include "mechreg/feature_map.hpp"
#include "mechreg/kernel.hpp"
#include "mechreg/kernel_ops.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace mechreg {

/// f = K(·,X)Z with Z = (K_r(X,X) + λI)⁻¹Y.
struct RidgeModel {
  KernelSpec kernel;
  Points anchors;
  Points coefficients;
  double lambda = 0.0;

  /// K(x,X)Z. When x is the anchor list itself the nugget term is included,
  /// so predict(anchors) returns the fitted values.
  Points predict(const Points& x) const;
  /// K(x,X)Z without any nugget, i.e. the RKHS function itself.
  Points evaluate(const Points& x) const;
  /// ‖f‖²_H = Zᵀ K(X,X) Z (no nugget).
  double rkhs_norm_sq() const;
};

RidgeModel fit_ridge(const KernelSpec& kernel, const Points& X, const Points& Y, double lambda);

/// λYᵀ(K_r + λI)⁻¹Y, or YᵀK_r⁻¹Y when λ = 0.
double ridge_loss(const KernelSpec& kernel, const Points& X, const Points& Y, double lambda);
/// Gradient of ridge_loss with respect to the positions X.
Points ridge_loss_grad(const KernelSpec& kernel, const Points& X, const Points& Y, double lambda);
/// Value and gradient in one pass.
double ridge_loss_value_grad(const KernelSpec& kernel, const Points& X, const Points& Y, double lambda,
                             Points* grad);

struct LossSpec {
  enum class Kind { squared, hinge };
  Kind kind = Kind::squared;
  int num_classes = 0;

  static LossSpec squared() { return {}; }
  static LossSpec hinge(int classes) { return {Kind::hinge, classes}; }
};

struct HingeResult {
  double loss = 0.0;
  Matrix subgradient;  ///< ∂loss/∂scores, N×C
  Vector margins;      ///< correct score minus best wrong score
};

/// Σ_i max(0, 1 − margin_i). The subgradient at the kink is zero.
HingeResult hinge_loss(const Matrix& scores, const std::vector<int>& labels);

/// Inner hinge readout min_Z λ tr(ZᵀK_rZ) + hinge(K_rZ), solved in the dual
/// by exact block-coordinate ascent.
struct HingeReadout {
  Points coefficients;  ///< Z, N×C
  Matrix dual;          ///< α = 2λZ
  double value = 0.0;   ///< primal objective
  double gap = 0.0;     ///< primal minus dual
  int sweeps = 0;
};

HingeReadout fit_hinge_readout(const Gram& gram_r, const std::vector<int>& labels, int num_classes, double lambda,
                               double tol = 1e-8, int max_sweeps = 100000);

/// Labels stored as a column of class indices.
std::vector<int> labels_from_column(const Points& Y, int num_classes);

/// σ²(x) = Tr[K(x,x) − K(x,X)(K_r(X,X) + λI)⁻¹K(X,x)], clamped at zero.
double power_function(const KernelSpec& kernel, const Points& X, double lambda, const Eigen::Ref<const Vector>& x);
/// Same for each row of xs.
Vector power_function_rows(const KernelSpec& kernel, const Points& X, double lambda, const Points& xs);

struct ErrorBoundReport {
  Vector error;
  Vector sigma_sq;
  Vector bound;
  double f_norm = 0.0;
  bool pass = true;
};

/// Fits the ridge model on (X, f†(X)) and checks ‖f†(x) − f(x)‖ against the
/// power-function bound at each test point. For λ + r > 0 the bound is
/// √(σ² + (λ + r)·dim Y)·‖f†‖_H.
ErrorBoundReport error_bound_check(const KernelSpec& kernel, const Points& X, double lambda,
                                   const RidgeModel& f_dagger, const Points& test_points,
                                   double slack = 1e-10);

/// One draw ξ = m + αφ with α i.i.d. standard normal.
struct GpSample {
  FeatureMap map;
  Matrix alpha;  ///< output_dim × feature_dim
  std::optional<RidgeModel> mean;

  Vector operator()(const Eigen::Ref<const Vector>& x) const;
};

GpSample sample_gp(const FeatureMap& fm, const std::optional<RidgeModel>& mean, Eigen::Index output_dim,
                   std::uint64_t seed);

}  // namespace mechreg
