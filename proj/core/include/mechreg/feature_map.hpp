#pragma once

#include "mechreg/activation.hpp"
#include "mechreg/common.hpp"
#include "mechreg/rng.hpp"

namespace mechreg {

/// Explicit feature map φ(x) = (a(Wx + b), [1]).
///
/// Both supported kinds share this form. `activation_identity` has W = I,
/// b = 0 and an appended constant feature, so φ(x) = (a(x), 1). For
/// `random_features`, W and b are drawn once and never change afterwards.
class FeatureMap {
 public:
  enum class Kind { activation_identity, random_features, custom };

  static FeatureMap activation_identity(Activation a, Eigen::Index input_dim);
  /// W ~ weight_scale·N(0,1), b ~ bias_scale·N(0,1). A negative weight_scale
  /// selects 1.5/sqrt(input_dim).
  static FeatureMap random_features(Eigen::Index input_dim, Eigen::Index feature_dim, Activation a,
                                    Rng& rng, double weight_scale = -1.0, double bias_scale = 0.1);
  /// Takes W (feature_dim × input_dim) and b as given.
  static FeatureMap from_weights(Matrix W, Vector b, Activation a, bool constant_feature, Kind kind);

  Kind kind() const { return kind_; }
  const Activation& activation() const { return activation_; }
  const Matrix& weights() const { return W_; }
  const Vector& biases() const { return b_; }
  bool constant_feature() const { return constant_; }
  Eigen::Index input_dim() const { return W_.cols(); }
  Eigen::Index feature_dim() const { return W_.rows() + (constant_ ? 1 : 0); }

  Vector apply(const Eigen::Ref<const Vector>& x) const;
  /// Row i of the result is φ(X_i).
  Matrix apply_rows(const Points& X) const;
  /// α·φ(x) with α of shape (out × feature_dim).
  Vector adjoint_apply(const Matrix& alpha, const Eigen::Ref<const Vector>& x) const;
  /// Pre-activations Z = X Wᵀ + 1bᵀ.
  Matrix preactivation(const Points& X) const;
  /// Jacobian transpose product: row i is J_φ(X_i)ᵀ G_i, for G (N × feature_dim).
  /// Uses the a.e. derivative for relu.
  Points pullback(const Points& X, const Matrix& G) const;

 private:
  FeatureMap() = default;
  void check_input(Eigen::Index cols) const;

  Kind kind_ = Kind::custom;
  Activation activation_;
  Matrix W_;
  Vector b_;
  bool constant_ = false;
};

}  // namespace mechreg
