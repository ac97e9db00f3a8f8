#include "mechreg/feature_map.hpp"

#include <cmath>

namespace mechreg {

FeatureMap FeatureMap::activation_identity(Activation a, Eigen::Index input_dim) {
  require(input_dim > 0, ErrorCode::invalid_argument, "feature map input dimension must be positive");
  return from_weights(Matrix::Identity(input_dim, input_dim), Vector::Zero(input_dim), a, true,
                      Kind::activation_identity);
}

FeatureMap FeatureMap::random_features(Eigen::Index input_dim, Eigen::Index feature_dim, Activation a, Rng& rng,
                                       double weight_scale, double bias_scale) {
  require(input_dim > 0 && feature_dim > 0, ErrorCode::invalid_argument,
          "random features need positive dimensions");
  if (weight_scale < 0) weight_scale = 1.5 / std::sqrt(static_cast<double>(input_dim));
  Matrix W(feature_dim, input_dim);
  Vector b(feature_dim);
  // Row-major draw order so the stream does not depend on Eigen's layout.
  for (Eigen::Index i = 0; i < feature_dim; ++i)
    for (Eigen::Index j = 0; j < input_dim; ++j) W(i, j) = weight_scale * rng.normal();
  for (Eigen::Index i = 0; i < feature_dim; ++i) b(i) = bias_scale * rng.normal();
  return from_weights(std::move(W), std::move(b), a, false, Kind::random_features);
}

FeatureMap FeatureMap::from_weights(Matrix W, Vector b, Activation a, bool constant_feature, Kind kind) {
  require(W.rows() == b.size(), ErrorCode::dimension_mismatch, "feature weights and biases disagree");
  require(W.rows() + (constant_feature ? 1 : 0) > 0, ErrorCode::invalid_argument, "empty feature map");
  require_finite(W, "feature weights");
  require_finite(b, "feature biases");
  FeatureMap fm;
  fm.kind_ = kind;
  fm.activation_ = a;
  fm.W_ = std::move(W);
  fm.b_ = std::move(b);
  fm.constant_ = constant_feature;
  return fm;
}

void FeatureMap::check_input(Eigen::Index cols) const {
  if (cols != input_dim())
    throw Error(ErrorCode::dimension_mismatch, "feature map expects dimension " + std::to_string(input_dim()) +
                                                   ", got " + std::to_string(cols));
}

Matrix FeatureMap::preactivation(const Points& X) const {
  check_input(X.cols());
  Matrix Z = X * W_.transpose();
  Z.rowwise() += b_.transpose();
  return Z;
}

Matrix FeatureMap::apply_rows(const Points& X) const {
  require_finite(X, "feature map input");
  Matrix Z = preactivation(X);
  Matrix out(X.rows(), feature_dim());
  const auto& a = activation_;
  out.leftCols(W_.rows()) = Z.unaryExpr([&a](double z) { return a.value(z); });
  if (constant_) out.col(W_.rows()).setOnes();
  return out;
}

Vector FeatureMap::apply(const Eigen::Ref<const Vector>& x) const {
  Points X = x.transpose();
  return apply_rows(X).row(0).transpose();
}

Vector FeatureMap::adjoint_apply(const Matrix& alpha, const Eigen::Ref<const Vector>& x) const {
  require(alpha.cols() == feature_dim(), ErrorCode::dimension_mismatch,
          "alpha must have feature_dim columns");
  return alpha * apply(x);
}

Points FeatureMap::pullback(const Points& X, const Matrix& G) const {
  require(G.rows() == X.rows() && G.cols() == feature_dim(), ErrorCode::dimension_mismatch,
          "feature pullback shape mismatch");
  Matrix Z = preactivation(X);
  const auto& a = activation_;
  Matrix D = Z.unaryExpr([&a](double z) { return a.derivative(z); });
  return (D.array() * G.leftCols(W_.rows()).array()).matrix() * W_;
}

}  // namespace mechreg
