#include "mechreg/kernel.hpp"

#include "kernel_detail.hpp"
#include "mechreg/rem.hpp"

#include <cmath>

namespace mechreg {

namespace {

void check_nugget(double r) {
  require(std::isfinite(r) && r >= 0, ErrorCode::invalid_argument, "nugget must be a nonnegative real");
}

void check_output_dim(Eigen::Index d) {
  require(d >= 0, ErrorCode::invalid_argument, "output dimension must be nonnegative");
}

}  // namespace

KernelSpec KernelSpec::gaussian(double bandwidth, double nugget, Eigen::Index output_dim) {
  require(std::isfinite(bandwidth) && bandwidth > 0, ErrorCode::invalid_argument,
          "gaussian bandwidth must be positive");
  check_nugget(nugget);
  check_output_dim(output_dim);
  KernelSpec k;
  k.family_ = GaussianKernel{bandwidth};
  k.nugget_ = nugget;
  k.output_dim_ = output_dim;
  return k;
}

KernelSpec KernelSpec::activation(Activation a, double nugget, Eigen::Index output_dim) {
  check_nugget(nugget);
  check_output_dim(output_dim);
  KernelSpec k;
  k.family_ = ActivationKernel{a};
  k.nugget_ = nugget;
  k.output_dim_ = output_dim;
  return k;
}

KernelSpec KernelSpec::linear(double nugget, Eigen::Index output_dim) {
  check_nugget(nugget);
  check_output_dim(output_dim);
  KernelSpec k;
  k.family_ = LinearKernel{};
  k.nugget_ = nugget;
  k.output_dim_ = output_dim;
  return k;
}

KernelSpec KernelSpec::feature(std::shared_ptr<const FeatureMap> map, double nugget, Eigen::Index output_dim) {
  require(map != nullptr, ErrorCode::invalid_argument, "feature kernel needs a feature map");
  check_nugget(nugget);
  check_output_dim(output_dim);
  KernelSpec k;
  k.family_ = FeatureKernel{std::move(map)};
  k.nugget_ = nugget;
  k.output_dim_ = output_dim;
  return k;
}

KernelSpec KernelSpec::rem(std::shared_ptr<const RemSpec> spec, double nugget) {
  require(spec != nullptr, ErrorCode::invalid_argument, "REM kernel needs a REM spec");
  check_nugget(nugget);
  KernelSpec k;
  k.family_ = spec->base.family();
  k.rem_ = std::move(spec);
  k.nugget_ = nugget;
  k.output_dim_ = k.rem_->output_dim();
  return k;
}

std::string KernelSpec::family_name() const {
  if (rem_) return "rem";
  switch (family_.index()) {
    case 0: return "gaussian";
    case 1: return "activation";
    case 2: return "linear";
    case 3: return "feature";
  }
  return "?";
}

bool KernelSpec::differentiable() const {
  if (auto* a = std::get_if<ActivationKernel>(&family_)) return a->activation.twice_differentiable();
  if (auto* f = std::get_if<FeatureKernel>(&family_)) return f->map->activation().twice_differentiable();
  return true;
}

void KernelSpec::require_differentiable(const std::string& where) const {
  if (!differentiable())
    throw Error(ErrorCode::not_differentiable,
                where + ": kernel uses relu, which has no second derivative; use softplus_clamped instead");
}

KernelSpec KernelSpec::with_nugget(double r) const {
  check_nugget(r);
  KernelSpec k = *this;
  k.nugget_ = r;
  return k;
}

KernelSpec KernelSpec::with_output_dim(Eigen::Index d) const {
  check_output_dim(d);
  require(!rem_, ErrorCode::invalid_argument, "REM kernels fix their output dimension");
  KernelSpec k = *this;
  k.output_dim_ = d;
  return k;
}

double KernelSpec::base_value(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) const {
  require(a.size() == b.size(), ErrorCode::dimension_mismatch, "kernel arguments differ in dimension");
  Points A = a.transpose(), B = b.transpose();
  return detail::base_cross(family_, A, B)(0, 0);
}

Matrix Gram::dense() const {
  if (!scalar) return values;
  if (block == 1) return values;
  Matrix out = Matrix::Zero(values.rows() * block, values.cols() * block);
  for (Eigen::Index i = 0; i < values.rows(); ++i)
    for (Eigen::Index j = 0; j < values.cols(); ++j)
      for (Eigen::Index k = 0; k < block; ++k) out(i * block + k, j * block + k) = values(i, j);
  return out;
}

Points Gram::apply(const Points& P) const {
  require(P.rows() == cols(), ErrorCode::dimension_mismatch, "Gram apply: wrong number of covectors");
  if (scalar) return values * P;
  require(P.cols() == block, ErrorCode::dimension_mismatch, "Gram apply: wrong covector width");
  return unflatten(values * flatten(P), rows(), block);
}

void Gram::add_identity(double shift) {
  require(values.rows() == values.cols(), ErrorCode::dimension_mismatch, "shift needs a square Gram");
  values.diagonal().array() += shift;
}

GramSolver::GramSolver(const Gram& g, double shift, double jitter)
    : scalar_(g.scalar), block_(g.block), n_(g.rows()) {
  Matrix a = g.values;
  require(a.rows() == a.cols(), ErrorCode::dimension_mismatch, "Gram solve needs a square Gram");
  if (shift != 0.0) a.diagonal().array() += shift;
  solver_.emplace(a, jitter);
}

Points GramSolver::solve(const Points& rhs) const {
  require(rhs.rows() == n_, ErrorCode::dimension_mismatch, "Gram solve: wrong number of rows");
  if (scalar_) return solver_->solve(rhs);
  require(rhs.cols() == block_, ErrorCode::dimension_mismatch, "Gram solve: wrong covector width");
  return unflatten(solver_->solve(flatten(rhs)), n_, block_);
}

Vector flatten(const Points& P) {
  Vector v(P.size());
  for (Eigen::Index i = 0; i < P.rows(); ++i) v.segment(i * P.cols(), P.cols()) = P.row(i).transpose();
  return v;
}

Points unflatten(const Eigen::Ref<const Vector>& v, Eigen::Index rows, Eigen::Index cols) {
  require(v.size() == rows * cols, ErrorCode::dimension_mismatch, "unflatten: size mismatch");
  Points P(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) P.row(i) = v.segment(i * cols, cols).transpose();
  return P;
}

}  // namespace mechreg
