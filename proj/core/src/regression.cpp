#include "mechreg/regression.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mechreg {

namespace {

void check_lambda(double lambda) {
  require(std::isfinite(lambda) && lambda >= 0, ErrorCode::invalid_argument, "lambda must be a nonnegative real");
}

void check_data(const KernelSpec& kernel, const Points& X, const Points& Y) {
  require(X.rows() >= 1, ErrorCode::invalid_argument, "at least one data point is required");
  require(X.rows() == Y.rows(), ErrorCode::dimension_mismatch, "X and Y have different numbers of rows");
  require_finite(Y, "labels");
  Eigen::Index d = kernel.output_dim();
  require(d == 0 || Y.cols() == d, ErrorCode::dimension_mismatch,
          "label width " + std::to_string(Y.cols()) + " differs from kernel output dimension " + std::to_string(d));
}

Eigen::Index trace_dim(const KernelSpec& kernel) { return kernel.output_dim() > 0 ? kernel.output_dim() : 1; }

// Euclidean projection onto the probability simplex.
Vector project_simplex(const Vector& v) {
  Vector u = v;
  std::sort(u.data(), u.data() + u.size(), std::greater<double>());
  double css = 0, theta = 0;
  for (Eigen::Index k = 0; k < u.size(); ++k) {
    css += u(k);
    double t = (css - 1.0) / static_cast<double>(k + 1);
    if (u(k) - t > 0) theta = t;
  }
  return (v.array() - theta).cwiseMax(0.0).matrix();
}

}  // namespace

Points RidgeModel::predict(const Points& x) const { return gram(kernel, x, anchors).apply(coefficients); }

Points RidgeModel::evaluate(const Points& x) const { return cross_apply(kernel, x, anchors, coefficients); }

double RidgeModel::rkhs_norm_sq() const {
  KernelAt k(kernel, anchors);
  return std::max(0.0, (coefficients.array() * k.apply(coefficients, false).array()).sum());
}

RidgeModel fit_ridge(const KernelSpec& kernel, const Points& X, const Points& Y, double lambda) {
  check_lambda(lambda);
  check_data(kernel, X, Y);
  require(lambda + kernel.nugget() > 0, ErrorCode::invalid_argument,
          "fit_ridge needs lambda + nugget > 0; use a small nugget to interpolate");
  GramSolver solver(gram(kernel, X), lambda);
  return RidgeModel{kernel, X, solver.solve(Y), lambda};
}

double ridge_loss_value_grad(const KernelSpec& kernel, const Points& X, const Points& Y, double lambda,
                             Points* grad) {
  check_lambda(lambda);
  check_data(kernel, X, Y);
  KernelAt k(kernel, X);
  GramSolver solver(k.gram(true), lambda);
  Points Z = solver.solve(Y);
  const double c = lambda > 0 ? lambda : 1.0;
  if (grad) *grad = -c * k.pair_grad(Z, Z);
  return std::max(0.0, c * (Y.array() * Z.array()).sum());
}

double ridge_loss(const KernelSpec& kernel, const Points& X, const Points& Y, double lambda) {
  check_lambda(lambda);
  check_data(kernel, X, Y);
  GramSolver solver(gram(kernel, X), lambda);
  const double c = lambda > 0 ? lambda : 1.0;
  return std::max(0.0, c * (Y.array() * solver.solve(Y).array()).sum());
}

Points ridge_loss_grad(const KernelSpec& kernel, const Points& X, const Points& Y, double lambda) {
  Points g;
  ridge_loss_value_grad(kernel, X, Y, lambda, &g);
  return g;
}

HingeResult hinge_loss(const Matrix& scores, const std::vector<int>& labels) {
  const Eigen::Index n = scores.rows(), C = scores.cols();
  require(C >= 2, ErrorCode::invalid_argument, "hinge loss needs at least two classes");
  require(static_cast<Eigen::Index>(labels.size()) == n, ErrorCode::dimension_mismatch,
          "one label per score row is required");
  require_finite(scores, "scores");
  HingeResult res;
  res.subgradient = Matrix::Zero(n, C);
  res.margins.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[i];
    require(y >= 0 && y < C, ErrorCode::invalid_argument, "label out of range");
    Eigen::Index best = -1;
    for (Eigen::Index j = 0; j < C; ++j)
      if (j != y && (best < 0 || scores(i, j) > scores(i, best))) best = j;
    const double margin = scores(i, y) - scores(i, best);
    res.margins(i) = margin;
    if (1.0 - margin > 0) {
      res.loss += 1.0 - margin;
      res.subgradient(i, y) = -1.0;
      res.subgradient(i, best) = 1.0;
    }
  }
  return res;
}

std::vector<int> labels_from_column(const Points& Y, int num_classes) {
  require(Y.cols() == 1, ErrorCode::dimension_mismatch, "class labels must be a single column");
  std::vector<int> out(static_cast<std::size_t>(Y.rows()));
  for (Eigen::Index i = 0; i < Y.rows(); ++i) {
    double v = Y(i, 0);
    require(std::isfinite(v) && v == std::round(v) && v >= 0 && v < num_classes, ErrorCode::invalid_argument,
            "class label must be an integer in [0, num_classes)");
    out[static_cast<std::size_t>(i)] = static_cast<int>(v);
  }
  return out;
}

HingeReadout fit_hinge_readout(const Gram& K, const std::vector<int>& labels, int num_classes, double lambda,
                               double tol, int max_sweeps) {
  require(K.scalar, ErrorCode::invalid_argument, "hinge readout needs a scalar kernel");
  require(lambda > 0 && std::isfinite(lambda), ErrorCode::invalid_argument, "hinge readout needs lambda > 0");
  require(num_classes >= 2, ErrorCode::invalid_argument, "hinge readout needs at least two classes");
  const Eigen::Index n = K.rows(), C = num_classes;
  require(static_cast<Eigen::Index>(labels.size()) == n, ErrorCode::dimension_mismatch,
          "one label per point is required");
  for (int y : labels) require(y >= 0 && y < C, ErrorCode::invalid_argument, "label out of range");
  const Matrix& k = K.values;

  // Dual variables α_i = e_{y_i} − β_i with β_i in the simplex; S = Kα.
  Matrix alpha = Matrix::Zero(n, C);
  Matrix S = Matrix::Zero(n, C);
  HingeReadout out;
  auto primal_dual = [&](double& primal, double& dual) {
    Matrix scores = S / (2.0 * lambda);
    double quad = (alpha.array() * S.array()).sum();
    primal = quad / (4.0 * lambda) + hinge_loss(scores, labels).loss;
    double lin = 0;
    for (Eigen::Index i = 0; i < n; ++i) lin += alpha(i, labels[i]);
    dual = lin - quad / (4.0 * lambda);
  };
  double primal = 0, dual = 0;
  for (out.sweeps = 0; out.sweeps < max_sweeps; ++out.sweeps) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double kii = k(i, i);
      if (kii <= 0) continue;
      Vector ai = alpha.row(i).transpose();
      Vector c = -(S.row(i).transpose() - kii * ai) / (2.0 * lambda);
      c(labels[i]) += 1.0;
      // maximize −(kii/4λ)|α|² + ⟨α, c⟩  ⇒  target α = 2λ c / kii
      Vector target = (2.0 * lambda / kii) * c;
      Vector e = Vector::Zero(C);
      e(labels[i]) = 1.0;
      Vector anew = e - project_simplex(e - target);
      Vector delta = anew - ai;
      if (delta.cwiseAbs().maxCoeff() == 0.0) continue;
      alpha.row(i) = anew.transpose();
      S += k.col(i) * delta.transpose();
    }
    primal_dual(primal, dual);
    if (primal - dual <= tol * std::max(1.0, std::abs(primal))) {
      ++out.sweeps;
      break;
    }
  }
  out.dual = alpha;
  out.coefficients = alpha / (2.0 * lambda);
  out.value = primal;
  out.gap = primal - dual;
  return out;
}

Vector power_function_rows(const KernelSpec& kernel, const Points& X, double lambda, const Points& xs) {
  check_lambda(lambda);
  require(xs.cols() == X.cols(), ErrorCode::dimension_mismatch, "test points differ in dimension from X");
  GramSolver solver(gram(kernel, X), lambda);
  Vector out(xs.rows());
  for (Eigen::Index m = 0; m < xs.rows(); ++m) {
    Points x = xs.row(m);
    Gram kxx = KernelAt(kernel, x).gram(false);
    Gram kx = cross_gram(kernel, x, X);
    double s;
    if (kx.scalar) {
      Points kt = kx.values.transpose();
      double quad = (kt.array() * solver.solve(kt).array()).sum();
      s = static_cast<double>(trace_dim(kernel)) * (kxx.values(0, 0) - quad);
    } else {
      // Tr[K(x,X) A⁻¹ K(X,x)] column by column of K(X,x).
      const Eigen::Index d = kx.block;
      Matrix kt = kx.values.transpose();
      double quad = 0;
      for (Eigen::Index c = 0; c < d; ++c) {
        Points col = unflatten(kt.col(c), X.rows(), d);
        quad += (col.array() * solver.solve(col).array()).sum();
      }
      s = kxx.values.trace() - quad;
    }
    out(m) = std::max(0.0, s);
  }
  return out;
}

double power_function(const KernelSpec& kernel, const Points& X, double lambda, const Eigen::Ref<const Vector>& x) {
  Points xs = x.transpose();
  return power_function_rows(kernel, X, lambda, xs)(0);
}

ErrorBoundReport error_bound_check(const KernelSpec& kernel, const Points& X, double lambda,
                                   const RidgeModel& f_dagger, const Points& test_points, double slack) {
  check_lambda(lambda);
  Points Y = f_dagger.evaluate(X);
  // Solved directly so that λ = r = 0 (exact interpolation) is allowed.
  GramSolver solver(gram(kernel, X), lambda);
  RidgeModel f{kernel, X, solver.solve(Y), lambda};
  ErrorBoundReport rep;
  rep.f_norm = std::sqrt(f_dagger.rkhs_norm_sq());
  rep.sigma_sq = power_function_rows(kernel, X, lambda, test_points);
  Points diff = f_dagger.evaluate(test_points) - f.evaluate(test_points);
  rep.error = diff.rowwise().norm();
  const double lam_eff = lambda + kernel.nugget();
  const double dim_y = static_cast<double>(Y.cols());
  rep.bound.resize(test_points.rows());
  for (Eigen::Index m = 0; m < test_points.rows(); ++m) {
    double s2 = rep.sigma_sq(m) + (lam_eff > 0 ? lam_eff * dim_y : 0.0);
    rep.bound(m) = std::sqrt(s2) * rep.f_norm;
    if (rep.error(m) > rep.bound(m) + slack * std::max(1.0, rep.bound(m))) rep.pass = false;
  }
  return rep;
}

Vector GpSample::operator()(const Eigen::Ref<const Vector>& x) const {
  Vector out = alpha * map.apply(x);
  if (mean) {
    Points xr = x.transpose();
    out += mean->evaluate(xr).row(0).transpose();
  }
  return out;
}

GpSample sample_gp(const FeatureMap& fm, const std::optional<RidgeModel>& mean, Eigen::Index output_dim,
                   std::uint64_t seed) {
  if (mean) {
    if (output_dim == 0) output_dim = mean->coefficients.cols();
    require(mean->coefficients.cols() == output_dim, ErrorCode::dimension_mismatch,
            "GP mean output dimension differs from the requested one");
  }
  require(output_dim > 0, ErrorCode::invalid_argument, "GP output dimension must be positive");
  Rng rng(seed);
  Matrix alpha(output_dim, fm.feature_dim());
  for (Eigen::Index i = 0; i < alpha.rows(); ++i)
    for (Eigen::Index j = 0; j < alpha.cols(); ++j) alpha(i, j) = rng.normal();
  return GpSample{fm, std::move(alpha), mean};
}

}  // namespace mechreg
