#include "mechreg/shooting.hpp"

#include <cmath>

namespace mechreg {

namespace {

void check_training(const KernelSpec& gamma, const KernelSpec& k_out, const Points& X, const Points& Y,
                    const ShootingHyper& hyper) {
  require(X.rows() >= 1, ErrorCode::invalid_argument, "shooting needs at least one point");
  require(Y.rows() == X.rows(), ErrorCode::dimension_mismatch, "X and Y must have the same number of rows");
  require_finite(X, "X");
  require_finite(Y, "Y");
  require(std::isfinite(hyper.nu) && hyper.nu >= 0, ErrorCode::invalid_argument, "nu must be nonnegative");
  require(std::isfinite(hyper.lambda) && hyper.lambda >= 0, ErrorCode::invalid_argument,
          "lambda must be nonnegative");
  require(std::isfinite(hyper.h) && hyper.h > 0, ErrorCode::invalid_argument, "h must be positive");
  require(hyper.steps >= 1, ErrorCode::invalid_argument, "steps must be at least 1");
  gamma.require_differentiable("shoot (deformation kernel)");
  k_out.require_differentiable("shoot (readout kernel)");
  if (hyper.loss.kind == LossSpec::Kind::squared)
    require(hyper.lambda + k_out.nugget() > 0, ErrorCode::invalid_argument,
            "squared end loss needs lambda + readout nugget > 0");
  else
    require(hyper.lambda > 0, ErrorCode::invalid_argument, "hinge end loss needs lambda > 0");
}

RidgeModel fit_readout(const KernelSpec& k_out, const Points& q1, const Points& Y, const ShootingHyper& hyper) {
  const double lambda = hyper.refit_lambda.value_or(hyper.lambda);
  if (hyper.loss.kind == LossSpec::Kind::squared) return fit_ridge(k_out, q1, Y, lambda);
  auto labels = labels_from_column(Y, hyper.loss.num_classes);
  HingeReadout h = fit_hinge_readout(gram(k_out, q1), labels, hyper.loss.num_classes, lambda, hyper.hinge_tol);
  return RidgeModel{k_out, q1, h.coefficients, lambda};
}

}  // namespace

EndLoss make_end_loss(const KernelSpec& k_out, const Points& Y, double lambda, const LossSpec& loss,
                      double hinge_tol) {
  if (loss.kind == LossSpec::Kind::squared) {
    return [k_out, Y, lambda](const Points& q, Points* grad) {
      return ridge_loss_value_grad(k_out, q, Y, lambda, grad);
    };
  }
  auto labels = labels_from_column(Y, loss.num_classes);
  const int classes = loss.num_classes;
  return [k_out, labels, classes, lambda, hinge_tol](const Points& q, Points* grad) {
    KernelAt K(k_out, q, grad != nullptr);
    HingeReadout h = fit_hinge_readout(K.gram(true), labels, classes, lambda, hinge_tol);
    // Envelope of the dual max: ∂_q = −(1/4λ) ∂_q tr(αᵀKα) = −λ ∂_q tr(ZᵀKZ).
    if (grad) *grad = -lambda * K.pair_grad(h.coefficients, h.coefficients);
    return h.value;
  };
}

double shooting_objective(const KernelSpec& gamma, const Points& X, const Points& p0, const ShootingHyper& hyper,
                          const EndLoss& end_loss, Points* grad) {
  require(p0.rows() == X.rows() && p0.cols() == X.cols(), ErrorCode::dimension_mismatch,
          "p0 must have the shape of X");
  Trajectory traj = integrate(gamma, PhaseState{X, p0, 0.0}, hyper.h, hyper.steps, hyper.integrator);
  Points Kp = KernelAt(gamma, X, false).apply(p0);
  Points gl;
  const double loss = end_loss(traj.terminal().q, grad ? &gl : nullptr);
  const double value = 0.5 * hyper.nu * (p0.array() * Kp.array()).sum() + loss;
  if (grad) *grad = hyper.nu * Kp + adjoint(traj, gl).p0;
  return value;
}

ShootingModel assemble_model(const KernelSpec& gamma, const KernelSpec& k_out, const Points& X, const Points& Y,
                             const ShootingHyper& hyper, const Points& p0) {
  check_training(gamma, k_out, X, Y, hyper);
  Trajectory traj = integrate(gamma, PhaseState{X, p0, 0.0}, hyper.h, hyper.steps, hyper.integrator);
  RidgeModel readout = fit_readout(k_out, traj.terminal().q, Y, hyper);
  ShootingModel m{gamma, k_out, X, Y, p0, std::move(traj), std::move(readout), hyper, OptimizeResult{}, 0.0, 0.0};
  const Points& q1 = m.trajectory.terminal().q;
  EndLoss loss = make_end_loss(k_out, Y, hyper.lambda, hyper.loss, hyper.hinge_tol);
  Points gl;
  const double l = loss(q1, &gl);
  m.objective = 0.5 * hyper.nu * (p0.array() * KernelAt(gamma, X, false).apply(p0).array()).sum() + l;
  const Points res = hyper.nu * m.trajectory.terminal().p + gl;
  m.boundary_residual = res.size() ? res.cwiseAbs().maxCoeff() : 0.0;
  return m;
}

ShootingModel shoot(const KernelSpec& gamma, const KernelSpec& k_out, const Points& X, const Points& Y,
                    const ShootingHyper& hyper, const Points* init) {
  check_training(gamma, k_out, X, Y, hyper);
  const Eigen::Index n = X.rows(), d = X.cols();
  Points p_init = Points::Zero(n, d);
  if (init) {
    require(init->rows() == n && init->cols() == d, ErrorCode::dimension_mismatch,
            "initial momentum must have the shape of X");
    p_init = *init;
  }
  EndLoss loss = make_end_loss(k_out, Y, hyper.lambda, hyper.loss, hyper.hinge_tol);
  Objective f = [&](const Vector& x, Vector* g) {
    Points p0 = unflatten(x, n, d);
    Points gp;
    double v = shooting_objective(gamma, X, p0, hyper, loss, g ? &gp : nullptr);
    if (g) *g = flatten(gp);
    return v;
  };
  OptimizeResult opt = minimize(f, flatten(p_init), hyper.optimizer);
  ShootingModel m = assemble_model(gamma, k_out, X, Y, hyper, unflatten(opt.x, n, d));
  m.optimizer = std::move(opt);
  return m;
}

Points transport(const ShootingModel& model, const Points& x_test, double t) {
  const Trajectory& traj = model.trajectory;
  require(x_test.cols() == model.X.cols(), ErrorCode::dimension_mismatch,
          "test points must have the dimension of the training inputs");
  require_finite(x_test, "test points");
  require(std::isfinite(t) && t >= 0, ErrorCode::invalid_argument, "transport time must be nonnegative");
  const double steps_f = std::round(t / traj.h);
  require(steps_f <= static_cast<double>(traj.steps()) + 1e-9, ErrorCode::invalid_argument,
          "transport time lies beyond the stored trajectory");
  const auto steps = static_cast<std::size_t>(steps_f);
  const double h = traj.h, c = 0.5 * h;
  const IntegratorOptions& opt = traj.options;
  Points z = x_test;
  for (std::size_t s = 0; s < steps; ++s) {
    const Points& q = traj.states[s].q;
    const Points& qn = traj.states[s + 1].q;
    const Points& ph = traj.half_momenta[s];
    const Points v0 = cross_apply(traj.kernel, z, q, ph);
    if (opt.scheme == LeapfrogScheme::explicit_kick) {
      z += h * v0;
      continue;
    }
    // Same trapezoidal drift as the landmarks, with (q, p) frozen.
    Points zn = z + h * v0;
    double prev = INFINITY;
    for (int it = 0;; ++it) {
      Points next = z + c * (v0 + cross_apply(traj.kernel, zn, qn, ph));
      const double diff = (next - zn).cwiseAbs().maxCoeff();
      const double scale = std::max(1.0, next.cwiseAbs().maxCoeff());
      zn = std::move(next);
      if (diff <= opt.fixed_point_tol * scale || (diff >= prev && diff <= 1e-12 * scale)) break;
      if (it >= opt.max_fixed_point_iters) {
        if (diff <= 1e-9 * scale) break;
        throw Error(ErrorCode::divergence, "transport: fixed-point iteration did not converge");
      }
      prev = diff;
    }
    if (!zn.allFinite()) throw Error(ErrorCode::non_finite, "transport produced non-finite values");
    z = std::move(zn);
  }
  return z;
}

Points predict(const ShootingModel& model, const Points& x_test) {
  return model.readout.predict(transport(model, x_test));
}

std::vector<MomentumRow> momentum_report(const ShootingModel& model, double tol) {
  const Points& q1 = model.trajectory.terminal().q;
  EndLoss loss = make_end_loss(model.k_out, model.Y, model.hyper.lambda, model.hyper.loss, model.hyper.hinge_tol);
  Points gl;
  loss(q1, &gl);
  std::vector<MomentumRow> rows(static_cast<std::size_t>(q1.rows()));
  for (Eigen::Index i = 0; i < q1.rows(); ++i) {
    MomentumRow& r = rows[static_cast<std::size_t>(i)];
    r.p0_norm = model.p0.row(i).norm();
    r.p1_norm = model.trajectory.terminal().p.row(i).norm();
    r.loss_grad_norm = gl.row(i).norm();
    r.flagged = r.loss_grad_norm < tol && std::max(r.p0_norm, r.p1_norm) >= tol;
  }
  return rows;
}

double mean_displacement(const ShootingModel& model) {
  const Points d = model.trajectory.terminal().q - model.X;
  return d.rowwise().norm().mean();
}

Points sample_residual_gp_flow(const FeatureMap& fm, const Eigen::Ref<const Vector>& x0, std::size_t steps,
                               std::uint64_t seed) {
  require(steps >= 1, ErrorCode::invalid_argument, "flow needs at least one step");
  require(x0.size() == fm.input_dim(), ErrorCode::dimension_mismatch,
          "feature map input dimension must match the start point");
  require_finite(x0, "start point");
  const Eigen::Index d = x0.size(), F = fm.feature_dim();
  const double sdt = std::sqrt(1.0 / static_cast<double>(steps));
  Rng rng(seed);
  Points path(static_cast<Eigen::Index>(steps) + 1, d);
  Vector z = x0;
  path.row(0) = z.transpose();
  Matrix dW(d, F);
  for (std::size_t k = 1; k <= steps; ++k) {
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < F; ++j) dW(i, j) = sdt * rng.normal();
    z += fm.adjoint_apply(dW, z);
    path.row(static_cast<Eigen::Index>(k)) = z.transpose();
  }
  return path;
}

}  // namespace mechreg
