#include "mechreg/hamiltonian.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/QR>

namespace mechreg {

LeapfrogScheme parse_leapfrog_scheme(const std::string& name) {
  if (name == "symmetric") return LeapfrogScheme::symmetric;
  if (name == "explicit" || name == "explicit_kick") return LeapfrogScheme::explicit_kick;
  throw Error(ErrorCode::config, "unknown leapfrog scheme '" + name + "' (expected symmetric or explicit)");
}

std::string to_string(LeapfrogScheme s) { return s == LeapfrogScheme::symmetric ? "symmetric" : "explicit"; }

namespace {

double sup(const Points& p) { return p.size() ? p.cwiseAbs().maxCoeff() : 0.0; }

// Solves x = T(x) by Anderson-accelerated iteration (memory 5). Stops at the
// tolerance or once the update stops shrinking at round-off level.
template <class Map>
Points fixed_point(Map&& T, Points x, const IntegratorOptions& opt, const char* what) {
  constexpr int memory = 5;
  const Eigen::Index n = x.size();
  std::vector<Vector> dF, dG;
  Vector f_prev, g_prev;
  double prev = INFINITY, first = INFINITY;
  int growing = 0;
  for (int it = 0; it < opt.max_fixed_point_iters; ++it) {
    Points next = T(x);
    if (!next.allFinite()) throw Error(ErrorCode::non_finite, std::string(what) + ": non-finite iterate");
    Eigen::Map<const Vector> g(next.data(), n), xv(x.data(), n);
    Vector f = g - xv;
    const double diff = f.cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, sup(next));
    if (diff <= opt.fixed_point_tol * scale) return next;
    if (diff >= prev && diff <= 1e-12 * scale) return next;
    if (it == 0) first = diff;
    growing = diff > prev ? growing + 1 : 0;
    // A map that keeps expanding will not come back; give up early.
    if (growing >= 5 || diff > 1e3 * std::max(first, 1e-300))
      throw Error(ErrorCode::divergence,
                  std::string(what) + ": fixed-point iteration diverges; reduce the step size h");
    prev = diff;
    if (it > 0) {
      dF.push_back(f - f_prev);
      dG.push_back(g - g_prev);
      if (static_cast<int>(dF.size()) > memory) {
        dF.erase(dF.begin());
        dG.erase(dG.begin());
      }
    }
    f_prev = f;
    g_prev = g;
    Vector xn = g;
    if (!dF.empty()) {
      Matrix A(n, static_cast<Eigen::Index>(dF.size()));
      for (std::size_t j = 0; j < dF.size(); ++j) A.col(static_cast<Eigen::Index>(j)) = dF[j];
      Vector gamma = A.colPivHouseholderQr().solve(f);
      for (std::size_t j = 0; j < dG.size(); ++j) xn -= gamma(static_cast<Eigen::Index>(j)) * dG[j];
    }
    Eigen::Map<Vector>(x.data(), n) = xn;
  }
  if (prev <= 1e-9 * std::max(1.0, sup(x))) return T(x);
  throw Error(ErrorCode::divergence,
              std::string(what) + ": fixed-point iteration did not converge; reduce the step size h");
}

// F(q,p) = ½ ∂_q(pᵀK(q)p)
Points force(const KernelAt& K, const Points& p) { return 0.5 * K.pair_grad(p, p); }

void check_state(const PhaseState& s) {
  require(s.q.rows() == s.p.rows() && s.q.cols() == s.p.cols(), ErrorCode::dimension_mismatch,
          "q and p must have the same shape");
  require(s.q.rows() >= 1, ErrorCode::invalid_argument, "phase state needs at least one point");
  require_finite(s.q, "positions");
  require_finite(s.p, "momenta");
}

}  // namespace

double energy(const KernelSpec& kernel, const PhaseState& state) {
  check_state(state);
  KernelAt K(kernel, state.q, false);
  return 0.5 * (state.p.array() * K.apply(state.p).array()).sum();
}

PhaseState leapfrog_step(const KernelSpec& kernel, const PhaseState& s, double h, const IntegratorOptions& opt,
                         Points* half_momentum) {
  check_state(s);
  require(std::isfinite(h) && h != 0.0, ErrorCode::invalid_argument, "step size must be finite and nonzero");
  kernel.require_differentiable("leapfrog_step");
  const double c = 0.5 * h;
  KernelAt K0(kernel, s.q);
  PhaseState out;
  out.t = s.t + h;
  Points ph;
  if (opt.scheme == LeapfrogScheme::symmetric) {
    ph = fixed_point([&](const Points& x) -> Points { return s.p - c * force(K0, x); }, s.p, opt, "half kick");
    const Points v0 = K0.apply(ph);
    out.q = fixed_point(
        [&](const Points& x) -> Points { return s.q + c * (v0 + KernelAt(kernel, x, false).apply(ph)); },
        Points(s.q + h * v0), opt, "drift");
  } else {
    ph = s.p - c * force(K0, s.p);
    out.q = s.q + h * K0.apply(ph);
  }
  KernelAt K1(kernel, out.q);
  out.p = ph - c * force(K1, ph);
  if (!out.q.allFinite() || !out.p.allFinite())
    throw Error(ErrorCode::non_finite, "leapfrog step produced non-finite values");
  if (half_momentum) *half_momentum = std::move(ph);
  return out;
}

Trajectory integrate(const KernelSpec& kernel, const PhaseState& state0, double h, std::size_t steps,
                     const IntegratorOptions& options) {
  check_state(state0);
  require(std::isfinite(h) && h != 0.0, ErrorCode::invalid_argument, "step size must be finite and nonzero");
  Trajectory traj{kernel, h, options, {}, {}};
  traj.states.reserve(steps + 1);
  traj.half_momenta.reserve(steps);
  traj.states.push_back(state0);
  for (std::size_t k = 0; k < steps; ++k) {
    Points ph;
    PhaseState next = leapfrog_step(kernel, traj.states.back(), h, options, &ph);
    next.t = state0.t + static_cast<double>(k + 1) * h;
    traj.states.push_back(std::move(next));
    traj.half_momenta.push_back(std::move(ph));
  }
  return traj;
}

std::vector<double> energies(const Trajectory& traj) {
  std::vector<double> e;
  e.reserve(traj.states.size());
  for (const auto& s : traj.states) e.push_back(energy(traj.kernel, s));
  return e;
}

double relative_energy_drift(const Trajectory& traj) {
  auto e = energies(traj);
  double worst = 0;
  for (double v : e) worst = std::max(worst, std::abs(v - e.front()));
  return e.front() != 0 ? worst / std::abs(e.front()) : worst;
}

AdjointGradient adjoint(const Trajectory& traj, const Points& grad_q1, const Points& grad_p1) {
  require(!traj.states.empty() && traj.states.size() == traj.half_momenta.size() + 1, ErrorCode::invalid_argument,
          "trajectory is missing stored half-step momenta");
  const Points& q1 = traj.terminal().q;
  require(grad_q1.rows() == q1.rows() && grad_q1.cols() == q1.cols(), ErrorCode::dimension_mismatch,
          "terminal gradient shape differs from the trajectory positions");
  require(grad_p1.size() == 0 || (grad_p1.rows() == q1.rows() && grad_p1.cols() == q1.cols()),
          ErrorCode::dimension_mismatch, "terminal momentum gradient has the wrong shape");
  require_finite(grad_q1, "terminal gradient");
  const KernelSpec& kernel = traj.kernel;
  const IntegratorOptions& opt = traj.options;
  const double h = traj.h, c = 0.5 * h;

  Points aq = grad_q1;
  Points ap = grad_p1.size() ? grad_p1 : Points::Zero(q1.rows(), q1.cols());
  for (std::size_t s = traj.steps(); s-- > 0;) {
    const Points& q = traj.states[s].q;
    const Points& p = traj.states[s].p;
    const Points& qn = traj.states[s + 1].q;
    const Points& ph = traj.half_momenta[s];
    KernelAt K0(kernel, q), K1(kernel, qn);
    // p1 = ph − c F(q1, ph)
    Points aph = ap - c * K1.pair_dir(ph, ap);
    Points aqn = aq - c * 0.5 * K1.pair_hess(ph, ph, ap);
    if (opt.scheme == LeapfrogScheme::symmetric) {
      // q1 = q + c [V(q,ph) + V(q1,ph)]
      Points mu = fixed_point([&](const Points& m) -> Points { return aqn + c * K1.pair_grad(m, ph); }, aqn, opt,
                              "adjoint drift");
      aq = mu + c * K0.pair_grad(mu, ph);
      aph += c * (K0.apply(mu) + K1.apply(mu));
      // ph = p − c F(q, ph)
      Points nu = fixed_point([&](const Points& v) -> Points { return aph - c * K0.pair_dir(ph, v); }, aph, opt,
                              "adjoint half kick");
      ap = nu;
      aq -= c * 0.5 * K0.pair_hess(ph, ph, nu);
    } else {
      // q1 = q + h V(q, ph);  ph = p − c F(q, p)
      aq = aqn + h * K0.pair_grad(aqn, ph);
      aph += h * K0.apply(aqn);
      ap = aph - c * K0.pair_dir(p, aph);
      aq -= c * 0.5 * K0.pair_hess(p, p, aph);
    }
  }
  return {ap, aq};
}

Points adjoint_grad_p0(const Trajectory& traj, const Points& terminal_grad) {
  return adjoint(traj, terminal_grad).p0;
}

Points adjoint_grad_p0(const KernelSpec& kernel, const Points& X, const Points& p0, double h, std::size_t steps,
                       const Points& terminal_grad, const IntegratorOptions& options) {
  Trajectory traj = integrate(kernel, PhaseState{X, p0, 0.0}, h, steps, options);
  return adjoint_grad_p0(traj, terminal_grad);
}

namespace {

void check_path(const std::vector<Points>& qs) {
  require(qs.size() >= 2, ErrorCode::invalid_argument, "trajectory needs at least two positions (L >= 1)");
  for (const auto& q : qs) {
    require(q.rows() == qs[0].rows() && q.cols() == qs[0].cols(), ErrorCode::dimension_mismatch,
            "all trajectory positions must have the same shape");
    require_finite(q, "trajectory positions");
  }
}

}  // namespace

double trajectory_objective(const KernelSpec& kernel, const std::vector<Points>& qs, double nu,
                            const EndLoss& end_loss, std::vector<Points>* grad) {
  check_path(qs);
  require(std::isfinite(nu) && nu >= 0, ErrorCode::invalid_argument, "nu must be nonnegative");
  const std::size_t L = qs.size() - 1;
  const double a = 0.5 * nu * static_cast<double>(L);
  if (grad) grad->assign(qs.size(), Points::Zero(qs[0].rows(), qs[0].cols()));
  double value = 0;
  for (std::size_t s = 0; s < L; ++s) {
    Points dq = qs[s + 1] - qs[s];
    KernelAt K(kernel, qs[s], grad != nullptr);
    GramSolver solver(K.gram(true), 0.0);
    Points P = solver.solve(dq);
    value += a * (dq.array() * P.array()).sum();
    if (grad) {
      (*grad)[s + 1] += 2.0 * a * P;
      (*grad)[s] -= 2.0 * a * P + a * K.pair_grad(P, P);
    }
  }
  if (end_loss) {
    Points g;
    value += end_loss(qs[L], grad ? &g : nullptr);
    if (grad) (*grad)[L] += g;
  }
  return value;
}

std::vector<double> layer_energies(const KernelSpec& kernel, const std::vector<Points>& qs) {
  check_path(qs);
  const double L = static_cast<double>(qs.size() - 1);
  std::vector<double> e;
  for (std::size_t s = 0; s + 1 < qs.size(); ++s) {
    Points dq = qs[s + 1] - qs[s];
    GramSolver solver(gram(kernel, qs[s]), 0.0);
    e.push_back(0.5 * L * L * (dq.array() * solver.solve(dq).array()).sum());
  }
  return e;
}

Points layer_velocity(const KernelSpec& kernel, const std::vector<Points>& qs, std::size_t s, const Points& x) {
  check_path(qs);
  require(s + 1 < qs.size(), ErrorCode::invalid_argument, "layer index out of range");
  GramSolver solver(gram(kernel, qs[s]), 0.0);
  return cross_apply(kernel, x, qs[s], solver.solve(qs[s + 1] - qs[s]));
}

TrajectoryResult minimize_trajectory(const KernelSpec& kernel, const Points& X, std::size_t L, double nu,
                                     const EndLoss& end_loss, const OptimizerConfig& config,
                                     const std::vector<Points>* init) {
  require(L >= 1, ErrorCode::invalid_argument, "L must be at least 1");
  require_finite(X, "X");
  const Eigen::Index n = X.rows(), d = X.cols(), block = n * d;
  std::vector<Points> qs(L + 1, X);
  if (init) {
    require(init->size() == L + 1, ErrorCode::dimension_mismatch, "initial trajectory has the wrong length");
    qs = *init;
    qs[0] = X;
  }
  Vector x0(static_cast<Eigen::Index>(L) * block);
  for (std::size_t s = 1; s <= L; ++s) x0.segment((s - 1) * block, block) = flatten(qs[s]);
  auto unpack = [&](const Vector& x) {
    std::vector<Points> path(L + 1);
    path[0] = X;
    for (std::size_t s = 1; s <= L; ++s) path[s] = unflatten(x.segment((s - 1) * block, block), n, d);
    return path;
  };
  Objective f = [&](const Vector& x, Vector* g) {
    auto path = unpack(x);
    std::vector<Points> grads;
    double v = trajectory_objective(kernel, path, nu, end_loss, g ? &grads : nullptr);
    if (g)
      for (std::size_t s = 1; s <= L; ++s) g->segment((s - 1) * block, block) = flatten(grads[s]);
    return v;
  };
  TrajectoryResult res;
  res.optimizer = minimize(f, x0, config);
  res.qs = unpack(res.optimizer.x);
  res.value = res.optimizer.value;
  res.layer_energy = layer_energies(kernel, res.qs);
  return res;
}

}  // namespace mechreg
