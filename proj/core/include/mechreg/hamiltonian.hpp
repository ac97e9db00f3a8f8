#pragma once

#include "mechreg/kernel.hpp"
#include "mechreg/kernel_ops.hpp"
#include "mechreg/optimize.hpp"

#include <functional>
#include <string>
#include <vector>

namespace mechreg {

struct PhaseState {
  Points q;
  Points p;
  double t = 0.0;
};

/// `symmetric` is the generalized (Störmer-Verlet) leapfrog for
/// H = ½pᵀK_r(q)p: implicit half kick, implicit trapezoidal drift, explicit
/// half kick. It is symplectic, time-reversible and second order.
/// `explicit_kick` evaluates both kicks and the drift explicitly; it is cheaper
/// but neither reversible nor second order for a position-dependent K.
enum class LeapfrogScheme { symmetric, explicit_kick };

LeapfrogScheme parse_leapfrog_scheme(const std::string& name);
std::string to_string(LeapfrogScheme s);

struct IntegratorOptions {
  LeapfrogScheme scheme = LeapfrogScheme::symmetric;
  double fixed_point_tol = 1e-15;
  int max_fixed_point_iters = 500;
};

struct Trajectory {
  KernelSpec kernel;
  double h = 0.0;
  IntegratorOptions options;
  std::vector<PhaseState> states;
  /// Momentum after the first half kick of each step (size steps).
  std::vector<Points> half_momenta;

  std::size_t steps() const { return half_momenta.size(); }
  const PhaseState& initial() const { return states.front(); }
  const PhaseState& terminal() const { return states.back(); }
};

/// H = ½ pᵀ K_r(q,q) p.
double energy(const KernelSpec& kernel, const PhaseState& state);

/// One step of size h (negative h integrates backwards).
PhaseState leapfrog_step(const KernelSpec& kernel, const PhaseState& state, double h,
                         const IntegratorOptions& options = {}, Points* half_momentum = nullptr);

Trajectory integrate(const KernelSpec& kernel, const PhaseState& state0, double h, std::size_t steps,
                     const IntegratorOptions& options = {});

/// H at every stored state.
std::vector<double> energies(const Trajectory& traj);
/// max_t |H(t) − H(0)| / |H(0)|.
double relative_energy_drift(const Trajectory& traj);

struct AdjointGradient {
  Points p0;
  Points q0;
};

/// Reverse sweep: pulls cotangents (∂/∂q(1), ∂/∂p(1)) back to the initial
/// state. An empty grad_p1 means zero.
AdjointGradient adjoint(const Trajectory& traj, const Points& grad_q1, const Points& grad_p1 = Points());

/// (∂q(1)/∂p(0))ᵀ·terminal_grad, integrating from (X, p0).
Points adjoint_grad_p0(const KernelSpec& kernel, const Points& X, const Points& p0, double h, std::size_t steps,
                       const Points& terminal_grad, const IntegratorOptions& options = {});

/// Same, reusing a stored trajectory; throws when shapes do not match.
Points adjoint_grad_p0(const Trajectory& traj, const Points& terminal_grad);

/// Value and optional gradient of a loss of terminal positions.
using EndLoss = std::function<double(const Points& q, Points* grad)>;

/// (ν/2)·L·Σ_s (q^{s+1}−q^s)ᵀK_r(q^s)⁻¹(q^{s+1}−q^s) + end_loss(q^L) for
/// qs = (q^0 … q^L) and Δt = 1/L. The gradient is filled for every entry
/// (index 0 included, callers keep it fixed).
double trajectory_objective(const KernelSpec& kernel, const std::vector<Points>& qs, double nu,
                            const EndLoss& end_loss, std::vector<Points>* grad = nullptr);

/// E_s = ½ (Δq/Δt)ᵀ K_r(q^s)⁻¹ (Δq/Δt) per interval.
std::vector<double> layer_energies(const KernelSpec& kernel, const std::vector<Points>& qs);

/// v_s(x) = K(x,q^s)K_r(q^s,q^s)⁻¹(q^{s+1}−q^s): displacement field of layer s.
Points layer_velocity(const KernelSpec& kernel, const std::vector<Points>& qs, std::size_t s, const Points& x);

struct TrajectoryResult {
  std::vector<Points> qs;
  double value = 0.0;
  OptimizeResult optimizer;
  std::vector<double> layer_energy;
};

/// Minimizes trajectory_objective over q^1 … q^L with q^0 = X. Starts from
/// the constant path unless `init` is given.
TrajectoryResult minimize_trajectory(const KernelSpec& kernel, const Points& X, std::size_t L, double nu,
                                     const EndLoss& end_loss, const OptimizerConfig& config,
                                     const std::vector<Points>* init = nullptr);

}  // namespace mechreg
