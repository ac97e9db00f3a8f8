#pragma once

#include "mechreg/feature_map.hpp"
#include "mechreg/hamiltonian.hpp"
#include "mechreg/regression.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace mechreg {

struct ShootingHyper {
  double nu = 1.0;
  double lambda = 0.0;
  /// λ of the final readout refit; defaults to `lambda`.
  std::optional<double> refit_lambda;
  double h = 0.2;
  std::size_t steps = 5;
  LossSpec loss;
  IntegratorOptions integrator;
  OptimizerConfig optimizer;
  double hinge_tol = 1e-8;
};

struct ShootingModel {
  KernelSpec gamma;
  KernelSpec k_out;
  Points X;
  Points Y;
  Points p0;
  Trajectory trajectory;
  RidgeModel readout;
  ShootingHyper hyper;
  OptimizeResult optimizer;
  double objective = 0.0;
  /// ‖ν p(1) + ∂_{q(1)}ℓ‖_∞ at the returned p0.
  double boundary_residual = 0.0;
};

/// End loss ℓ(q, Y) built from the readout kernel: ridge loss for squared,
/// the inner hinge readout value for hinge (Y holds class indices).
EndLoss make_end_loss(const KernelSpec& k_out, const Points& Y, double lambda, const LossSpec& loss,
                      double hinge_tol = 1e-8);

/// V(p0) = (ν/2) p0ᵀK_r(X,X)p0 + ℓ(q(1), Y) and its adjoint gradient.
double shooting_objective(const KernelSpec& gamma, const Points& X, const Points& p0, const ShootingHyper& hyper,
                          const EndLoss& end_loss, Points* grad = nullptr);

/// Geodesic shooting from p0 = 0 (or `init`).
ShootingModel shoot(const KernelSpec& gamma, const KernelSpec& k_out, const Points& X, const Points& Y,
                    const ShootingHyper& hyper, const Points* init = nullptr);

/// Builds the model for a fixed p0 without optimizing.
ShootingModel assemble_model(const KernelSpec& gamma, const KernelSpec& k_out, const Points& X, const Points& Y,
                             const ShootingHyper& hyper, const Points& p0);

/// ż = K(z, q(t))p(t) along the stored path, up to time t (rounded to the
/// step grid). Test points do not act back on the landmarks.
Points transport(const ShootingModel& model, const Points& x_test, double t = 1.0);

/// readout(transport(x)).
Points predict(const ShootingModel& model, const Points& x_test);

struct MomentumRow {
  double p0_norm = 0.0;
  double p1_norm = 0.0;
  double loss_grad_norm = 0.0;
  bool flagged = false;
};

/// Per-point momentum norms. Points whose loss gradient is below `tol`
/// while their momentum is not are flagged.
std::vector<MomentumRow> momentum_report(const ShootingModel& model, double tol = 1e-4);

/// Displacement ‖q_i(1) − X_i‖ averaged over i.
double mean_displacement(const ShootingModel& model);

/// Euler-Maruyama path of dz = Σ ψᵀ(z)e_i dB_i over t ∈ [0,1]: rows z_0 … z_steps.
Points sample_residual_gp_flow(const FeatureMap& fm, const Eigen::Ref<const Vector>& x0, std::size_t steps,
                               std::uint64_t seed);

}  // namespace mechreg
