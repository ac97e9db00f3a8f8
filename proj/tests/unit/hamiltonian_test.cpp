#include "test_util.hpp"

#include <mechreg/hamiltonian.hpp>
#include <mechreg/regression.hpp>

#include <gtest/gtest.h>

using namespace mechreg;
using testutil::fd_gradient;
using testutil::random_points;
using testutil::rel_err;

namespace {

PhaseState random_state(std::mt19937_64& gen, Eigen::Index n, Eigen::Index d, double pscale = 0.5) {
  return {random_points(gen, n, d), random_points(gen, n, d, pscale), 0.0};
}

const IntegratorOptions kExplicit{LeapfrogScheme::explicit_kick, 1e-15, 500};

}  // namespace

TEST(Energy, Examples) {
  auto k = KernelSpec::gaussian(1.0, 0.1);
  std::mt19937_64 gen(41);
  Points q = random_points(gen, 3, 2);
  EXPECT_EQ(energy(k, {q, Points::Zero(3, 2), 0.0}), 0.0);
  Points q1 = Points::Zero(1, 1), p1 = Points::Constant(1, 1, 2.0);
  EXPECT_NEAR(energy(k, {q1, p1, 0.0}), 2.2, 1e-15);
  Points p = random_points(gen, 3, 2);
  Matrix G = gram(k.with_output_dim(2), q).dense();
  Vector vp = flatten(p);
  EXPECT_NEAR(energy(k, {q, p, 0.0}), 0.5 * vp.dot(G * vp), 1e-13);
}

TEST(Leapfrog, ZeroMomentumIsStationary) {
  auto k = KernelSpec::gaussian(1.0, 0.1);
  std::mt19937_64 gen(42);
  Points q = random_points(gen, 4, 2);
  for (auto opt : {IntegratorOptions{}, kExplicit}) {
    PhaseState s = leapfrog_step(k, {q, Points::Zero(4, 2), 0.0}, 0.2, opt);
    EXPECT_EQ(s.q, q);
    EXPECT_EQ(s.p.cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Leapfrog, FreeParticle) {
  const double r = 0.1, h = 0.2;
  auto k = KernelSpec::gaussian(1.0, r);
  Points q = Points::Constant(1, 2, 0.5), p(1, 2);
  p << 1.0, -2.0;
  for (auto opt : {IntegratorOptions{}, kExplicit}) {
    Trajectory tr = integrate(k, {q, p, 0.0}, h, 5, opt);
    EXPECT_LT((tr.terminal().q - (q + 5 * h * (1 + r) * p)).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT((tr.terminal().p - p).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(Leapfrog, TimeReversal) {
  std::mt19937_64 gen(43);
  for (const auto& k : {KernelSpec::gaussian(1.0, 0.1), KernelSpec::activation(Activation::tanh(), 0.1)}) {
    for (int t = 0; t < 5; ++t) {
      PhaseState s0 = random_state(gen, 6, 2);
      PhaseState s1 = leapfrog_step(k, s0, 0.2);
      PhaseState back = leapfrog_step(k, s1, -0.2);
      EXPECT_LT((back.q - s0.q).cwiseAbs().maxCoeff(), 1e-10);
      EXPECT_LT((back.p - s0.p).cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

TEST(Leapfrog, ZeroStepsAndErrors) {
  auto k = KernelSpec::gaussian(1.0);
  std::mt19937_64 gen(44);
  PhaseState s0 = random_state(gen, 3, 2);
  Trajectory tr = integrate(k, s0, 0.1, 0);
  ASSERT_EQ(tr.states.size(), 1u);
  EXPECT_EQ(tr.terminal().q, s0.q);
  PhaseState bad = s0;
  bad.p(0, 0) = INFINITY;
  EXPECT_THROW(leapfrog_step(k, bad, 0.1), Error);
  EXPECT_THROW(leapfrog_step(KernelSpec::activation(Activation::relu()), s0, 0.1), Error);
  PhaseState mism{s0.q, Points::Zero(2, 2), 0.0};
  EXPECT_THROW(leapfrog_step(k, mism, 0.1), Error);
}

TEST(Leapfrog, SecondOrderSelfConvergence) {
  std::mt19937_64 gen(45);
  auto k = KernelSpec::gaussian(1.0, 0.1);
  PhaseState s0 = random_state(gen, 5, 2, 1.0);
  auto q_at = [&](int steps) { return integrate(k, s0, 1.0 / steps, steps).terminal().q; };
  Points a = q_at(5), b = q_at(10), c = q_at(20);
  const double ratio = (a - b).norm() / (b - c).norm();
  EXPECT_GT(ratio, 4 * 0.7);
  EXPECT_LT(ratio, 4 * 1.3);
}

TEST(Leapfrog, EnergyDriftIsSecondOrder) {
  std::mt19937_64 gen(46);
  auto k = KernelSpec::gaussian(1.0, 0.1);
  PhaseState s0 = random_state(gen, 8, 2, 1.0);
  const double d1 = relative_energy_drift(integrate(k, s0, 0.2, 5));
  const double d2 = relative_energy_drift(integrate(k, s0, 0.1, 10));
  EXPECT_GT(d1 / d2, 2.5);
  EXPECT_LT(d1 / d2, 6.0);
}

TEST(Leapfrog, ZeroMomentumPersists) {
  std::mt19937_64 gen(47);
  auto k = KernelSpec::gaussian(1.0, 0.1);
  PhaseState s0 = random_state(gen, 5, 2, 1.0);
  s0.p.row(2).setZero();
  for (auto opt : {IntegratorOptions{}, kExplicit}) {
    Trajectory tr = integrate(k, s0, 0.1, 10, opt);
    for (const auto& s : tr.states) EXPECT_LT(s.p.row(2).norm(), 1e-10);
  }
}

TEST(Adjoint, TrivialCases) {
  std::mt19937_64 gen(48);
  auto k = KernelSpec::gaussian(1.0, 0.1);
  PhaseState s0 = random_state(gen, 3, 2);
  EXPECT_EQ(adjoint_grad_p0(k, s0.q, s0.p, 0.2, 5, Points::Zero(3, 2)).cwiseAbs().maxCoeff(), 0.0);
  const double r = 0.1;
  Points q = Points::Zero(1, 2), p = Points::Ones(1, 2), g(1, 2);
  g << 0.3, -0.7;
  for (auto opt : {IntegratorOptions{}, kExplicit})
    EXPECT_LT((adjoint_grad_p0(k, q, p, 0.25, 4, g, opt) - (1 + r) * g).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Adjoint, MatchesFiniteDifferences) {
  std::mt19937_64 gen(49);
  for (auto opt : {IntegratorOptions{}, kExplicit}) {
    for (const auto& k : {KernelSpec::gaussian(1.0, 0.1), KernelSpec::activation(Activation::tanh(), 0.05)}) {
      PhaseState s0 = random_state(gen, 3, 2);
      Points w = random_points(gen, 3, 2), wp = random_points(gen, 3, 2);
      auto J = [&](const Points& q, const Points& p) {
        PhaseState e = integrate(k, {q, p, 0.0}, 0.2, 6, opt).terminal();
        return (w.array() * e.q.array()).sum() + (wp.array() * e.p.array()).sum();
      };
      Trajectory tr = integrate(k, s0, 0.2, 6, opt);
      AdjointGradient ag = adjoint(tr, w, wp);
      Points fdp = fd_gradient([&](const Points& p) { return J(s0.q, p); }, s0.p, 1e-6);
      Points fdq = fd_gradient([&](const Points& q) { return J(q, s0.p); }, s0.q, 1e-6);
      EXPECT_LT(rel_err(ag.p0, fdp), 1e-6);
      EXPECT_LT(rel_err(ag.q0, fdq), 1e-6);
    }
  }
}

TEST(Adjoint, ShapeMismatch) {
  std::mt19937_64 gen(50);
  auto k = KernelSpec::gaussian(1.0, 0.1);
  PhaseState s0 = random_state(gen, 3, 2);
  Trajectory tr = integrate(k, s0, 0.2, 2);
  EXPECT_THROW(adjoint_grad_p0(tr, Points::Zero(2, 2)), Error);
  Trajectory broken = tr;
  broken.half_momenta.pop_back();
  EXPECT_THROW(adjoint_grad_p0(broken, Points::Zero(3, 2)), Error);
}

TEST(TrajectoryObjective, Examples) {
  const double r = 0.1, nu = 0.7;
  auto k = KernelSpec::gaussian(1.0, r);
  std::mt19937_64 gen(51);
  Points X = random_points(gen, 3, 2);
  EXPECT_EQ(trajectory_objective(k, {X, X, X}, nu, nullptr), 0.0);
  Points x1 = Points::Zero(1, 2), q2(1, 2);
  q2 << 0.4, -0.3;
  EndLoss end = [](const Points& q, Points* g) {
    if (g) *g = 2 * q;
    return q.squaredNorm();
  };
  const double expect = 0.5 * nu * q2.squaredNorm() / (1 + r) + q2.squaredNorm();
  EXPECT_NEAR(trajectory_objective(k, {x1, q2}, nu, end), expect, 1e-14);
}

TEST(TrajectoryObjective, GradientMatchesFiniteDifferences) {
  std::mt19937_64 gen(52);
  auto k = KernelSpec::gaussian(1.0, 0.1);
  Points Y = random_points(gen, 2, 1);
  EndLoss end = [&](const Points& q, Points* g) { return ridge_loss_value_grad(k, q, Y, 0.3, g); };
  std::vector<Points> qs;
  for (int s = 0; s < 4; ++s) qs.push_back(random_points(gen, 2, 2));
  std::vector<Points> grad;
  trajectory_objective(k, qs, 0.8, end, &grad);
  for (int s = 1; s < 4; ++s) {
    Points fd = fd_gradient(
        [&](const Points& x) {
          auto path = qs;
          path[static_cast<std::size_t>(s)] = x;
          return trajectory_objective(k, path, 0.8, end);
        },
        qs[static_cast<std::size_t>(s)]);
    EXPECT_LT(rel_err(grad[static_cast<std::size_t>(s)], fd), 1e-5) << "layer " << s;
  }
}

TEST(MinimizeTrajectory, ZeroEndLossAndRigidity) {
  std::mt19937_64 gen(53);
  auto k = KernelSpec::gaussian(1.0, 0.1);
  Points X = random_points(gen, 3, 2);
  OptimizerConfig cfg;
  auto res = minimize_trajectory(k, X, 4, 1.0, nullptr, cfg);
  EXPECT_EQ(res.value, 0.0);
  for (const auto& q : res.qs) EXPECT_EQ(q, X);
  Points Y = random_points(gen, 3, 1);
  EndLoss end = [&](const Points& q, Points* g) { return ridge_loss_value_grad(k, q, Y, 0.3, g); };
  auto rigid = minimize_trajectory(k, X, 3, 1e9, end, cfg);
  EXPECT_NEAR(rigid.value, ridge_loss(k, X, Y, 0.3), 1e-6);
  for (const auto& q : rigid.qs) EXPECT_LT((q - X).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(MinimizeTrajectory, StationaryAndVelocity) {
  std::mt19937_64 gen(54);
  auto k = KernelSpec::gaussian(1.0, 0.1);
  Points X = random_points(gen, 4, 2), Y = random_points(gen, 4, 1);
  EndLoss end = [&](const Points& q, Points* g) { return ridge_loss_value_grad(k, q, Y, 0.1, g); };
  OptimizerConfig cfg;
  cfg.method = OptimizerMethod::lbfgs;
  auto res = minimize_trajectory(k, X, 4, 0.5, end, cfg);
  EXPECT_TRUE(res.optimizer.converged);
  EXPECT_LT(res.optimizer.grad_inf, 1e-6);
  EXPECT_LE(res.value, trajectory_objective(k, std::vector<Points>(5, X), 0.5, end));
  // v_s(q^s) reproduces the increment up to the nugget term.
  auto kn = k.with_nugget(0.0);
  for (std::size_t s = 0; s < 4; ++s) {
    Points v = layer_velocity(kn, res.qs, s, res.qs[s]);
    EXPECT_LT((v - (res.qs[s + 1] - res.qs[s])).cwiseAbs().maxCoeff(), 1e-8);
  }
}
