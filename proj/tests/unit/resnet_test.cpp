#include "test_util.hpp"

#include <mechreg/regression.hpp>
#include <mechreg/resnet.hpp>

#include <gtest/gtest.h>

#include <memory>

using namespace mechreg;
using testutil::max_abs;
using testutil::random_points;

namespace {

FeatureMapConfig rf(Eigen::Index dim, Activation a = Activation::tanh()) {
  FeatureMapConfig c;
  c.kind = FeatureMap::Kind::random_features;
  c.activation = a;
  c.feature_dim = dim;
  return c;
}

FeatureMapConfig linear_features() {
  FeatureMapConfig c;
  c.kind = FeatureMap::Kind::activation_identity;
  c.activation = Activation::identity();
  return c;
}

ResNetHyper one_group(std::size_t layers, double nu, double lambda, double r = 0, double rho = 0) {
  ResNetHyper h;
  GroupHyper g;
  g.layers = layers;
  g.nu = nu;
  g.lambda = lambda;
  g.layer_map = rf(8);
  g.readout_map = rf(12);
  h.groups.push_back(g);
  h.r = r;
  h.rho = rho;
  h.optimizer.method = OptimizerMethod::lbfgs;
  h.optimizer.tol = 1e-9;
  h.optimizer.max_iters = 500;
  return h;
}

struct Data {
  Points X, Y;
};

Data wave(std::uint64_t seed, Eigen::Index n = 20) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  Data d{Points(n, 1), Points(n, 1)};
  for (Eigen::Index i = 0; i < n; ++i) {
    d.X(i, 0) = u(gen);
    d.Y(i, 0) = std::cos(3 * d.X(i, 0));
  }
  return d;
}

// Randomizes every weight of a model.
void scramble(ResNetModel& m, std::mt19937_64& gen, double scale) {
  for (auto& G : m.groups) {
    for (auto& w : G.w) w = random_points(gen, w.rows(), w.cols(), scale);
    G.readout = random_points(gen, G.readout.rows(), G.readout.cols(), scale);
  }
}

}  // namespace

TEST(ResNetForward, ZeroModelIsZero) {
  ResNetModel m = init_model(1, 1, one_group(3, 1, 1), 1);
  Data d = wave(1, 7);
  EXPECT_EQ(max_abs(forward(m, d.X)), 0.0);
  EXPECT_EQ(deform(m, d.X), d.X);
  ResNetHyper h2 = one_group(2, 1, 1);
  GroupHyper g2 = h2.groups[0];
  h2.groups[0].output_dim = 3;
  h2.groups.push_back(g2);
  ResNetModel m2 = init_model(1, 1, h2, 1);
  EXPECT_EQ(max_abs(forward(m2, d.X)), 0.0);
}

TEST(ResNetForward, SingleLayerWithZeroWeightsIsReadout) {
  ResNetModel m = init_model(2, 3, one_group(1, 1, 1), 2);
  std::mt19937_64 gen(3);
  m.groups[0].readout = random_points(gen, 3, m.groups[0].readout_map.feature_dim());
  Points x = random_points(gen, 5, 2);
  Matrix expect = m.groups[0].readout_map.apply_rows(x) * m.groups[0].readout.transpose();
  EXPECT_LT(max_abs(forward(m, x) - expect), 1e-15);
}

TEST(ResNetForward, MatchesStepByStepEvaluation) {
  ResNetHyper h = one_group(3, 1, 1);
  h.groups[0].output_dim = 2;
  GroupHyper g2 = h.groups[0];
  g2.layers = 2;
  h.groups.push_back(g2);
  ResNetModel m = init_model(2, 1, h, 4);
  std::mt19937_64 gen(5);
  scramble(m, gen, 0.3);
  Points x = random_points(gen, 4, 2);
  // Point by point, straight from the weights.
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Vector z = x.row(i).transpose();
    for (const auto& G : m.groups) {
      for (const auto& w : G.w) {
        const Matrix& W = G.layer_map.weights();
        Vector pre = W * z + G.layer_map.biases();
        Vector phi(pre.size() + 1);
        for (Eigen::Index k = 0; k < pre.size(); ++k) phi(k) = std::tanh(pre(k));
        phi(pre.size()) = 1.0;
        z = z + w * phi;
      }
      Vector pre = G.readout_map.weights() * z + G.readout_map.biases();
      Vector phi(pre.size() + 1);
      for (Eigen::Index k = 0; k < pre.size(); ++k) phi(k) = std::tanh(pre(k));
      phi(pre.size()) = 1.0;
      z = G.readout * phi;
    }
    EXPECT_LT(std::abs(forward(m, x.row(i))(0, 0) - z(0)), 1e-13);
  }
}

TEST(ResNetTrain, ObjectiveGradientIsConsistent) {
  // The optimizer trace is monotone and the final objective matches a
  // fresh evaluation of the trained weights.
  Data d = wave(6);
  for (auto [r, rho] : {std::pair{0.0, 0.0}, std::pair{0.5, 0.2}}) {
    ResNetHyper h = one_group(4, 0.1, 1e-3, r, rho);
    h.optimizer.max_iters = 60;
    ResNetModel m = train_block(d.X, d.Y, h, 7);
    for (std::size_t k = 1; k < m.trace.size(); ++k) EXPECT_LE(m.trace[k], m.trace[k - 1]);
    EXPECT_LT(m.trace.back(), m.trace.front());
    ASSERT_EQ(m.term_trace.size(), m.trace.size());
    for (std::size_t k = 0; k < m.trace.size(); ++k)
      EXPECT_NEAR(m.term_trace[k].total(), m.trace[k], 1e-12 * std::max(1.0, m.trace[k]));
    EXPECT_NEAR(training_objective(m, d.X, d.Y).total(), m.objective, 1e-10 * std::max(1.0, m.objective));
  }
}

TEST(ResNetTrain, StrongReadoutPenaltyShrinksReadout) {
  Data d = wave(8);
  ResNetModel m = train_block(d.X, d.Y, one_group(2, 1, 1e8), 9);
  EXPECT_LT(max_abs(m.groups[0].readout), 1e-6);
}

TEST(ResNetTrain, RigidLimitIsRandomFeatureRidge) {
  Data d = wave(10);
  const double lambda = 1e-2, rho = 1e-3;
  ResNetModel m = train_block(d.X, d.Y, one_group(1, 1e9, lambda, 0.1, rho), 11);
  EXPECT_LT(max_abs(m.groups[0].w[0]), 1e-6);
  auto map = std::make_shared<FeatureMap>(m.groups[0].readout_map);
  RidgeModel ridge = fit_ridge(KernelSpec::feature(map, rho), d.X, d.Y, lambda);
  Data t = wave(12, 15);
  EXPECT_LT(max_abs(forward(m, t.X) - ridge.evaluate(t.X)), 1e-4);
}

TEST(ResNetTrain, SlackObjectiveEqualsNuggetKernelObjective) {
  // N = 2, L = 1, d = 1: min over (w, z) of the slack objective against
  // min over q¹ of (ν/2)(q¹−X)ᵀ(ΦΦᵀ + rI)⁻¹(q¹−X) + ℓ(q¹).
  Points X(2, 1), Y(2, 1);
  X << -0.4, 0.5;
  Y << 0.7, -0.2;
  const double nu = 0.8, lambda = 0.05, r = 0.3;
  ResNetHyper h = one_group(1, nu, lambda, r, 0.0);
  h.groups[0].layer_map = rf(3);
  h.groups[0].readout_map = rf(4);
  h.optimizer.tol = 1e-11;
  h.optimizer.max_iters = 3000;
  ResNetModel m = train_block(X, Y, h, 13);
  const FeatureMap& lm = m.groups[0].layer_map;
  const FeatureMap& rm = m.groups[0].readout_map;
  Matrix Kr = lm.apply_rows(X) * lm.apply_rows(X).transpose();
  Kr.diagonal().array() += r;
  auto oracle = [&](const Vector& q1) {
    Points q = q1;
    Matrix P = rm.apply_rows(q);
    Matrix K2 = P * P.transpose();
    K2.diagonal().array() += lambda;
    const double end = lambda * (Y.transpose() * K2.ldlt().solve(Y))(0, 0);
    Vector dq = q1 - X.col(0);
    return 0.5 * nu * dq.dot(Kr.ldlt().solve(dq)) + end;
  };
  Objective f = [&](const Vector& x, Vector* g) {
    if (g) {
      g->resize(x.size());
      for (Eigen::Index k = 0; k < x.size(); ++k) {
        Vector a = x, b = x;
        a(k) += 1e-6;
        b(k) -= 1e-6;
        (*g)(k) = (oracle(a) - oracle(b)) / 2e-6;
      }
    }
    return oracle(x);
  };
  OptimizerConfig cfg;
  cfg.method = OptimizerMethod::lbfgs;
  cfg.tol = 1e-9;
  cfg.max_iters = 2000;
  OptimizeResult direct = minimize(f, X.col(0), cfg);
  EXPECT_NEAR(m.objective, direct.value, 1e-6);
}

TEST(ResNetDeep, RigidSecondGroupMatchesSingleBlock) {
  // A pass-through first readout followed by a rigid second group is the
  // single block in disguise: same objective, same predictions, and the
  // single-block optimum stays put when trained as a deep model.
  Data d = wave(14);
  const double lambda = 1e-2;
  ResNetHyper h1 = one_group(2, 0.05, lambda, 0.2, 0.0);
  h1.optimizer.max_iters = 300;
  ResNetModel single = train_block(d.X, d.Y, h1, 15);

  ResNetHyper h2 = h1;
  GroupHyper first = h1.groups[0];
  first.readout_map = linear_features();
  first.output_dim = 1;
  first.frozen_readout = Matrix(1, 2);
  *first.frozen_readout << 1.0, 0.0;
  GroupHyper second = h1.groups[0];
  second.layers = 1;
  second.nu = 1e9;
  second.layer_map = linear_features();
  h2.groups = {first, second};
  h2.optimizer.max_iters = 50;
  ResNetModel deep = init_model(1, 1, h2, 15);
  ASSERT_EQ(deep.groups[1].readout_map.weights(), single.groups[0].readout_map.weights());
  deep.groups[0].w = single.groups[0].w;
  deep.groups[0].slacks = single.groups[0].slacks;
  deep.groups[1].readout = single.groups[0].readout;
  Data t = wave(16, 15);
  EXPECT_LT(max_abs(forward(deep, t.X) - forward(single, t.X)), 1e-12);
  // The frozen readout still pays its constant λ‖w̃‖².
  const double frozen = lambda * first.frozen_readout->squaredNorm();
  EXPECT_NEAR(training_objective(deep, d.X, d.Y).total(), single.objective + frozen, 1e-12);

  train(deep, d.X, d.Y, 15);
  EXPECT_LE(deep.objective, single.objective + frozen + 1e-12);
  EXPECT_LT(max_abs(deep.groups[1].w[0]), 1e-6);
  EXPECT_LT(max_abs(forward(deep, t.X) - forward(single, t.X)), 1e-3);
}

TEST(ResNetDeep, ObjectiveDecreasesOverFirstIterations) {
  Data d = wave(17, 25);
  ResNetHyper h = one_group(2, 0.1, 1e-2, 0.5, 0.5);
  h.groups[0].output_dim = 2;
  h.groups.push_back(h.groups[0]);
  h.optimizer.method = OptimizerMethod::gradient_descent;
  h.optimizer.initial_step = 1e-2;
  h.optimizer.max_iters = 10;
  ResNetModel m = train_deep(d.X, d.Y, h, 18);
  ASSERT_EQ(m.trace.size(), 11u);
  for (std::size_t k = 1; k < m.trace.size(); ++k) EXPECT_LT(m.trace[k], m.trace[k - 1]);
}

TEST(ResNetTrain, Deterministic) {
  Data d = wave(19);
  ResNetHyper h = one_group(3, 0.1, 1e-3, 0.5, 0.5);
  h.optimizer.max_iters = 30;
  ResNetModel a = train_block(d.X, d.Y, h, 20), b = train_block(d.X, d.Y, h, 20);
  EXPECT_EQ(a.trace, b.trace);
  h.minibatch = true;
  h.batch_size = 5;
  h.epochs = 5;
  ResNetModel c = train_block(d.X, d.Y, h, 21), e = train_block(d.X, d.Y, h, 21);
  EXPECT_EQ(c.trace, e.trace);
}

TEST(ResNetTrain, MinibatchReducesObjective) {
  Data d = wave(22, 40);
  ResNetHyper h = one_group(2, 0.1, 1e-2, 0.5, 0.5);
  h.minibatch = true;
  h.batch_size = 8;
  h.epochs = 40;
  h.learning_rate = 2e-2;
  ResNetModel zero = init_model(1, 1, h, 23);
  const double start = training_objective(zero, d.X, d.Y).total();
  ResNetModel m = train_block(d.X, d.Y, h, 23);
  EXPECT_LT(m.trace.back(), start);
}

TEST(ResNetTrain, RejectsBadConfig) {
  Data d = wave(24);
  EXPECT_THROW(train_block(d.X, d.Y, ResNetHyper{}, 1), Error);
  ResNetHyper h = one_group(2, 1, 1);
  h.r = -1;
  EXPECT_THROW(train_block(d.X, d.Y, h, 1), Error);
  h.r = 0;
  EXPECT_THROW(train_deep(d.X, d.Y, h, 1), Error);
  EXPECT_THROW(train_block(d.X, Points::Zero(3, 1), h, 1), Error);
  h.groups[0].layers = 0;
  EXPECT_THROW(train_block(d.X, d.Y, h, 1), Error);
}

TEST(EnergyProfile, TrivialCases) {
  ResNetModel zero = init_model(1, 1, one_group(4, 1, 1, 0.5), 1);
  EnergyProfile e0 = energy_profile(zero);
  for (double v : e0.raw[0]) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(e0.fluctuation[0], 0.0);
  Data d = wave(25);
  ResNetHyper h = one_group(1, 0.1, 1e-3, 0.5);
  h.optimizer.max_iters = 50;
  EnergyProfile e1 = energy_profile(train_block(d.X, d.Y, h, 26));
  ASSERT_EQ(e1.raw[0].size(), 1u);
  EXPECT_GT(e1.raw[0][0], 0.0);
  EXPECT_EQ(e1.fluctuation[0], 0.0);
}
