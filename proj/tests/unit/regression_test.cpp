#include "test_util.hpp"

#include <mechreg/regression.hpp>

#include <gtest/gtest.h>

#include <Eigen/LU>

using namespace mechreg;
using testutil::fd_gradient;
using testutil::random_points;
using testutil::rel_err;

TEST(FitRidge, SinglePoint) {
  Points X = Points::Zero(1, 1), Y = Points::Constant(1, 1, 2.0);
  RidgeModel m = fit_ridge(KernelSpec::gaussian(1.0), X, Y, 1.0);
  EXPECT_NEAR(m.coefficients(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(m.predict(X)(0, 0), 1.0, 1e-15);
}

TEST(FitRidge, InterpolatesWithTinyNugget) {
  std::mt19937_64 gen(21);
  for (int t = 0; t < 10; ++t) {
    const auto n = 1 + static_cast<Eigen::Index>(gen() % 50);
    Points X = random_points(gen, n, 2, 3.0), Y = random_points(gen, n, 2);
    RidgeModel m = fit_ridge(KernelSpec::gaussian(1.0, 1e-8), X, Y, 0.0);
    EXPECT_LT((m.predict(X) - Y).cwiseAbs().maxCoeff(), 1e-6);
    // Residual of the normal equations.
    Points res = gram(m.kernel, X).apply(m.coefficients) - Y;
    EXPECT_LT(res.norm(), 1e-8 * std::max(1.0, Y.norm()));
  }
}

TEST(FitRidge, MatchesDenseNormalEquations) {
  std::mt19937_64 gen(22);
  for (int n = 1; n <= 8; ++n) {
    Points X = random_points(gen, n, 2), Y = random_points(gen, n, 1);
    const double lambda = 0.5;
    auto k = KernelSpec::gaussian(1.5);
    Matrix K = gram(k, X).dense();
    // Minimizer of λZᵀKZ + ‖KZ − Y‖²: (λK + K²)Z = KY.
    Matrix Zref = (lambda * K + K * K).fullPivLu().solve(K * Y);
    RidgeModel m = fit_ridge(k, X, Y, lambda);
    EXPECT_LT((K * m.coefficients - K * Zref).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(FitRidge, Errors) {
  Points X = Points::Zero(2, 1), Y = Points::Zero(2, 1);
  EXPECT_THROW(fit_ridge(KernelSpec::gaussian(1.0), X, Y, -1.0), Error);
  EXPECT_THROW(fit_ridge(KernelSpec::gaussian(1.0), X, Points::Zero(3, 1), 1.0), Error);
  EXPECT_THROW(fit_ridge(KernelSpec::gaussian(1.0), X, Y, 0.0), Error);  // λ + r = 0
}

TEST(RidgeLoss, Values) {
  Points X = Points::Zero(1, 1), Y = Points::Constant(1, 1, 2.0);
  EXPECT_NEAR(ridge_loss(KernelSpec::gaussian(1.0), X, Y, 1.0), 2.0, 1e-15);
  std::mt19937_64 gen(23);
  Points X3 = random_points(gen, 3, 2);
  EXPECT_EQ(ridge_loss(KernelSpec::gaussian(1.0), X3, Points::Zero(3, 1), 0.4), 0.0);
}

TEST(RidgeLoss, EqualsPenalizedObjectiveAtFit) {
  std::mt19937_64 gen(24);
  auto k = KernelSpec::gaussian(0.9);
  for (int t = 0; t < 5; ++t) {
    Points X = random_points(gen, 3, 2), Y = random_points(gen, 3, 2);
    const double lambda = 0.3;
    RidgeModel m = fit_ridge(k, X, Y, lambda);
    const double direct = lambda * m.rkhs_norm_sq() + (m.predict(X) - Y).squaredNorm();
    EXPECT_NEAR(ridge_loss(k, X, Y, lambda), direct, 1e-10);
  }
}

TEST(RidgeLossGrad, TrivialCases) {
  std::mt19937_64 gen(25);
  auto k = KernelSpec::gaussian(1.0, 0.1);
  Points X = random_points(gen, 4, 2);
  EXPECT_EQ(ridge_loss_grad(k, X, Points::Zero(4, 1), 0.2).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_LT(ridge_loss_grad(k, random_points(gen, 1, 2), Points::Ones(1, 1), 0.2).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(RidgeLossGrad, FiniteDifferences) {
  std::mt19937_64 gen(26);
  for (double lambda : {0.0, 0.2, 3.0}) {
    for (auto k : {KernelSpec::gaussian(1.0, 0.1), KernelSpec::activation(Activation::tanh(), 0.1)}) {
      Points X = random_points(gen, 2, 2, 0.5), Y = random_points(gen, 2, 3);
      Points fd = fd_gradient([&](const Points& x) { return ridge_loss(k, x, Y, lambda); }, X);
      EXPECT_LT(rel_err(ridge_loss_grad(k, X, Y, lambda), fd), 1e-5) << k.family_name() << " " << lambda;
      Points g;
      EXPECT_NEAR(ridge_loss_value_grad(k, X, Y, lambda, &g), ridge_loss(k, X, Y, lambda), 1e-14);
    }
  }
}

TEST(RidgeLossGrad, ReluRejected) {
  Points X = Points::Ones(2, 1), Y = Points::Ones(2, 1);
  EXPECT_THROW(ridge_loss_grad(KernelSpec::activation(Activation::relu(), 0.1), X, Y, 1.0), Error);
}

TEST(Hinge, Examples) {
  Matrix s(2, 2);
  s << 2, 0, 0, 0;
  auto r = hinge_loss(s, {0, 0});
  EXPECT_DOUBLE_EQ(r.loss, 1.0);
  EXPECT_DOUBLE_EQ(r.margins(0), 2.0);
  EXPECT_EQ(r.subgradient.row(0).norm(), 0.0);
}

TEST(Hinge, BruteForce) {
  std::mt19937_64 gen(27);
  Matrix s = random_points(gen, 5, 3, 2.0);
  std::vector<int> labels{0, 2, 1, 1, 0};
  double expect = 0;
  for (int i = 0; i < 5; ++i) {
    double best = -INFINITY;
    for (int j = 0; j < 3; ++j)
      if (j != labels[i]) best = std::max(best, s(i, j));
    expect += std::max(0.0, 1.0 - (s(i, labels[i]) - best));
  }
  auto r = hinge_loss(s, labels);
  EXPECT_NEAR(r.loss, expect, 1e-14);
  // Away from kinks the subgradient is the gradient.
  const double h = 1e-7;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 3; ++j) {
      Matrix sp = s, sm = s;
      sp(i, j) += h;
      sm(i, j) -= h;
      EXPECT_NEAR(r.subgradient(i, j), (hinge_loss(sp, labels).loss - hinge_loss(sm, labels).loss) / (2 * h), 1e-6);
    }
  EXPECT_THROW(hinge_loss(s, {0, 1, 3, 0, 0}), Error);
}

TEST(HingeReadout, DualGapClosesAndPrimalIsMinimal) {
  std::mt19937_64 gen(28);
  Points X = random_points(gen, 12, 2);
  std::vector<int> labels;
  for (int i = 0; i < 12; ++i) labels.push_back(X(i, 0) > 0 ? 1 : 0);
  auto k = KernelSpec::gaussian(1.0, 0.05);
  Gram G = gram(k, X);
  const double lambda = 0.1;
  HingeReadout h = fit_hinge_readout(G, labels, 2, lambda, 1e-10);
  EXPECT_LE(h.gap, 1e-10 * std::max(1.0, h.value) + 1e-14);
  auto primal = [&](const Matrix& Z) {
    Matrix S = G.apply(Z);
    return lambda * (Z.array() * S.array()).sum() + hinge_loss(S, labels).loss;
  };
  EXPECT_NEAR(primal(h.coefficients), h.value, 1e-10);
  std::normal_distribution<double> nd(0.0, 1e-3);
  for (int t = 0; t < 50; ++t) {
    Matrix dZ(12, 2);
    for (int i = 0; i < 24; ++i) dZ(i) = nd(gen);
    EXPECT_GE(primal(h.coefficients + dZ), h.value - 1e-9);
  }
}

TEST(PowerFunction, Examples) {
  std::mt19937_64 gen(29);
  Points X = random_points(gen, 2, 1);
  auto k = KernelSpec::gaussian(1.0, 0.0, 2);
  EXPECT_LT(power_function(k, X, 0.0, X.row(0).transpose()), 1e-8);
  Vector far = Vector::Constant(1, 100.0);
  EXPECT_NEAR(power_function(k, X, 0.0, far), 2.0, 1e-12);
  // 2×2 hand formula, scalar output.
  auto k1 = KernelSpec::gaussian(1.0);
  const double lambda = 0.2, x = 0.37;
  const double a = 1 + lambda, b = std::exp(-std::pow(X(0, 0) - X(1, 0), 2)), c = a;
  const double k1x = std::exp(-std::pow(x - X(0, 0), 2)), k2x = std::exp(-std::pow(x - X(1, 0), 2));
  const double det = a * c - b * b;
  const double quadform = (c * k1x * k1x - 2 * b * k1x * k2x + a * k2x * k2x) / det;
  EXPECT_NEAR(power_function(k1, X, lambda, Vector::Constant(1, x)), 1.0 - quadform, 1e-14);
}

TEST(PowerFunction, BoundedByPriorTrace) {
  std::mt19937_64 gen(30);
  auto k = KernelSpec::gaussian(0.8, 0.01, 3);
  for (int t = 0; t < 20; ++t) {
    Points X = random_points(gen, 6, 2), xs = random_points(gen, 10, 2);
    for (double lambda : {0.0, 0.1, 1.0}) {
      Vector s = power_function_rows(k, X, lambda, xs);
      EXPECT_GE(s.minCoeff(), 0.0);
      EXPECT_LE(s.maxCoeff(), 3.0 + 1e-10);
    }
  }
}

TEST(ErrorBound, TrivialCases) {
  std::mt19937_64 gen(31);
  auto k = KernelSpec::gaussian(1.0);
  Points X = random_points(gen, 5, 2), Y = random_points(gen, 5, 1);
  RidgeModel self = fit_ridge(k.with_nugget(1e-10), X, Y, 0.0);
  self.kernel = k;
  auto rep = error_bound_check(k, X, 0.0, self, X);
  EXPECT_TRUE(rep.pass);
  EXPECT_LT(rep.error.maxCoeff(), 1e-4);
  EXPECT_GE(rep.bound.minCoeff(), 0.0);
  RidgeModel zero{k, X, Points::Zero(5, 1), 0.0};
  EXPECT_TRUE(error_bound_check(k, X, 0.1, zero, random_points(gen, 20, 2)).pass);
}

TEST(ErrorBound, RandomRkhsElements) {
  std::mt19937_64 gen(32);
  auto k = KernelSpec::gaussian(1.0, 0.0, 2);
  for (int t = 0; t < 20; ++t) {
    Points Xd = random_points(gen, 6, 2), c = random_points(gen, 6, 2);
    RidgeModel fd{k, Xd, c, 0.0};
    Points X = random_points(gen, 8, 2), xs = random_points(gen, 100, 2);
    EXPECT_TRUE(error_bound_check(k.with_nugget(1e-9), X, 0.0, fd, xs).pass);
    EXPECT_TRUE(error_bound_check(k, X, 0.1, fd, xs).pass);
  }
}

TEST(SampleGp, Deterministic) {
  Rng rng(33);
  auto fm = FeatureMap::random_features(2, 4, Activation::tanh(), rng);
  Vector x(2);
  x << 0.3, -0.2;
  EXPECT_EQ(sample_gp(fm, std::nullopt, 2, 99)(x), sample_gp(fm, std::nullopt, 2, 99)(x));
  EXPECT_NE(sample_gp(fm, std::nullopt, 2, 99)(x), sample_gp(fm, std::nullopt, 2, 100)(x));
  auto zero = FeatureMap::from_weights(Matrix::Zero(3, 2), Vector::Zero(3), Activation::tanh(), false,
                                       FeatureMap::Kind::custom);
  EXPECT_EQ(sample_gp(zero, std::nullopt, 2, 5)(x).norm(), 0.0);
}

TEST(SampleGp, MeanIsAdded) {
  Rng rng(34);
  auto fm = FeatureMap::random_features(1, 3, Activation::tanh(), rng);
  Points X(2, 1), Y(2, 1);
  X << 0.0, 1.0;
  Y << 1.0, -1.0;
  RidgeModel mean = fit_ridge(KernelSpec::gaussian(1.0), X, Y, 0.1);
  Vector x = Vector::Constant(1, 0.4);
  Vector diff = sample_gp(fm, mean, 1, 7)(x) - sample_gp(fm, std::nullopt, 1, 7)(x);
  EXPECT_NEAR(diff(0), mean.evaluate(Points(x.transpose()))(0, 0), 1e-14);
}
