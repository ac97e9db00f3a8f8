#include "test_util.hpp"

#include <mechreg/rem.hpp>
#include <mechreg/serialize.hpp>

#include <gtest/gtest.h>

#include <limits>
#include <sstream>

using namespace mechreg;
using testutil::max_abs;
using testutil::random_points;

TEST(FormatDouble, RoundTripsExactly) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 2000; ++i) {
    const double v = u(gen) * std::pow(10.0, i % 40 - 20);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(1.0), "1");
  EXPECT_EQ(format_double(-2.5e-300), "-2.5e-300");
}

TEST(Fnv1a, KnownValues) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a("foobar"), 0x85944171f73967e8ULL);
}

TEST(Serialize, KernelRoundTrip) {
  Rng rng(2);
  auto fm = std::make_shared<const FeatureMap>(FeatureMap::random_features(2, 4, Activation::softplus_clamped(0.05), rng));
  auto g = GroupSpec::translations(4, 4, 2, 1);
  auto rem = std::make_shared<const RemSpec>(g, rect_mask(g, 0, 0, 2, 2), rect_mask(g, 0, 0, 1, 1),
                                             KernelSpec::gaussian(1.5), 1, 1);
  std::mt19937_64 gen(3);
  for (const KernelSpec& k : {KernelSpec::gaussian(0.7, 0.1, 2), KernelSpec::activation(Activation::tanh(), 0.2),
                              KernelSpec::linear(0.3), KernelSpec::feature(fm, 0.01), KernelSpec::rem(rem, 0.05)}) {
    std::stringstream ss;
    write_kernel(ss, "k", k);
    KernelSpec back = read_kernel(ss, "k");
    const Eigen::Index d = k.is_rem() ? 16 : 2;
    Points A = random_points(gen, 3, d), B = random_points(gen, 2, d);
    EXPECT_EQ(gram(back, A).dense(), gram(k, A).dense());
    EXPECT_EQ(cross_gram(back, A, B).dense(), cross_gram(k, A, B).dense());
  }
}

TEST(Serialize, ShootingModelRoundTrip) {
  std::mt19937_64 gen(4);
  Points X = random_points(gen, 5, 2), Y = random_points(gen, 5, 1);
  auto k = KernelSpec::gaussian(1.0, 0.1);
  ShootingHyper h;
  h.nu = 0.5;
  h.lambda = 0.1;
  h.h = 0.25;
  h.steps = 4;
  h.optimizer.max_iters = 20;
  ShootingModel m = shoot(k, k, X, Y, h);
  std::stringstream ss;
  save_model(ss, m);
  const std::string text = ss.str();
  ShootingModel back = load_shooting_model(ss);
  Points xt = random_points(gen, 4, 2);
  EXPECT_EQ(predict(back, xt), predict(m, xt));
  EXPECT_EQ(back.p0, m.p0);
  // Saving again gives the same bytes.
  std::stringstream again;
  save_model(again, back);
  EXPECT_EQ(again.str(), text);

  // A tampered path is caught by re-integration.
  std::string bad = text;
  auto pos = bad.find("matrix q1 ");
  ASSERT_NE(pos, std::string::npos);
  auto line_end = bad.find('\n', pos);
  bad.insert(line_end + 1, "9");
  std::stringstream tampered(bad);
  EXPECT_THROW(load_shooting_model(tampered), Error);
  std::stringstream wrong_type(text);
  EXPECT_THROW(load_resnet_model(wrong_type), Error);
  std::stringstream truncated(text.substr(0, text.size() / 2));
  EXPECT_THROW(load_shooting_model(truncated), Error);
}

TEST(Serialize, ResNetModelRoundTrip) {
  std::mt19937_64 gen(5);
  Points X = random_points(gen, 12, 2), Y = random_points(gen, 12, 1);
  ResNetHyper h;
  GroupHyper g;
  g.layers = 2;
  g.nu = 0.1;
  g.lambda = 1e-2;
  g.layer_map.kind = FeatureMap::Kind::random_features;
  g.layer_map.feature_dim = 5;
  g.readout_map = g.layer_map;
  g.output_dim = 2;
  h.groups = {g, g};
  h.r = 0.5;
  h.rho = 0.5;
  h.optimizer.max_iters = 15;
  ResNetModel m = train_deep(X, Y, h, 6);
  std::stringstream ss;
  save_model(ss, m);
  ResNetModel back = load_resnet_model(ss);
  Points xt = random_points(gen, 6, 2);
  EXPECT_EQ(forward(back, xt), forward(m, xt));
  EXPECT_EQ(back.objective, m.objective);
  std::stringstream again;
  save_model(again, back);
  EXPECT_EQ(again.str(), ss.str());
}

TEST(Serialize, RejectsUnknownFormat) {
  std::stringstream ss("mechreg-model 0.1.0\nformat 99\ntype shooting\n");
  EXPECT_THROW(load_shooting_model(ss), Error);
  std::stringstream junk("hello\n");
  EXPECT_THROW(load_shooting_model(junk), Error);
}
