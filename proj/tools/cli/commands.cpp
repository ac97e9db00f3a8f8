#include "commands.hpp"

#include "config.hpp"
#include "grid_csv.hpp"
#include "output.hpp"
#include "parallel.hpp"

#include <mechreg/regression.hpp>
#include <mechreg/rem.hpp>
#include <mechreg/resnet.hpp>
#include <mechreg/serialize.hpp>
#include <mechreg/shooting.hpp>

#include <CLI11.hpp>

#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <numbers>

namespace mechreg::cli {

namespace {

using Files = std::vector<std::string>;
using Runner = std::function<Files(const RunContext&)>;

// ---------------------------------------------------------------- readers

OptimizerConfig read_optimizer(Config& c, const OptimizerConfig& def) {
  OptimizerConfig o = def;
  o.method = parse_optimizer_method(c.get_string("optimizer.method", to_string(def.method)));
  o.tol = c.get_double("optimizer.tol", def.tol);
  o.max_iters = static_cast<int>(c.get_int("optimizer.max_iters", def.max_iters));
  o.max_backtracks = static_cast<int>(c.get_int("optimizer.max_backtracks", def.max_backtracks));
  o.initial_step = c.get_double("optimizer.initial_step", def.initial_step);
  o.rel_decrease_tol = c.get_double("optimizer.rel_decrease_tol", def.rel_decrease_tol);
  o.lbfgs_memory = static_cast<int>(c.get_int("optimizer.lbfgs_memory", def.lbfgs_memory));
  return o;
}

std::size_t positive(Config& c, const std::string& key, long long def) {
  const long long v = c.get_int(key, def);
  if (v < 1) throw Error(ErrorCode::config, "'" + key + "' must be at least 1");
  return static_cast<std::size_t>(v);
}

double non_negative(Config& c, const std::string& key, double def) {
  const double v = c.get_double(key, def);
  if (!(v >= 0) || !std::isfinite(v)) throw Error(ErrorCode::config, "'" + key + "' must be finite and >= 0");
  return v;
}

Activation read_activation(Config& c, const std::string& key, const std::string& def) {
  try {
    return Activation::parse(c.get_string(key, def));
  } catch (const Error& e) {
    throw Error(ErrorCode::config, "'" + key + "': " + e.what());
  }
}

KernelSpec read_kernel(Config& c, const std::string& section, double bandwidth, double nugget) {
  const std::string kind = c.get_string(section + ".kind", "gaussian");
  const double r = non_negative(c, section + ".nugget", nugget);
  if (kind == "gaussian") {
    const double s = c.get_double(section + ".bandwidth", bandwidth);
    if (!(s > 0)) throw Error(ErrorCode::config, "'" + section + ".bandwidth' must be > 0");
    return KernelSpec::gaussian(s, r);
  }
  if (kind == "activation") return KernelSpec::activation(read_activation(c, section + ".activation", "tanh"), r);
  if (kind == "linear") return KernelSpec::linear(r);
  throw Error(ErrorCode::config, "'" + section + ".kind' must be gaussian, activation or linear (got '" + kind + "')");
}

std::vector<double> read_grid(Config& c, const std::string& key, const std::vector<double>& def) {
  std::vector<double> v = c.get_doubles(key, def);
  for (double x : v)
    if (!std::isfinite(x) || x < 0) throw Error(ErrorCode::config, "'" + key + "' entries must be finite and >= 0");
  return v;
}

double rmse(const Points& a, const Points& b) { return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.rows())); }

// ---------------------------------------------------------------- swissroll

struct SwissParams {
  double theta_min, theta_max, scale, noise;
  std::size_t per_arm;
  KernelSpec kernel = KernelSpec::gaussian(1.0);
  std::vector<double> nus;
  ShootingHyper hyper;
  bool hinge = false;
};

Points swiss_roll(const SwissParams& p, std::uint64_t seed, Points& labels) {
  const auto n = static_cast<Eigen::Index>(p.per_arm);
  Points X(2 * n, 2);
  labels.resize(2 * n, 1);
  Rng rng(seed);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double th = n == 1 ? p.theta_min : p.theta_min + (p.theta_max - p.theta_min) * i / (n - 1);
    X(i, 0) = p.scale * th * std::cos(th);
    X(i, 1) = p.scale * th * std::sin(th);
    X(n + i, 0) = -X(i, 0);
    X(n + i, 1) = -X(i, 1);
    labels(i, 0) = 1;
    labels(n + i, 0) = -1;
  }
  if (p.noise > 0)
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      for (Eigen::Index k = 0; k < 2; ++k) X(i, k) += p.noise * rng.normal();
  return X;
}

// Fraction of points whose nugget-free score has the wrong sign (squared
// loss, ±1 labels) or the wrong argmax (hinge, class indices).
double classification_error(const Points& scores, const Points& Y, bool hinge) {
  int wrong = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    if (hinge) {
      Eigen::Index best;
      scores.row(i).maxCoeff(&best);
      wrong += best != static_cast<Eigen::Index>(Y(i, 0));
    } else {
      wrong += scores(i, 0) * Y(i, 0) <= 0;
    }
  }
  return static_cast<double>(wrong) / static_cast<double>(scores.rows());
}

Runner prepare_swissroll(Config& c) {
  SwissParams p;
  p.theta_min = c.get_double("data.theta_min", std::numbers::pi / 2);
  p.theta_max = c.get_double("data.theta_max", 3 * std::numbers::pi);
  p.scale = c.get_double("data.scale", 1.0);
  p.noise = non_negative(c, "data.noise", 0.0);
  p.per_arm = positive(c, "data.points_per_arm", 100);
  p.kernel = read_kernel(c, "kernel", 5.0, 0.1);
  p.nus = read_grid(c, "shooting.nu", {0.01, 0.03, 0.05});
  p.hyper.lambda = non_negative(c, "shooting.lambda", 0.0);
  p.hyper.h = c.get_double("shooting.h", 0.2);
  p.hyper.steps = positive(c, "shooting.steps", 5);
  p.hyper.integrator.scheme = parse_leapfrog_scheme(c.get_string("shooting.scheme", "symmetric"));
  const std::string loss = c.get_string("shooting.loss", "squared");
  if (loss != "squared" && loss != "hinge")
    throw Error(ErrorCode::config, "'shooting.loss' must be squared or hinge (got '" + loss + "')");
  p.hinge = loss == "hinge";
  p.hyper.loss = p.hinge ? LossSpec::hinge(2) : LossSpec::squared();
  p.hyper.hinge_tol = c.get_double("shooting.hinge_tol", 1e-8);
  OptimizerConfig def;
  def.method = OptimizerMethod::lbfgs;
  def.max_iters = 40;
  def.max_backtracks = 20;
  p.hyper.optimizer = read_optimizer(c, def);
  if (!(p.hyper.h > 0)) throw Error(ErrorCode::config, "'shooting.h' must be > 0");

  return [p](const RunContext& ctx) {
    Points pm;
    const Points X = swiss_roll(p, ctx.seed, pm);
    Points Y = pm;
    if (p.hinge) Y = (1.0 - pm.array()) / 2.0;  // +1 → class 0, −1 → class 1
    const RidgeModel baseline = fit_ridge(p.kernel, X, pm, p.hyper.lambda);
    const double ridge_error = classification_error(baseline.evaluate(X), pm, false);

    auto models = run_grid(p.nus.size(), ctx.jobs, [&](std::size_t j) {
      ShootingHyper h = p.hyper;
      h.nu = p.nus[j];
      return shoot(p.kernel, p.kernel, X, Y, h);
    });

    const Eigen::Index N = X.rows(), d = X.cols();
    std::vector<std::string> cols = {"nu", "step", "t", "H"};
    for (const char* v : {"q", "p"})
      for (Eigen::Index i = 0; i < N; ++i)
        for (Eigen::Index k = 0; k < d; ++k) cols.push_back(std::string(v) + "_" + std::to_string(i) + "_" + std::to_string(k));
    CsvWriter traj(ctx, "trajectory.csv", cols);
    CsvWriter mom(ctx, "momenta.csv", {"nu", "index", "label", "p0_norm", "p1_norm", "loss_grad_norm", "flagged"});
    CsvWriter met(ctx, "metrics.csv",
                  {"nu", "mean_displacement", "train_error", "ridge_train_error", "objective", "boundary_residual",
                   "energy_drift", "iterations", "evaluations", "stop_reason"});
    for (std::size_t j = 0; j < models.size(); ++j) {
      const ShootingModel& m = models[j];
      const std::string nu = num(p.nus[j]);
      const auto H = energies(m.trajectory);
      for (std::size_t s = 0; s < m.trajectory.states.size(); ++s) {
        const PhaseState& st = m.trajectory.states[s];
        std::vector<std::string> row = {nu, num(s), num(st.t), num(H[s])};
        for (const Points* P : {&st.q, &st.p})
          for (Eigen::Index i = 0; i < N; ++i)
            for (Eigen::Index k = 0; k < d; ++k) row.push_back(num((*P)(i, k)));
        traj.row(row);
      }
      const auto report = momentum_report(m);
      for (std::size_t i = 0; i < report.size(); ++i) {
        const auto& r = report[i];
        mom.row({nu, num(i), num(pm(static_cast<Eigen::Index>(i), 0)), num(r.p0_norm), num(r.p1_norm),
                 num(r.loss_grad_norm), r.flagged ? "1" : "0"});
      }
      const double err = classification_error(m.readout.evaluate(m.trajectory.terminal().q), Y, p.hinge);
      met.row({nu, num(mean_displacement(m)), num(err), num(ridge_error), num(m.objective), num(m.boundary_residual),
               num(relative_energy_drift(m.trajectory)), num(m.optimizer.iterations), num(m.optimizer.evaluations),
               m.optimizer.stop_reason});
    }
    traj.close();
    mom.close();
    met.close();
    return Files{"trajectory.csv", "momenta.csv", "metrics.csv"};
  };
}

// ---------------------------------------------------------------- 1D data

struct Data1d {
  std::size_t n;
  double sigma_z, frequency;
};

Data1d read_data1d(Config& c, long long n, double sigma) {
  Data1d d;
  d.n = positive(c, "data.n_train", n);
  d.sigma_z = non_negative(c, "data.sigma_z", sigma);
  d.frequency = c.get_double("data.frequency", 20.0);
  return d;
}

// X_i = i/N, Y_i = cos(ωX_i) + σ_z·U[−½, ½]; test points i/N − 1/(2N) with
// clean targets.
void make_data1d(const Data1d& d, std::uint64_t seed, Points& X, Points& Y, Points& xt, Points& yt) {
  const auto n = static_cast<Eigen::Index>(d.n);
  X.resize(n, 1);
  Y.resize(n, 1);
  xt.resize(n, 1);
  yt.resize(n, 1);
  Rng rng(seed);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = static_cast<double>(i + 1) / static_cast<double>(n);
    Y(i, 0) = std::cos(d.frequency * X(i, 0)) + d.sigma_z * rng.uniform(-0.5, 0.5);
    xt(i, 0) = X(i, 0) - 0.5 / static_cast<double>(n);
    yt(i, 0) = std::cos(d.frequency * xt(i, 0));
  }
}

FeatureMapConfig read_map(Config& c, const std::string& prefix, const std::string& act, long long dim) {
  FeatureMapConfig m;
  m.kind = FeatureMap::Kind::random_features;
  m.activation = read_activation(c, "features.activation", act);
  m.feature_dim = static_cast<Eigen::Index>(positive(c, "features." + prefix + "_dim", dim));
  m.weight_scale = c.get_double("features.weight_scale", -1.0);
  m.bias_scale = c.get_double("features.bias_scale", 0.1);
  return m;
}

// ---------------------------------------------------------------- regress1d

Runner prepare_regress1d(Config& c) {
  const Data1d data = read_data1d(c, 100, 0.2);
  GroupHyper g;
  g.layer_map = read_map(c, "layer", "relu", 200);
  g.readout_map = read_map(c, "readout", "relu", 800);
  g.layers = positive(c, "mechanical.layers", 2);
  g.nu = non_negative(c, "mechanical.nu", 0.0);
  ResNetHyper base;
  base.r = non_negative(c, "mechanical.r", 0.0);
  base.rho = non_negative(c, "mechanical.rho", 0.0);
  OptimizerConfig def;
  def.method = OptimizerMethod::lbfgs;
  def.max_iters = 100;
  def.tol = 1e-10;
  base.optimizer = read_optimizer(c, def);
  const std::vector<double> lambdas = read_grid(c, "grid.lambda", {1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0});
  base.groups = {g};

  return [=](const RunContext& ctx) {
    Points X, Y, xt, yt;
    make_data1d(data, ctx.seed, X, Y, xt, yt);
    struct Row {
      double lambda, ridge, mech, ridge_train, mech_train;
      ResNetModel model;
      Points ridge_pred, mech_pred, moved;
    };
    auto rows = run_grid(lambdas.size(), ctx.jobs, [&](std::size_t j) {
      ResNetHyper h = base;
      h.groups[0].lambda = lambdas[j];
      ResNetModel m = train_block(X, Y, h, ctx.seed + 1);
      auto fm = std::make_shared<const FeatureMap>(m.groups[0].readout_map);
      const RidgeModel ridge = fit_ridge(KernelSpec::feature(fm), X, Y, lambdas[j]);
      Row r{lambdas[j], 0, 0, 0, 0, std::move(m), ridge.evaluate(xt), Points(), Points()};
      r.mech_pred = forward(r.model, xt);
      r.moved = deform(r.model, xt);
      r.ridge = rmse(r.ridge_pred, yt);
      r.mech = rmse(r.mech_pred, yt);
      r.ridge_train = rmse(ridge.evaluate(X), Y);
      r.mech_train = rmse(forward(r.model, X), Y);
      return r;
    });
    CsvWriter err(ctx, "errors_vs_lambda.csv",
                  {"lambda", "ridge_rmse", "mechanical_rmse", "ridge_train_rmse", "mechanical_train_rmse",
                   "mechanical_objective", "iterations", "stop_reason"});
    CsvWriter pred(ctx, "predictions.csv", {"lambda", "x", "target", "ridge", "mechanical", "displacement"});
    for (const Row& r : rows) {
      err.row({num(r.lambda), num(r.ridge), num(r.mech), num(r.ridge_train), num(r.mech_train), num(r.model.objective),
               num(r.model.optimizer.iterations), r.model.optimizer.stop_reason});
      for (Eigen::Index i = 0; i < xt.rows(); ++i)
        pred.row({num(r.lambda), num(xt(i, 0)), num(yt(i, 0)), num(r.ridge_pred(i, 0)), num(r.mech_pred(i, 0)),
                  num(r.moved(i, 0) - xt(i, 0))});
    }
    err.close();
    pred.close();
    return Files{"errors_vs_lambda.csv", "predictions.csv"};
  };
}

// ---------------------------------------------------------------- resnet1d

Runner prepare_resnet1d(Config& c) {
  const Data1d data = read_data1d(c, 50, 0.0);
  GroupHyper g;
  g.layer_map = read_map(c, "layer", "tanh", 20);
  g.readout_map = read_map(c, "readout", "tanh", 100);
  g.nu = non_negative(c, "resnet.nu", 0.1);
  g.lambda = non_negative(c, "resnet.lambda", 1e-3);
  ResNetHyper base;
  base.r = non_negative(c, "resnet.r", 0.0);
  base.rho = non_negative(c, "resnet.rho", 0.0);
  base.minibatch = c.get_bool("resnet.minibatch", false);
  base.batch_size = positive(c, "resnet.batch_size", 32);
  base.epochs = positive(c, "resnet.epochs", 100);
  base.learning_rate = c.get_double("resnet.learning_rate", 1e-2);
  OptimizerConfig def;
  def.method = OptimizerMethod::lbfgs;
  def.max_iters = 500;
  def.tol = 1e-8;
  base.optimizer = read_optimizer(c, def);
  const std::vector<long long> layers = c.get_ints("resnet.layers", {4, 8, 16, 32});
  for (long long L : layers)
    if (L < 1) throw Error(ErrorCode::config, "'resnet.layers' entries must be at least 1");
  base.groups = {g};

  return [=](const RunContext& ctx) {
    Points X, Y, xt, yt;
    make_data1d(data, ctx.seed, X, Y, xt, yt);
    auto models = run_grid(layers.size(), ctx.jobs, [&](std::size_t j) {
      ResNetHyper h = base;
      h.groups[0].layers = static_cast<std::size_t>(layers[j]);
      return train_block(X, Y, h, ctx.seed + 1);
    });
    CsvWriter curve(ctx, "training_curve.csv",
                    {"layers", "iteration", "objective", "layer_term", "readout_term", "final_term"});
    CsvWriter energy(ctx, "energies.csv", {"layers", "layer", "raw", "scaled"});
    CsvWriter met(ctx, "metrics.csv",
                  {"layers", "objective", "train_rmse", "test_rmse", "energy_fluctuation",
                   "relative_energy_fluctuation", "iterations", "stop_reason"});
    for (std::size_t j = 0; j < models.size(); ++j) {
      const ResNetModel& m = models[j];
      const std::string L = num(layers[j]);
      if (!m.term_trace.empty()) {
        for (std::size_t k = 0; k < m.term_trace.size(); ++k) {
          const ObjectiveTerms& t = m.term_trace[k];
          curve.row({L, num(k), num(t.total()), num(t.layers), num(t.readouts), num(t.final)});
        }
      } else {
        for (std::size_t k = 0; k < m.trace.size(); ++k) curve.row({L, num(k), num(m.trace[k]), "", "", ""});
      }
      const EnergyProfile e = energy_profile(m);
      for (std::size_t s = 0; s < e.raw[0].size(); ++s) energy.row({L, num(s), num(e.raw[0][s]), num(e.scaled[0][s])});
      met.row({L, num(m.objective), num(rmse(forward(m, X), Y)), num(rmse(forward(m, xt), yt)),
               num(e.fluctuation[0]), num(e.relative_fluctuation[0]), num(m.optimizer.iterations),
               m.optimizer.stop_reason});
    }
    curve.close();
    energy.close();
    met.close();
    return Files{"training_curve.csv", "energies.csv", "metrics.csv"};
  };
}

// ---------------------------------------------------------------- gpflow

Runner prepare_gpflow(Config& c) {
  const auto dim = static_cast<Eigen::Index>(positive(c, "features.input_dim", 2));
  const auto fdim = static_cast<Eigen::Index>(positive(c, "features.feature_dim", 16));
  const Activation act = read_activation(c, "features.activation", "tanh");
  const double ws = c.get_double("features.weight_scale", -1.0);
  const double bs = c.get_double("features.bias_scale", 0.1);
  std::vector<double> start = c.get_doubles("flow.start", std::vector<double>(static_cast<std::size_t>(dim), 0.0));
  if (static_cast<Eigen::Index>(start.size()) != dim)
    throw Error(ErrorCode::config, "'flow.start' must have features.input_dim entries");
  const std::size_t steps = positive(c, "flow.steps", 50);
  const std::size_t paths = positive(c, "flow.paths", 8);
  const std::size_t var_draws = positive(c, "flow.variance_draws", 2000);
  const std::size_t var_steps = positive(c, "flow.variance_steps", 4);
  const std::size_t gp_draws = positive(c, "gp.draws", 2000);
  const std::size_t probes = positive(c, "gp.probe_pairs", 3);

  return [=](const RunContext& ctx) {
    Rng rng(ctx.seed);
    const FeatureMap fm = FeatureMap::random_features(dim, fdim, act, rng, ws, bs);
    const Vector x0 = Eigen::Map<const Vector>(start.data(), dim);
    CsvWriter out(ctx, "gpflow_paths.csv", [&] {
      std::vector<std::string> cols = {"path", "step", "t"};
      for (Eigen::Index k = 0; k < dim; ++k) cols.push_back("z" + std::to_string(k));
      return cols;
    }());
    for (std::size_t s = 0; s < paths; ++s) {
      const Points z = sample_residual_gp_flow(fm, x0, steps, rng.engine()());
      for (Eigen::Index k = 0; k < z.rows(); ++k) {
        std::vector<std::string> row = {num(s), num(k), num(static_cast<double>(k) / static_cast<double>(steps))};
        for (Eigen::Index i = 0; i < dim; ++i) row.push_back(num(z(k, i)));
        out.row(row);
      }
    }
    out.close();

    CsvWriter st(ctx, "gpflow_statistics.csv", {"quantity", "probe", "draws", "empirical", "predicted", "relative_error"});
    // First Euler-Maruyama increment: E|Δz|² = Δt·Tr K(x0,x0) = Δt·d·|φ(x0)|².
    double acc = 0;
    for (std::size_t s = 0; s < var_draws; ++s) {
      const Points z = sample_residual_gp_flow(fm, x0, var_steps, rng.engine()());
      acc += (z.row(1) - z.row(0)).squaredNorm();
    }
    const double emp = acc / static_cast<double>(var_draws);
    const double pred = static_cast<double>(dim) * fm.apply(x0).squaredNorm() / static_cast<double>(var_steps);
    st.row({"increment_second_moment", "0", num(var_draws), num(emp), num(pred), num(std::abs(emp - pred) / pred)});
    // Scalar GP draws ξ = αφ: E[ξ(x)ξ(x')] = φ(x)ᵀφ(x').
    std::vector<std::pair<Vector, Vector>> pairs;
    for (std::size_t k = 0; k < probes; ++k) {
      Vector a(dim), b(dim);
      for (Eigen::Index i = 0; i < dim; ++i) a(i) = rng.uniform(-1, 1);
      for (Eigen::Index i = 0; i < dim; ++i) b(i) = rng.uniform(-1, 1);
      pairs.emplace_back(a, b);
    }
    std::vector<double> sums(probes, 0.0);
    for (std::size_t s = 0; s < gp_draws; ++s) {
      const GpSample xi = sample_gp(fm, std::nullopt, 1, rng.engine()());
      for (std::size_t k = 0; k < probes; ++k) sums[k] += xi(pairs[k].first)(0) * xi(pairs[k].second)(0);
    }
    for (std::size_t k = 0; k < probes; ++k) {
      const double e = sums[k] / static_cast<double>(gp_draws);
      const double p = fm.apply(pairs[k].first).dot(fm.apply(pairs[k].second));
      st.row({"gp_covariance", num(k), num(gp_draws), num(e), num(p), num(std::abs(e - p) / std::abs(p))});
    }
    st.close();
    return Files{"gpflow_paths.csv", "gpflow_statistics.csv"};
  };
}

// ---------------------------------------------------------------- remdemo

struct RemParams {
  int height, width, stride_y, stride_x, patch_h, patch_w;
  double bandwidth, nugget, lambda, noise;
  std::size_t train_per_class, test_per_class;
  std::string train_csv, test_csv;
};

// Class 0: horizontal bar of three pixels; class 1: vertical bar. Each image
// places the bar at a uniformly random periodic offset over Gaussian noise.
GridImages synthetic_images(const RemParams& p, std::size_t per_class, Rng& rng) {
  GridImages g;
  g.height = p.height;
  g.width = p.width;
  g.channels = 1;
  const int HW = p.height * p.width;
  g.images.resize(static_cast<Eigen::Index>(2 * per_class), HW);
  for (std::size_t n = 0; n < 2 * per_class; ++n) {
    const int label = static_cast<int>(n % 2);
    const auto row = static_cast<Eigen::Index>(n);
    for (int k = 0; k < HW; ++k) g.images(row, k) = p.noise * rng.normal();
    const int y0 = static_cast<int>(rng.index(static_cast<std::size_t>(p.height)));
    const int x0 = static_cast<int>(rng.index(static_cast<std::size_t>(p.width)));
    for (int t = 0; t < 3; ++t) {
      const int y = label == 0 ? y0 : (y0 + t) % p.height;
      const int x = label == 0 ? (x0 + t) % p.width : x0;
      g.images(row, y * p.width + x) += 1.0;
    }
    g.labels.push_back(label);
  }
  return g;
}

Runner prepare_remdemo(Config& c) {
  RemParams p;
  p.height = static_cast<int>(positive(c, "grid.height", 8));
  p.width = static_cast<int>(positive(c, "grid.width", 8));
  p.stride_y = static_cast<int>(positive(c, "grid.stride_y", 1));
  p.stride_x = static_cast<int>(positive(c, "grid.stride_x", 1));
  p.patch_h = static_cast<int>(positive(c, "rem.patch_height", 3));
  p.patch_w = static_cast<int>(positive(c, "rem.patch_width", 3));
  p.bandwidth = c.get_double("rem.bandwidth", 2.0);
  p.nugget = non_negative(c, "rem.nugget", 1e-2);
  p.lambda = non_negative(c, "rem.lambda", 1e-3);
  p.noise = non_negative(c, "data.noise", 0.1);
  p.train_per_class = positive(c, "data.train_per_class", 8);
  p.test_per_class = positive(c, "data.test_per_class", 8);
  p.train_csv = c.get_string("data.train_csv", "");
  p.test_csv = c.get_string("data.test_csv", "");
  if (!(p.bandwidth > 0)) throw Error(ErrorCode::config, "'rem.bandwidth' must be > 0");
  if (p.lambda + p.nugget <= 0) throw Error(ErrorCode::config, "'rem.lambda' + 'rem.nugget' must be > 0");
  if (p.train_csv.empty() != p.test_csv.empty())
    throw Error(ErrorCode::config, "'data.train_csv' and 'data.test_csv' must be given together");
  GridImages probe_train, probe_test;
  if (!p.train_csv.empty()) {
    probe_train = read_grid_csv(p.train_csv);
    probe_test = read_grid_csv(p.test_csv);
    if (probe_test.height != probe_train.height || probe_test.width != probe_train.width ||
        probe_test.channels != probe_train.channels)
      throw Error(ErrorCode::config, "train and test image files must share H, W and channels");
    p.height = probe_train.height;
    p.width = probe_train.width;
  }

  return [=](const RunContext& ctx) {
    Rng rng(ctx.seed);
    const GridImages train = p.train_csv.empty() ? synthetic_images(p, p.train_per_class, rng) : probe_train;
    const GridImages test = p.test_csv.empty() ? synthetic_images(p, p.test_per_class, rng) : probe_test;
    const int ch = train.channels;
    for (int l : train.labels)
      if (l != 0 && l != 1) throw Error(ErrorCode::config, "remdemo expects labels 0 and 1");

    const auto group = GroupSpec::translations(p.height, p.width, p.stride_y, p.stride_x);
    const auto base = KernelSpec::gaussian(p.bandwidth);
    const auto patch = rect_mask(group, 0, 0, p.patch_h, p.patch_w);
    auto spec = std::make_shared<const RemSpec>(group, patch, std::vector<int>{0}, base, ch, 1);
    const KernelSpec kernel = KernelSpec::rem(spec, p.nugget);
    const Eigen::Index HW = group.pixels();

    auto targets = [&](const GridImages& g) {
      Points Y(g.images.rows(), HW);
      for (Eigen::Index i = 0; i < Y.rows(); ++i) Y.row(i).setConstant(g.labels[static_cast<std::size_t>(i)] ? -1.0 : 1.0);
      return Y;
    };
    // Invariant readout: the class is the sign of the mean output pixel.
    auto accuracy = [](const Vector& score, const std::vector<int>& labels) {
      int ok = 0;
      for (Eigen::Index i = 0; i < score.size(); ++i) ok += (score(i) > 0) == (labels[static_cast<std::size_t>(i)] == 0);
      return static_cast<double>(ok) / static_cast<double>(score.size());
    };

    const RidgeModel model = fit_ridge(kernel, train.images, targets(train), p.lambda);
    const Vector train_score = model.evaluate(train.images).rowwise().mean();
    const Points f_test = model.evaluate(test.images);
    const Vector test_score = f_test.rowwise().mean();

    // f(gx) = g·f(x) and agreement of the predicted class under every translation.
    double interp = 0;
    int disagree = 0;
    for (Eigen::Index i = 0; i < test.images.rows(); ++i) {
      Points moved(static_cast<Eigen::Index>(group.size()), test.images.cols());
      for (std::size_t g = 0; g < group.size(); ++g)
        moved.row(static_cast<Eigen::Index>(g)) = group.act(g, test.images.row(i).transpose(), ch).transpose();
      const Points fg = model.evaluate(moved);
      for (std::size_t g = 0; g < group.size(); ++g) {
        const Vector expect = group.act(g, f_test.row(i).transpose(), 1);
        interp = std::max(interp, (fg.row(static_cast<Eigen::Index>(g)).transpose() - expect).cwiseAbs().maxCoeff());
        disagree += (fg.row(static_cast<Eigen::Index>(g)).mean() > 0) != (test_score(i) > 0);
      }
    }

    // C(gx, g'x') = g C(x,x') g'ᵀ over all pairs, for the first two training images.
    const Vector xa = train.images.row(0).transpose(), xb = train.images.row(1).transpose();
    const Matrix C0 = rem_kernel_eval(*spec, xa, xb);
    double kres = 0;
    for (std::size_t g = 0; g < group.size(); ++g) {
      const Vector ga = group.act(g, xa, ch);
      const Permutation& pg = group.element(g);
      for (std::size_t h = 0; h < group.size(); ++h) {
        const Matrix C = rem_kernel_eval(*spec, ga, group.act(h, xb, ch));
        const Permutation& ph = group.element(h);
        for (Eigen::Index a = 0; a < HW; ++a)
          for (Eigen::Index b = 0; b < HW; ++b)
            kres = std::max(kres, std::abs(C(a, b) - C0(pg[static_cast<std::size_t>(a)], ph[static_cast<std::size_t>(b)])));
      }
    }

    // Feature map with identity activation against direct periodic
    // cross-correlation, on the same grid and patch (full translation group).
    double conv = 0;
    {
      const auto full = GroupSpec::translations(p.height, p.width);
      RemSpec cs(full, rect_mask(full, 0, 0, p.patch_h, p.patch_w), {0}, base, 1, 1);
      const int P = p.patch_h * p.patch_w;
      Matrix w(1, P + 1);
      for (int k = 0; k <= P; ++k) w(0, k) = rng.normal();
      Vector img(HW);
      for (Eigen::Index k = 0; k < HW; ++k) img(k) = rng.normal();
      const Vector got = rem_feature_apply(cs, Activation::identity(), w, img);
      for (int y = 0; y < p.height; ++y)
        for (int x = 0; x < p.width; ++x) {
          double acc = w(0, P);
          for (int i = 0; i < p.patch_h; ++i)
            for (int j = 0; j < p.patch_w; ++j)
              acc += w(0, i * p.patch_w + j) * img(((y + i) % p.height) * p.width + (x + j) % p.width);
          conv = std::max(conv, std::abs(got(y * p.width + x) - acc / static_cast<double>(HW)));
        }
    }

    // Trivial group: the REM kernel is the base kernel on the patch at the origin.
    const auto trivial = GroupSpec::trivial(p.height, p.width);
    auto tspec = std::make_shared<const RemSpec>(trivial, rect_mask(trivial, 0, 0, p.patch_h, p.patch_w),
                                                 std::vector<int>{0}, base, ch, 1);
    const RidgeModel tmodel = fit_ridge(KernelSpec::rem(tspec, p.nugget), train.images, targets(train), p.lambda);
    auto patches = [&](const Points& imgs) {
      Points out(imgs.rows(), tspec->patch_dim());
      for (Eigen::Index i = 0; i < imgs.rows(); ++i) out.row(i) = tspec->project_patch(0, imgs.row(i).transpose()).transpose();
      return out;
    };
    Points ytrain(train.images.rows(), 1);
    for (Eigen::Index i = 0; i < ytrain.rows(); ++i) ytrain(i, 0) = train.labels[static_cast<std::size_t>(i)] ? -1.0 : 1.0;
    const RidgeModel plain = fit_ridge(KernelSpec::gaussian(p.bandwidth, p.nugget), patches(train.images), ytrain, p.lambda);
    const Vector t_score = tmodel.evaluate(test.images).col(0);
    const Vector p_score = plain.evaluate(patches(test.images)).col(0);
    const double triv_res = (t_score - p_score).cwiseAbs().maxCoeff();
    const double acc_t = accuracy(t_score, test.labels), acc_p = accuracy(p_score, test.labels);

    CsvWriter rep(ctx, "equivariance_report.csv", {"check", "value", "tolerance", "pass"});
    auto check = [&](const std::string& name, double v, double tol) {
      rep.row({name, num(v), num(tol), v <= tol ? "true" : "false"});
    };
    auto info = [&](const std::string& name, double v) { rep.row({name, num(v), "", "info"}); };
    check("kernel_equivariance_residual", kres, 1e-12);
    check("feature_map_convolution_residual", conv, 1e-12);
    check("interpolant_equivariance_residual", interp, 1e-12);
    check("translated_prediction_disagreements", disagree, 0);
    check("trivial_group_vs_patch_kernel_residual", triv_res, 1e-8);
    check("trivial_group_vs_patch_kernel_accuracy_gap", std::abs(acc_t - acc_p), 0);
    info("train_accuracy", accuracy(train_score, train.labels));
    info("test_accuracy", accuracy(test_score, test.labels));
    info("trivial_group_test_accuracy", acc_t);
    info("patch_kernel_test_accuracy", acc_p);
    info("group_size", static_cast<double>(group.size()));
    rep.close();
    return Files{"equivariance_report.csv"};
  };
}

// ---------------------------------------------------------------- dispatch

using Preparer = Runner (*)(Config&);

const std::map<std::string, Preparer>& registry() {
  static const std::map<std::string, Preparer> r = {
      {"swissroll", prepare_swissroll}, {"regress1d", prepare_regress1d}, {"resnet1d", prepare_resnet1d},
      {"gpflow", prepare_gpflow},       {"remdemo", prepare_remdemo},
  };
  return r;
}

struct Prepared {
  Config config;
  RunContext ctx;
  Runner runner;
};

Prepared prepare(const std::string& command, const std::string& config_path, const std::vector<std::string>& overrides) {
  auto it = registry().find(command);
  if (it == registry().end()) throw Error(ErrorCode::config, "unknown command '" + command + "'");
  Prepared p{config_path.empty() ? Config() : Config::parse_file(config_path), RunContext{}, Runner{}};
  for (const auto& o : overrides) p.config.set_override(o);
  Config& c = p.config;
  p.ctx.command = command;
  const long long seed = c.get_int("run.seed", 1);
  if (seed < 0) throw Error(ErrorCode::config, "'run.seed' must be >= 0");
  p.ctx.seed = static_cast<std::uint64_t>(seed);
  p.ctx.output_dir = c.get_string("run.output_dir", "out/" + command);
  p.ctx.jobs = static_cast<int>(c.get_int("run.jobs", 1));
  if (p.ctx.jobs < 0) throw Error(ErrorCode::config, "'run.jobs' must be >= 0");
  c.exclude_from_hash("run.output_dir");
  c.exclude_from_hash("run.jobs");
  p.runner = it->second(c);
  c.reject_unused();
  p.ctx.config_hash = c.hash(command);
  return p;
}

}  // namespace

std::vector<std::string> command_names() {
  std::vector<std::string> out;
  for (const auto& [k, v] : registry()) out.push_back(k);
  return out;
}

std::vector<std::string> run_command(const std::string& command, const std::string& config_path,
                                     const std::vector<std::string>& overrides) {
  Prepared p = prepare(command, config_path, overrides);
  ensure_directory(p.ctx.output_dir);
  Files files = p.runner(p.ctx);
  for (auto& f : files) f = p.ctx.output_dir + "/" + f;
  return files;
}

std::string resolved_config(const std::string& command, const std::string& config_path,
                            const std::vector<std::string>& overrides) {
  Prepared p = prepare(command, config_path, overrides);
  return header_block(p.ctx) + p.config.canonical();
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::non_finite:
    case ErrorCode::singular:
    case ErrorCode::divergence:
      return exit_numerical;
    default:
      return exit_config;
  }
}

int run_cli(std::vector<std::string> args) {
  CLI::App app{"mechreg: mechanical regression experiments"};
  app.set_version_flag("--version", version_string);
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> overrides;
  bool print_config = false;
  for (const auto& name : command_names()) {
    CLI::App* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", config_path, "config file (section/key = value)")->check(CLI::ExistingFile);
    sub->add_flag("--print-config", print_config, "print the resolved configuration and exit");
    sub->add_option("overrides", overrides, "section.key=value overrides");
  }
  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_config;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (print_config) {
      std::cout << resolved_config(command, config_path, overrides);
      return exit_ok;
    }
    for (const auto& f : run_command(command, config_path, overrides)) std::cout << "wrote " << f << "\n";
    return exit_ok;
  } catch (const Error& e) {
    std::cerr << "mechreg " << command << ": " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "mechreg " << command << ": " << e.what() << "\n";
    return exit_numerical;
  }
}

}  // namespace mechreg::cli
