#include "mechreg/resnet.hpp"

#include "mechreg/kernel.hpp"
#include "mechreg/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mechreg {

namespace {

FeatureMap build_map(const FeatureMapConfig& c, Eigen::Index input_dim, Rng& rng) {
  switch (c.kind) {
    case FeatureMap::Kind::activation_identity:
      return FeatureMap::activation_identity(c.activation, input_dim);
    case FeatureMap::Kind::random_features:
      require(c.feature_dim > 0, ErrorCode::config, "random feature map needs feature_dim > 0");
      return FeatureMap::random_features(input_dim, c.feature_dim, c.activation, rng, c.weight_scale, c.bias_scale);
    case FeatureMap::Kind::custom:
      break;
  }
  throw Error(ErrorCode::config, "feature map kind cannot be built from a config");
}

bool last_group(const ResNetModel& m, std::size_t g) { return g + 1 == m.groups.size(); }

// Position of every trainable block inside the flat parameter vector.
struct Layout {
  struct Group {
    std::vector<Eigen::Index> w, z;
    Eigen::Index readout = -1, readout_slack = -1;
  };
  std::vector<Group> groups;
  Eigen::Index size = 0;
};

bool has_layer_slack(const ResNetHyper& h) { return h.r > 0; }
bool has_readout_slack(const ResNetHyper& h) { return h.rho > 0; }
bool readout_trainable(const ResNetModel& m, std::size_t g) {
  return !last_group(m, g) && !m.hyper.groups[g].frozen_readout;
}

Layout make_layout(const ResNetModel& m, Eigen::Index n) {
  Layout L;
  for (std::size_t g = 0; g < m.groups.size(); ++g) {
    const ResNetGroup& G = m.groups[g];
    Layout::Group lg;
    for (const Matrix& w : G.w) {
      lg.w.push_back(L.size);
      L.size += w.size();
    }
    if (has_layer_slack(m.hyper)) {
      const Eigen::Index d = G.layer_map.input_dim();
      for (std::size_t s = 0; s < G.w.size(); ++s) {
        lg.z.push_back(L.size);
        L.size += n * d;
      }
    }
    if (readout_trainable(m, g)) {
      lg.readout = L.size;
      L.size += G.readout.size();
    }
    if (!last_group(m, g) && has_readout_slack(m.hyper)) {
      lg.readout_slack = L.size;
      L.size += n * G.readout.rows();
    }
    L.groups.push_back(std::move(lg));
  }
  return L;
}

// Matrices are stored row-major in the vector, matching flatten().
void put(Vector& v, Eigen::Index off, const Matrix& M) { v.segment(off, M.size()) = flatten(M); }
Matrix get(const Vector& v, Eigen::Index off, Eigen::Index rows, Eigen::Index cols) {
  return unflatten(v.segment(off, rows * cols), rows, cols);
}

Vector pack(const ResNetModel& m, const Layout& L) {
  Vector v = Vector::Zero(L.size);
  for (std::size_t g = 0; g < m.groups.size(); ++g) {
    const ResNetGroup& G = m.groups[g];
    const Layout::Group& lg = L.groups[g];
    for (std::size_t s = 0; s < G.w.size(); ++s) put(v, lg.w[s], G.w[s]);
    for (std::size_t s = 0; s < lg.z.size(); ++s) put(v, lg.z[s], G.slacks[s]);
    if (lg.readout >= 0) put(v, lg.readout, G.readout);
    if (lg.readout_slack >= 0) put(v, lg.readout_slack, G.readout_slack);
  }
  return v;
}

void unpack(ResNetModel& m, const Layout& L, const Vector& v, Eigen::Index n) {
  for (std::size_t g = 0; g < m.groups.size(); ++g) {
    ResNetGroup& G = m.groups[g];
    const Layout::Group& lg = L.groups[g];
    const Eigen::Index d = G.layer_map.input_dim();
    for (std::size_t s = 0; s < G.w.size(); ++s) G.w[s] = get(v, lg.w[s], G.w[s].rows(), G.w[s].cols());
    G.slacks.clear();
    for (std::size_t s = 0; s < lg.z.size(); ++s) G.slacks.push_back(get(v, lg.z[s], n, d));
    if (lg.readout >= 0) G.readout = get(v, lg.readout, G.readout.rows(), G.readout.cols());
    if (lg.readout_slack >= 0) G.readout_slack = get(v, lg.readout_slack, n, G.readout.rows());
  }
}

void ensure_slacks(ResNetModel& m, Eigen::Index n) {
  for (std::size_t g = 0; g < m.groups.size(); ++g) {
    ResNetGroup& G = m.groups[g];
    const Eigen::Index d = G.layer_map.input_dim();
    if (has_layer_slack(m.hyper)) {
      if (G.slacks.size() != G.w.size() || (G.w.size() && G.slacks[0].rows() != n))
        G.slacks.assign(G.w.size(), Points::Zero(n, d));
    } else {
      G.slacks.clear();
    }
    if (!last_group(m, g) && has_readout_slack(m.hyper)) {
      if (G.readout_slack.rows() != n) G.readout_slack = Points::Zero(n, G.readout.rows());
    } else {
      G.readout_slack.resize(0, 0);
    }
  }
}

struct Eliminated {
  double value = 0.0;
  Matrix R;  // (K₂ + (λ+ρ)I)⁻¹Y
};

// min over (w̃, Y') of λ(‖w̃‖² + ‖w̃Φ − Y'‖²/ρ) + ‖Y' − Y‖² = λYᵀ(ΦΦᵀ + (λ+ρ)I)⁻¹Y.
Eliminated eliminate_readout(const Matrix& Phi, const Points& Y, double lambda, double rho) {
  const double shift = lambda + rho;
  require(shift > 0 || Phi.rows() <= Phi.cols(), ErrorCode::invalid_argument,
          "last readout needs lambda + rho > 0 when features are fewer than samples");
  Matrix K = Phi * Phi.transpose();
  K.diagonal().array() += shift;
  SpdSolver solver(K);
  Eliminated e;
  e.R = solver.solve(Y);
  e.value = (lambda > 0 ? lambda : 1.0) * (Y.array() * e.R.array()).sum();
  return e;
}

double layer_weight(const ResNetModel& m, std::size_t g) {
  return m.hyper.groups[g].nu * static_cast<double>(m.groups[g].w.size());
}

struct Evaluation {
  ObjectiveTerms terms;
  Vector grad;
  Matrix last_readout;
};

// Objective with the last readout eliminated, and its gradient in layout order.
Evaluation evaluate(const ResNetModel& m, const Layout& L, const Points& X, const Points& Y, bool want_grad) {
  const ResNetHyper& hp = m.hyper;
  const std::size_t D = m.groups.size();
  Evaluation ev;
  // Forward, storing every layer input.
  std::vector<std::vector<Points>> qs(D);
  std::vector<std::vector<Matrix>> phis(D);
  std::vector<Matrix> readout_phis(D);
  Points q = X;
  for (std::size_t g = 0; g < D; ++g) {
    const ResNetGroup& G = m.groups[g];
    const GroupHyper& gh = hp.groups[g];
    const double a = layer_weight(m, g);
    for (std::size_t s = 0; s < G.w.size(); ++s) {
      qs[g].push_back(q);
      phis[g].push_back(G.layer_map.apply_rows(q));
      ev.terms.layers += 0.5 * a * G.w[s].squaredNorm();
      q = q + phis[g][s] * G.w[s].transpose();
      if (!G.slacks.empty()) {
        q += G.slacks[s];
        ev.terms.layers += 0.5 * a * G.slacks[s].squaredNorm() / hp.r;
      }
    }
    qs[g].push_back(q);
    readout_phis[g] = G.readout_map.apply_rows(q);
    if (!last_group(m, g)) {
      ev.terms.readouts += gh.lambda * G.readout.squaredNorm();
      q = readout_phis[g] * G.readout.transpose();
      if (G.readout_slack.size()) {
        q += G.readout_slack;
        ev.terms.readouts += gh.lambda * G.readout_slack.squaredNorm() / hp.rho;
      }
    }
    if (!q.allFinite()) throw Error(ErrorCode::non_finite, "ResNet forward pass produced non-finite values");
  }
  const GroupHyper& last = hp.groups.back();
  Eliminated e = eliminate_readout(readout_phis[D - 1], Y, last.lambda, hp.rho);
  ev.terms.final = e.value;
  ev.last_readout = e.R.transpose() * readout_phis[D - 1];
  if (!want_grad) return ev;

  ev.grad = Vector::Zero(L.size);
  const double c = last.lambda > 0 ? last.lambda : 1.0;
  // ∂/∂Φ of cYᵀ(ΦΦᵀ + shift·I)⁻¹Y is −2c R RᵀΦ.
  Matrix dPhi = -2.0 * c * e.R * (e.R.transpose() * readout_phis[D - 1]);
  Points G_q = m.groups[D - 1].readout_map.pullback(qs[D - 1].back(), dPhi);
  for (std::size_t g = D; g-- > 0;) {
    const ResNetGroup& G = m.groups[g];
    const GroupHyper& gh = hp.groups[g];
    const Layout::Group& lg = L.groups[g];
    if (!last_group(m, g)) {
      // G_q is the cotangent of q^{g+1,1} = Φ' w̃ᵀ + z̃.
      if (lg.readout >= 0)
        put(ev.grad, lg.readout, Matrix(G_q.transpose() * readout_phis[g] + 2.0 * gh.lambda * G.readout));
      if (lg.readout_slack >= 0)
        put(ev.grad, lg.readout_slack, Matrix(G_q + 2.0 * gh.lambda * G.readout_slack / hp.rho));
      G_q = G.readout_map.pullback(qs[g].back(), G_q * G.readout);
    }
    const double a = layer_weight(m, g);
    for (std::size_t s = G.w.size(); s-- > 0;) {
      put(ev.grad, lg.w[s], Matrix(G_q.transpose() * phis[g][s] + a * G.w[s]));
      if (!lg.z.empty()) put(ev.grad, lg.z[s], Matrix(G_q + a * G.slacks[s] / hp.r));
      G_q = G_q + G.layer_map.pullback(qs[g][s], G_q * G.w[s]);
    }
  }
  return ev;
}

void check_hyper(const ResNetHyper& h) {
  require(!h.groups.empty(), ErrorCode::config, "ResNet needs at least one group");
  require(std::isfinite(h.r) && h.r >= 0, ErrorCode::config, "r must be nonnegative");
  require(std::isfinite(h.rho) && h.rho >= 0, ErrorCode::config, "rho must be nonnegative");
  for (std::size_t g = 0; g < h.groups.size(); ++g) {
    const GroupHyper& gh = h.groups[g];
    require(gh.layers >= 1, ErrorCode::config, "each group needs at least one layer");
    require(std::isfinite(gh.nu) && gh.nu >= 0, ErrorCode::config, "nu must be nonnegative");
    require(std::isfinite(gh.lambda) && gh.lambda >= 0, ErrorCode::config, "lambda must be nonnegative");
    if (g + 1 < h.groups.size())
      require(gh.output_dim > 0, ErrorCode::config, "intermediate groups need output_dim > 0");
  }
}

void check_data(const ResNetModel& m, const Points& X, const Points& Y) {
  require(X.rows() >= 1 && X.rows() == Y.rows(), ErrorCode::dimension_mismatch,
          "X and Y need the same, nonzero, number of rows");
  require(X.cols() == m.groups.front().layer_map.input_dim(), ErrorCode::dimension_mismatch,
          "X has the wrong dimension for this model");
  require(Y.cols() == m.groups.back().readout.rows(), ErrorCode::dimension_mismatch,
          "Y has the wrong dimension for this model");
  require_finite(X, "X");
  require_finite(Y, "Y");
}

void finish(ResNetModel& m, const Points& X, const Points& Y) {
  Layout L = make_layout(m, X.rows());
  Evaluation ev = evaluate(m, L, X, Y, false);
  m.groups.back().readout = ev.last_readout;
  m.objective = ev.terms.total();
}

void train_full_batch(ResNetModel& m, const Points& X, const Points& Y) {
  const Eigen::Index n = X.rows();
  Layout L = make_layout(m, n);
  ResNetModel work = m;
  Objective f = [&](const Vector& v, Vector* g) {
    unpack(work, L, v, n);
    Evaluation ev = evaluate(work, L, X, Y, g != nullptr);
    if (g) *g = std::move(ev.grad);
    return ev.terms.total();
  };
  OptimizerConfig cfg = m.hyper.optimizer;
  m.term_trace.clear();
  ResNetModel probe = m;
  cfg.on_iterate = [&](int it, const Vector& v, double value) {
    if (m.hyper.optimizer.on_iterate) m.hyper.optimizer.on_iterate(it, v, value);
    unpack(probe, L, v, n);
    m.term_trace.push_back(evaluate(probe, L, X, Y, false).terms);
  };
  m.optimizer = minimize(f, pack(m, L), cfg);
  unpack(m, L, m.optimizer.x, n);
  m.trace = m.optimizer.trace;
}

// Plain SGD on row batches. Weights move every step; only the slack rows of
// the sampled batch are touched.
void train_minibatch(ResNetModel& m, const Points& X, const Points& Y, std::uint64_t seed) {
  const Eigen::Index n = X.rows();
  const auto batch = static_cast<Eigen::Index>(std::min<std::size_t>(m.hyper.batch_size, n));
  require(batch >= 1 && m.hyper.learning_rate > 0, ErrorCode::config, "minibatch needs batch_size and learning_rate");
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  m.trace.clear();
  for (std::size_t epoch = 0; epoch < m.hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (Eigen::Index start = 0; start < n; start += batch) {
      const Eigen::Index b = std::min(batch, n - start);
      Points Xb(b, X.cols()), Yb(b, Y.cols());
      for (Eigen::Index i = 0; i < b; ++i) {
        Xb.row(i) = X.row(order[static_cast<std::size_t>(start + i)]);
        Yb.row(i) = Y.row(order[static_cast<std::size_t>(start + i)]);
      }
      ResNetModel sub = m;
      for (std::size_t g = 0; g < m.groups.size(); ++g) {
        auto& G = sub.groups[g];
        for (std::size_t s = 0; s < G.slacks.size(); ++s) {
          Points zb(b, G.slacks[s].cols());
          for (Eigen::Index i = 0; i < b; ++i) zb.row(i) = m.groups[g].slacks[s].row(order[start + i]);
          G.slacks[s] = zb;
        }
        if (G.readout_slack.size()) {
          Points zb(b, G.readout_slack.cols());
          for (Eigen::Index i = 0; i < b; ++i) zb.row(i) = m.groups[g].readout_slack.row(order[start + i]);
          G.readout_slack = zb;
        }
      }
      Layout L = make_layout(sub, b);
      Evaluation ev = evaluate(sub, L, Xb, Yb, true);
      Vector v = pack(sub, L) - m.hyper.learning_rate * ev.grad;
      unpack(sub, L, v, b);
      for (std::size_t g = 0; g < m.groups.size(); ++g) {
        auto& G = m.groups[g];
        G.w = sub.groups[g].w;
        G.readout = sub.groups[g].readout;
        for (std::size_t s = 0; s < G.slacks.size(); ++s)
          for (Eigen::Index i = 0; i < b; ++i) G.slacks[s].row(order[start + i]) = sub.groups[g].slacks[s].row(i);
        if (G.readout_slack.size())
          for (Eigen::Index i = 0; i < b; ++i)
            G.readout_slack.row(order[start + i]) = sub.groups[g].readout_slack.row(i);
      }
    }
    Layout L = make_layout(m, n);
    m.trace.push_back(evaluate(m, L, X, Y, false).terms.total());
    if (!std::isfinite(m.trace.back()))
      throw Error(ErrorCode::divergence, "minibatch training diverged at epoch " + std::to_string(epoch));
  }
}

}  // namespace

Points deform(const ResNetModel& model, const Points& x, std::size_t group) {
  require(group < model.groups.size(), ErrorCode::invalid_argument, "group index out of range");
  Points q = x;
  for (std::size_t g = 0; g <= group; ++g) {
    const ResNetGroup& G = model.groups[g];
    for (const Matrix& w : G.w) q = q + G.layer_map.apply_rows(q) * w.transpose();
    if (g < group) q = G.readout_map.apply_rows(q) * G.readout.transpose();
  }
  return q;
}

Points forward(const ResNetModel& model, const Points& x) {
  require(!model.groups.empty(), ErrorCode::invalid_argument, "empty model");
  const std::size_t last = model.groups.size() - 1;
  const Points q = deform(model, x, last);
  return model.groups[last].readout_map.apply_rows(q) * model.groups[last].readout.transpose();
}

ResNetModel init_model(Eigen::Index input_dim, Eigen::Index output_dim, const ResNetHyper& hyper,
                       std::uint64_t seed) {
  check_hyper(hyper);
  require(input_dim > 0 && output_dim > 0, ErrorCode::invalid_argument, "model dimensions must be positive");
  Rng rng(seed);
  ResNetModel m;
  m.hyper = hyper;
  Eigen::Index d = input_dim;
  for (std::size_t g = 0; g < hyper.groups.size(); ++g) {
    const GroupHyper& gh = hyper.groups[g];
    const Eigen::Index next = g + 1 == hyper.groups.size() ? output_dim : gh.output_dim;
    FeatureMap lm = build_map(gh.layer_map, d, rng);
    FeatureMap rm = build_map(gh.readout_map, d, rng);
    ResNetGroup G{lm, rm, std::vector<Matrix>(gh.layers, Matrix::Zero(d, lm.feature_dim())),
                  Matrix::Zero(next, rm.feature_dim()), {}, Points()};
    if (gh.frozen_readout) {
      require(g + 1 < hyper.groups.size(), ErrorCode::config, "only intermediate readouts can be frozen");
      require(gh.frozen_readout->rows() == next && gh.frozen_readout->cols() == rm.feature_dim(),
              ErrorCode::dimension_mismatch, "frozen readout has the wrong shape");
      G.readout = *gh.frozen_readout;
    }
    m.groups.push_back(std::move(G));
    d = next;
  }
  return m;
}

ObjectiveTerms training_objective(const ResNetModel& model, const Points& X, const Points& Y) {
  check_data(model, X, Y);
  ResNetModel m = model;
  ensure_slacks(m, X.rows());
  Layout L = make_layout(m, X.rows());
  return evaluate(m, L, X, Y, false).terms;
}

void train(ResNetModel& model, const Points& X, const Points& Y, std::uint64_t seed) {
  check_hyper(model.hyper);
  check_data(model, X, Y);
  ensure_slacks(model, X.rows());
  if (model.hyper.minibatch)
    train_minibatch(model, X, Y, seed);
  else
    train_full_batch(model, X, Y);
  finish(model, X, Y);
}

ResNetModel train_block(const Points& X, const Points& Y, const ResNetHyper& hyper, std::uint64_t seed) {
  require(hyper.groups.size() == 1, ErrorCode::config, "train_block expects exactly one group");
  ResNetModel m = init_model(X.cols(), Y.cols(), hyper, seed);
  train(m, X, Y, seed);
  return m;
}

ResNetModel train_deep(const Points& X, const Points& Y, const ResNetHyper& hyper, std::uint64_t seed) {
  require(hyper.groups.size() >= 2, ErrorCode::config, "train_deep expects at least two groups");
  ResNetModel m = init_model(X.cols(), Y.cols(), hyper, seed);
  train(m, X, Y, seed);
  return m;
}

EnergyProfile energy_profile(const ResNetModel& model) {
  EnergyProfile e;
  for (const ResNetGroup& G : model.groups) {
    const double L = static_cast<double>(G.w.size());
    std::vector<double> raw, scaled;
    for (std::size_t s = 0; s < G.w.size(); ++s) {
      double v = 0.5 * G.w[s].squaredNorm();
      if (model.hyper.r > 0 && s < G.slacks.size()) v += 0.5 * G.slacks[s].squaredNorm() / model.hyper.r;
      raw.push_back(v);
      scaled.push_back(v * L * L);
    }
    double fl = 0, mean = 0;
    if (!scaled.empty()) {
      auto [lo, hi] = std::minmax_element(scaled.begin(), scaled.end());
      fl = *hi - *lo;
      mean = std::accumulate(scaled.begin(), scaled.end(), 0.0) / static_cast<double>(scaled.size());
    }
    e.raw.push_back(std::move(raw));
    e.scaled.push_back(std::move(scaled));
    e.fluctuation.push_back(fl);
    e.relative_fluctuation.push_back(mean > 0 ? fl / mean : 0.0);
  }
  return e;
}

}  // namespace mechreg
