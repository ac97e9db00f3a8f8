#include "mechreg/optimize.hpp"

#include "mechreg/serialize.hpp"

#include <cmath>
#include <deque>
#include <sstream>

namespace mechreg {

OptimizerMethod parse_optimizer_method(const std::string& name) {
  if (name == "gd" || name == "gradient_descent") return OptimizerMethod::gradient_descent;
  if (name == "lbfgs") return OptimizerMethod::lbfgs;
  throw Error(ErrorCode::config, "unknown optimizer '" + name + "' (expected gradient_descent or lbfgs)");
}

std::string to_string(OptimizerMethod m) {
  return m == OptimizerMethod::lbfgs ? "lbfgs" : "gradient_descent";
}

namespace {

[[noreturn]] void diverged(const Vector& x, double value, int iter) {
  std::ostringstream os;
  os << "objective is non-finite (" << value << ") at iteration " << iter << "; iterate[0:"
     << std::min<Eigen::Index>(x.size(), 8) << "] =";
  for (Eigen::Index i = 0; i < std::min<Eigen::Index>(x.size(), 8); ++i) os << ' ' << format_double(x(i));
  throw Error(ErrorCode::divergence, os.str());
}

struct Pair {
  Vector s, y;
  double rho;
};

Vector lbfgs_direction(const Vector& g, const std::deque<Pair>& mem) {
  Vector q = g;
  std::vector<double> alpha(mem.size());
  for (std::size_t k = mem.size(); k-- > 0;) {
    alpha[k] = mem[k].rho * mem[k].s.dot(q);
    q -= alpha[k] * mem[k].y;
  }
  if (!mem.empty()) {
    const auto& last = mem.back();
    q *= last.s.dot(last.y) / last.y.squaredNorm();
  }
  for (std::size_t k = 0; k < mem.size(); ++k) {
    double beta = mem[k].rho * mem[k].y.dot(q);
    q += (alpha[k] - beta) * mem[k].s;
  }
  return -q;
}

double guarded(const Objective& f, const Vector& x, Vector* g) {
  try {
    return f(x, g);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::non_finite && e.code() != ErrorCode::divergence && e.code() != ErrorCode::singular)
      throw;
    return INFINITY;
  }
}

}  // namespace

OptimizeResult minimize(const Objective& f, Vector x0, const OptimizerConfig& cfg) {
  require(cfg.tol > 0 && cfg.max_iters >= 0, ErrorCode::invalid_argument, "optimizer tolerance/iterations invalid");
  require(cfg.armijo > 0 && cfg.armijo < 1 && cfg.shrink > 0 && cfg.shrink < 1, ErrorCode::invalid_argument,
          "Armijo constants must lie in (0,1)");
  OptimizeResult res;
  res.x = std::move(x0);
  Vector g(res.x.size());
  double fx = f(res.x, &g);
  res.evaluations = 1;
  if (!std::isfinite(fx) || !g.allFinite()) diverged(res.x, fx, 0);
  res.trace.push_back(fx);
  if (cfg.on_iterate) cfg.on_iterate(0, res.x, fx);

  std::deque<Pair> mem;
  double step = cfg.initial_step;
  res.stop_reason = "max_iters";
  for (res.iterations = 0; res.iterations < cfg.max_iters; ++res.iterations) {
    res.grad_inf = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
    if (res.grad_inf <= cfg.tol) {
      res.converged = true;
      res.stop_reason = "tolerance";
      break;
    }
    Vector d;
    double t;
    if (cfg.method == OptimizerMethod::lbfgs) {
      d = lbfgs_direction(g, mem);
      if (!(g.dot(d) < 0)) {
        mem.clear();
        d = -g;
      }
      t = mem.empty() ? std::min(1.0, cfg.initial_step / std::max(1.0, g.norm())) : 1.0;
    } else {
      d = -g;
      t = step;
    }
    const double slope = g.dot(d);
    Vector xn, gn(g.size());
    double fn = 0;
    bool accepted = false;
    // Trial points are evaluated without gradient; the gradient is computed
    // once Armijo holds. A trial that breaks the model counts as a rejection.
    for (int k = 0; k < cfg.max_backtracks && !accepted; ++k, t *= cfg.shrink) {
      xn = res.x + t * d;
      ++res.evaluations;
      fn = guarded(f, xn, nullptr);
      if (!(std::isfinite(fn) && fn <= fx + cfg.armijo * t * slope)) continue;
      ++res.evaluations;
      fn = guarded(f, xn, &gn);
      accepted = std::isfinite(fn) && gn.allFinite() && fn <= fx + cfg.armijo * t * slope;
    }
    if (!accepted) {
      if (cfg.method == OptimizerMethod::lbfgs && !mem.empty()) {
        mem.clear();  // retry along the steepest descent direction
        continue;
      }
      res.stop_reason = "line_search";
      break;
    }
    t /= cfg.shrink;
    if (cfg.method == OptimizerMethod::lbfgs) {
      Vector s = xn - res.x, y = gn - g;
      double sy = s.dot(y);
      if (sy > 1e-12 * s.norm() * y.norm()) {
        mem.push_back({std::move(s), std::move(y), 1.0 / sy});
        if (static_cast<int>(mem.size()) > cfg.lbfgs_memory) mem.pop_front();
      }
    } else {
      step = 2.0 * t;
    }
    const double decrease = fx - fn;
    res.x = std::move(xn);
    g = gn;
    fx = fn;
    res.trace.push_back(fx);
    if (cfg.on_iterate) cfg.on_iterate(res.iterations + 1, res.x, fx);
    if (cfg.rel_decrease_tol > 0 && decrease <= cfg.rel_decrease_tol * std::max(1.0, std::abs(fx))) {
      ++res.iterations;
      res.stop_reason = "stalled";
      break;
    }
  }
  res.value = fx;
  res.grad_inf = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
  if (res.grad_inf <= cfg.tol) {
    res.converged = true;
    res.stop_reason = "tolerance";
  }
  return res;
}

}  // namespace mechreg
