#pragma once

#include "mechreg/common.hpp"

#include <functional>
#include <string>
#include <vector>

namespace mechreg {

/// Objective with optional gradient output (grad may be null).
using Objective = std::function<double(const Vector& x, Vector* grad)>;

enum class OptimizerMethod { gradient_descent, lbfgs };

struct OptimizerConfig {
  OptimizerMethod method = OptimizerMethod::gradient_descent;
  double tol = 1e-6;  ///< on the gradient sup-norm
  int max_iters = 5000;
  double armijo = 1e-4;
  double shrink = 0.5;
  double initial_step = 1.0;
  int max_backtracks = 60;
  int lbfgs_memory = 10;
  /// Stop when the relative decrease of one iteration falls below this.
  /// Zero disables the test.
  double rel_decrease_tol = 0.0;
  /// Called with (iteration, x, f) at the start point and after every
  /// accepted step.
  std::function<void(int, const Vector&, double)> on_iterate;
};

OptimizerMethod parse_optimizer_method(const std::string& name);
std::string to_string(OptimizerMethod m);

struct OptimizeResult {
  Vector x;
  double value = 0.0;
  double grad_inf = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  /// Why the run stopped: "tolerance", "max_iters", "line_search", "stalled".
  std::string stop_reason;
  std::vector<double> trace;
};

/// Backtracking-Armijo descent. Trial steps on which the objective is
/// non-finite, or throws non_finite/divergence/singular, are rejected.
/// Throws ErrorCode::divergence, with a dump of the iterate, when the
/// starting point is already non-finite.
OptimizeResult minimize(const Objective& f, Vector x0, const OptimizerConfig& config);

}  // namespace mechreg
