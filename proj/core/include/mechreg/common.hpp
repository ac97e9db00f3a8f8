#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace mechreg {

/// Point lists and covector lists are stored row-wise: row i is the i-th point.
using Points = Eigen::MatrixXd;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class ErrorCode {
  invalid_argument,
  dimension_mismatch,
  non_finite,
  singular,
  not_differentiable,
  divergence,
  config,
  io,
};

const char* to_string(ErrorCode code);

/// Structured error raised by every library routine.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

inline void require_finite(const Eigen::Ref<const Matrix>& m, const std::string& what) {
  if (!m.allFinite()) throw Error(ErrorCode::non_finite, what + " contains non-finite entries");
}

}  // namespace mechreg
