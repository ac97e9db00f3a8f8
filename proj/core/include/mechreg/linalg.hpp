#pragma once

#include "mechreg/common.hpp"

#include <Eigen/Cholesky>

namespace mechreg {

/// Cholesky factorization of a symmetric positive-definite matrix.
///
/// If the first factorization fails, `jitter` times the identity is added and
/// the factorization is retried once; a second failure throws
/// ErrorCode::singular.
class SpdSolver {
 public:
  static constexpr double default_jitter = 1e-10;

  explicit SpdSolver(const Matrix& a, double jitter = default_jitter);

  Matrix solve(const Eigen::Ref<const Matrix>& rhs) const;
  Eigen::Index size() const { return llt_.rows(); }
  bool jittered() const { return jittered_; }
  /// log det of the factored matrix.
  double log_determinant() const;

 private:
  Eigen::LLT<Matrix> llt_;
  bool jittered_ = false;
};

}  // namespace mechreg
