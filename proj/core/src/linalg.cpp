#include "mechreg/linalg.hpp"

namespace mechreg {

SpdSolver::SpdSolver(const Matrix& a, double jitter) {
  require(a.rows() == a.cols(), ErrorCode::dimension_mismatch, "SPD solve needs a square matrix");
  require_finite(a, "SPD matrix");
  llt_.compute(a);
  if (llt_.info() != Eigen::Success) {
    Matrix shifted = a;
    shifted.diagonal().array() += jitter;
    llt_.compute(shifted);
    jittered_ = true;
    if (llt_.info() != Eigen::Success)
      throw Error(ErrorCode::singular, "Cholesky factorization failed after jitter retry (n=" +
                                           std::to_string(a.rows()) + ")");
  }
}

Matrix SpdSolver::solve(const Eigen::Ref<const Matrix>& rhs) const {
  require(rhs.rows() == llt_.rows(), ErrorCode::dimension_mismatch, "SPD solve right-hand side has wrong size");
  Matrix x = llt_.solve(rhs);
  if (!x.allFinite()) throw Error(ErrorCode::singular, "SPD solve produced non-finite values");
  return x;
}

double SpdSolver::log_determinant() const {
  return 2.0 * llt_.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

}  // namespace mechreg
