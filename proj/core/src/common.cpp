#include "mechreg/common.hpp"

namespace mechreg {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::non_finite: return "non_finite";
    case ErrorCode::singular: return "singular";
    case ErrorCode::not_differentiable: return "not_differentiable";
    case ErrorCode::divergence: return "divergence";
    case ErrorCode::config: return "config";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

}  // namespace mechreg
