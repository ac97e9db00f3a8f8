#include "mechreg/activation.hpp"

#include "mechreg/common.hpp"

#include <cmath>

namespace mechreg {

namespace {

// ln(1 + e^z) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Activation Activation::softplus_clamped(double epsilon) {
  require(epsilon > 0 && std::isfinite(epsilon), ErrorCode::invalid_argument,
          "softplus_clamped epsilon must be positive");
  return Activation(Kind::softplus_clamped, epsilon);
}

Activation Activation::parse(const std::string& name, double epsilon) {
  if (name == "tanh") return tanh();
  if (name == "relu") return relu();
  if (name == "identity" || name == "linear") return identity();
  if (name == "softplus" || name == "softplus_clamped") return softplus_clamped(epsilon);
  throw Error(ErrorCode::config, "unknown activation '" + name + "'");
}

std::string Activation::name() const {
  switch (kind_) {
    case Kind::tanh: return "tanh";
    case Kind::softplus_clamped: return "softplus_clamped";
    case Kind::relu: return "relu";
    case Kind::identity: return "identity";
  }
  return "?";
}

double Activation::value(double z) const {
  switch (kind_) {
    case Kind::tanh: return std::tanh(z);
    case Kind::softplus_clamped: {
      double g = softplus(z);
      return g / (1.0 + epsilon_ * g);
    }
    case Kind::relu: return z > 0 ? z : 0.0;
    case Kind::identity: return z;
  }
  return 0.0;
}

double Activation::derivative(double z) const {
  switch (kind_) {
    case Kind::tanh: {
      double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Kind::softplus_clamped: {
      double g = softplus(z);
      double d = 1.0 + epsilon_ * g;
      return sigmoid(z) / (d * d);
    }
    // Almost-everywhere derivative; callers needing smoothness reject relu.
    case Kind::relu: return z > 0 ? 1.0 : 0.0;
    case Kind::identity: return 1.0;
  }
  return 0.0;
}

double Activation::second_derivative(double z) const {
  switch (kind_) {
    case Kind::tanh: {
      double t = std::tanh(z);
      return -2.0 * t * (1.0 - t * t);
    }
    case Kind::softplus_clamped: {
      double g = softplus(z);
      double s = sigmoid(z);
      double d = 1.0 + epsilon_ * g;
      return s * (1.0 - s) / (d * d) - 2.0 * epsilon_ * s * s / (d * d * d);
    }
    case Kind::relu: return 0.0;
    case Kind::identity: return 0.0;
  }
  return 0.0;
}

}  // namespace mechreg
