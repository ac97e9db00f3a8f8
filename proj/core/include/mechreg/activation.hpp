#pragma once

#include <string>

namespace mechreg {

/// Elementwise nonlinearity a(z) used by activation kernels and feature maps.
///
/// `tanh` and `softplus_clamped` are bounded with bounded first and second
/// derivatives. `relu` has no second derivative and is rejected by every
/// routine that differentiates a kernel in its arguments. `identity` is the
/// linear map, mainly useful for checking convolution identities.
class Activation {
 public:
  enum class Kind { tanh, softplus_clamped, relu, identity };

  static constexpr double default_softplus_epsilon = 0.01;

  Activation() = default;
  static Activation tanh() { return Activation(Kind::tanh, 0.0); }
  static Activation relu() { return Activation(Kind::relu, 0.0); }
  static Activation identity() { return Activation(Kind::identity, 0.0); }
  static Activation softplus_clamped(double epsilon = default_softplus_epsilon);

  /// Parses "tanh", "relu", "identity", "softplus" or "softplus_clamped".
  static Activation parse(const std::string& name, double epsilon = default_softplus_epsilon);

  Kind kind() const { return kind_; }
  double epsilon() const { return epsilon_; }
  bool twice_differentiable() const { return kind_ != Kind::relu; }
  std::string name() const;

  double value(double z) const;
  double derivative(double z) const;
  double second_derivative(double z) const;

  bool operator==(const Activation&) const = default;

 private:
  Activation(Kind kind, double epsilon) : kind_(kind), epsilon_(epsilon) {}

  Kind kind_ = Kind::tanh;
  double epsilon_ = 0.0;
};

}  // namespace mechreg
