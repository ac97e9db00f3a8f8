#pragma once

#include "mechreg/feature_map.hpp"
#include "mechreg/optimize.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mechreg {

/// How a group's feature map is built from the training seed.
struct FeatureMapConfig {
  FeatureMap::Kind kind = FeatureMap::Kind::activation_identity;
  Activation activation = Activation::tanh();
  Eigen::Index feature_dim = 0;  ///< random features only
  double weight_scale = -1.0;    ///< negative: 1.5/sqrt(dim)
  double bias_scale = 0.1;
};

/// One group: L layers x ← x + wφ(x) (+ slack) followed by a readout w̃φ'(x)
/// into the next space (the label space for the last group).
struct GroupHyper {
  std::size_t layers = 1;
  double nu = 1.0;
  double lambda = 1.0;
  FeatureMapConfig layer_map;
  FeatureMapConfig readout_map;
  Eigen::Index output_dim = 0;  ///< next-space dimension; ignored for the last group
  /// Keep the readout fixed at `frozen_readout` (intermediate groups only).
  std::optional<Matrix> frozen_readout;
};

struct ResNetHyper {
  std::vector<GroupHyper> groups;
  double r = 0.0;    ///< layer slack penalty 1/r; 0 = exact propagation
  double rho = 0.0;  ///< readout slack penalty 1/ρ; 0 = exact readout
  OptimizerConfig optimizer;
  bool minibatch = false;
  std::size_t batch_size = 32;
  std::size_t epochs = 100;
  double learning_rate = 1e-2;
};

struct ResNetGroup {
  FeatureMap layer_map;
  FeatureMap readout_map;
  std::vector<Matrix> w;       ///< d_m × F_m per layer
  Matrix readout;              ///< d_{m+1} × F'_m
  std::vector<Points> slacks;  ///< training only
  Points readout_slack;        ///< training only, intermediate groups
};

struct ObjectiveTerms {
  double layers = 0.0;    ///< Σ (ν L/2) Σ (‖w‖² + ‖z‖²/r)
  double readouts = 0.0;  ///< intermediate λ(‖w̃‖² + ‖z̃‖²/ρ)
  double final = 0.0;     ///< reduced last readout plus data loss
  double total() const { return layers + readouts + final; }
};

struct ResNetModel {
  std::vector<ResNetGroup> groups;
  ResNetHyper hyper;
  double objective = 0.0;
  std::vector<double> trace;
  /// Objective terms at every accepted iterate (full-batch training).
  std::vector<ObjectiveTerms> term_trace;
  OptimizeResult optimizer;
};

/// Slack-free inference (w̃φ')∘(I+w_Lφ)∘…∘(I+w_1φ) through every group.
Points forward(const ResNetModel& model, const Points& x);
/// Positions after the layers of group 0, before its readout.
Points deform(const ResNetModel& model, const Points& x, std::size_t group = 0);

/// Zero weights, feature maps drawn from the seed in group order.
ResNetModel init_model(Eigen::Index input_dim, Eigen::Index output_dim, const ResNetHyper& hyper,
                       std::uint64_t seed);


/// Training objective with the last readout eliminated in closed form.
ObjectiveTerms training_objective(const ResNetModel& model, const Points& X, const Points& Y);

ResNetModel train_block(const Points& X, const Points& Y, const ResNetHyper& hyper, std::uint64_t seed);
ResNetModel train_deep(const Points& X, const Points& Y, const ResNetHyper& hyper, std::uint64_t seed);
/// Trains an already initialized model in place.
void train(ResNetModel& model, const Points& X, const Points& Y, std::uint64_t seed);

struct EnergyProfile {
  /// ½(‖w^s‖² + ‖z^s‖²/r) per layer, per group.
  std::vector<std::vector<double>> raw;
  /// raw·L², the energy of the velocity w^s·L.
  std::vector<std::vector<double>> scaled;
  std::vector<double> fluctuation;           ///< max − min of scaled
  std::vector<double> relative_fluctuation;  ///< fluctuation / mean of scaled
};

EnergyProfile energy_profile(const ResNetModel& model);

}  // namespace mechreg
