// Copyright 2026 The moe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <string_view>
#include <vector>

#include "moelab/hermite.hpp"
#include "moelab/linrand.hpp"

namespace moelab {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ActivationKind { relu, randomized_poly };
enum class RoutingMode { softmax_top1, adaptive_topk };

std::string_view to_string(ActivationKind k);
std::string_view to_string(RoutingMode m);
ActivationKind activation_kind_from_string(std::string_view s);
RoutingMode routing_mode_from_string(std::string_view s);

/// Expert nonlinearity. For randomized_poly, neuron j uses
///   sigma_j(z) = sum_{i=k_min}^{p_max} signs(j, i-k_min) He_i(z)/sqrt(i!)
/// with Rademacher signs fixed at construction.
struct Activation {
  ActivationKind kind = ActivationKind::relu;
  int k_min = 0;
  int p_max = 0;
  Eigen::MatrixXd signs;

  static Activation relu();
  static Activation randomized_poly(int J, int k_min, int p_max, RngStream& rng);

  double value(int j, double z) const;
  /// ReLU'(0) = 0.
  double derivative(int j, double z) const;
  void eval(int j, double z, double& value, double& deriv) const;
  /// Hermite series of neuron j's activation (randomized_poly only).
  HermiteSeries series(int j) const;

  friend bool operator==(const Activation&, const Activation&) = default;
};

struct ExpertParams {
  RowMat W;  // J x d, row j is w_j
  Vec a;
  Vec b;
  Activation act;

  int J() const noexcept { return static_cast<int>(W.rows()); }
  int d() const noexcept { return static_cast<int>(W.cols()); }
};

struct RouterParams {
  Eigen::MatrixXd theta;  // M x d, row m is theta_m

  int M() const noexcept { return static_cast<int>(theta.rows()); }
};

struct MoEModel {
  std::vector<ExpertParams> experts;
  RouterParams router;
  RoutingMode mode = RoutingMode::softmax_top1;
  /// Weight the routed expert by its gate probability in F_1. When off,
  /// F_1 = f_{m(x)} for the expert update; the router step always uses the
  /// weighted objective, since the unweighted one has no router gradient.
  bool top1_weighted = true;

  int M() const noexcept { return static_cast<int>(experts.size()); }
  int d() const noexcept { return static_cast<int>(router.theta.cols()); }
  /// Throws DimensionError unless every part agrees on d, M and J.
  void validate() const;
};

struct ModelInit {
  int d = 100;
  int M = 8;
  int J = 200;
  ActivationKind kind = ActivationKind::randomized_poly;
  int k_min = 3;
  int p_max = 5;
  bool top1_weighted = true;
};

/// Rows of W uniform on the sphere, a uniform on {+1,-1}, b = 0, Theta = 0.
MoEModel init_model(const ModelInit& cfg, RngStream& rng);

/// Draws fresh W rows and second-layer signs for one expert in place.
void init_expert_weights(ExpertParams& e, RngStream& rng);

double expert_forward(const ExpertParams& e, const Vec& x);

Vec gate_logits(const RouterParams& r, const Vec& x);
/// Numerically stable softmax of Theta x.
Vec gate_probs(const RouterParams& r, const Vec& x);
Vec softmax(const Vec& logits);

/// Argmax of the logits with exact ties broken uniformly at random. The rng
/// is only consumed when a tie occurs.
int route_top1(const RouterParams& r, const Vec& x, RngStream& rng);
int argmax_random_tie(const Vec& logits, RngStream& rng);

/// { m : theta_m . x >= 0 }, ascending.
std::vector<int> active_set(const RouterParams& r, const Vec& x);

struct RoutedValue {
  double value = 0.0;
  int chosen = -1;
};

RoutedValue forward_f1(const MoEModel& model, const Vec& x, RngStream& rng);
double forward_fhat(const MoEModel& model, const Vec& x);

struct ExpertGrads {
  std::vector<RowMat> dW;  // per expert, J x d
  int chosen = -1;
};

struct RouterGrads {
  Eigen::MatrixXd dtheta;  // M x d
  int chosen = -1;
};

/// Gradient of y F_1(x) with respect to every w_{m,j}.
ExpertGrads grad_w_f1(const MoEModel& model, const Vec& x, double y, RngStream& rng);
/// Same, with the routed expert supplied (no tie-breaking draw).
ExpertGrads grad_w_f1_routed(const MoEModel& model, const Vec& x, double y, int chosen);

/// Gradient of y F^_M(x) with respect to every w_{m,j}.
ExpertGrads grad_w_fhat(const MoEModel& model, const Vec& x, double y);

/// Gradient of y pi_{m(x)} f_{m(x)} with respect to every theta_m. Rows sum
/// to zero.
RouterGrads grad_theta_f1(const MoEModel& model, const Vec& x, double y, RngStream& rng);
RouterGrads grad_theta_f1_routed(const MoEModel& model, const Vec& x, double y, int chosen);

}  // namespace moelab
