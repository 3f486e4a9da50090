// Copyright 2026 The moe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <optional>
#include <vector>

#include "moelab/model.hpp"
#include "moelab/teacher.hpp"

namespace moelab {

/// cluster -> experts whose best initial (neuron, cluster) alignment points
/// at that cluster. Sets partition [0, M).
using ProfessionalSets = std::vector<std::vector<int>>;

struct AlignmentReport {
  std::vector<Eigen::MatrixXd> kappa;  // per cluster, M x J of w*_c . w_{m,j}
  Eigen::MatrixXd kappa_g;             // M x J of w*_g . w_{m,j}
  Eigen::MatrixXd iota;                // C x M of v_c . theta_m
  ProfessionalSets professional;
  std::optional<double> routing_accuracy;
  std::optional<double> test_l1;
};

AlignmentReport alignment_report(const MoEModel& model, const TeacherSpec& teacher);

/// Cluster c*_m of each expert's largest signed alignment.
std::vector<int> professional_clusters(const MoEModel& model, const TeacherSpec& teacher);
/// Canonical only when evaluated on the initialization.
ProfessionalSets professional_sets(const MoEModel& model, const TeacherSpec& teacher);

/// Fraction of n fresh draws routed only to professionals of their cluster.
/// adaptive_topk: active set nonempty and contained in M_c.
/// softmax_top1: the routed expert is in M_c.
/// The mode defaults to the model's own.
double routing_accuracy(const MoEModel& model, const TeacherSpec& teacher,
                        const ProfessionalSets& professional, long n, RngStream& rng,
                        std::optional<RoutingMode> mode = std::nullopt);

struct LossEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
};

/// Monte-Carlo E|F^_M(x) - f*_c - s_c g*| against the noiseless target.
LossEstimate test_l1_loss(const MoEModel& model, const TeacherSpec& teacher, long n,
                          RngStream& rng);

/// Hermite coefficients of z -> a * sigma_j(z + shift + b) for each shift.
/// ReLU neurons are integrated piecewise around the kink; quad_order applies
/// to smooth activations only.
std::vector<HermiteSeries> coeff_drift(const Activation& act, int neuron, double a, double b,
                                       const std::vector<double>& shifts, int p_max,
                                       int quad_order);

struct BihariBounds {
  double lower = 0.0;  // +inf once the denominator is no longer positive
  std::optional<double> upper;
};

/// Closed-form growth bounds for A_{t+1} = A_t + B A_t^{k-1}:
///   lower = A0 / (1 - B (k-2) A0^{k-2} t)^{1/(k-2)}
///   upper = A0 / (1 - B (1+B)^{k-1} (k-2) A0^{k-2} t)^{1/(k-2)}
/// The upper branch is reported only when A0 >= 1 and its denominator is
/// positive.
BihariBounds bihari_bounds(double A0, double B, int k, long t);

/// Alignment reported as weak recovery.
inline constexpr double kWeakRecoveryThreshold = 0.2;

}  // namespace moelab
