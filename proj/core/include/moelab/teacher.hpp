// Copyright 2026 The moe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <vector>

#include "moelab/hermite.hpp"
#include "moelab/linrand.hpp"

namespace moelab {

enum class FeatureCorrelation { random, orthogonal };

struct TeacherConfig {
  int d = 100;
  int C = 2;
  /// Cluster-mean magnitude. Defaults to ceil(log(d)^1.5).
  std::optional<double> rho;
  std::vector<HermiteSeries> f_local;
  HermiteSeries g_global;
  std::vector<double> s;
  double zeta = 0.0;
  FeatureCorrelation correlation = FeatureCorrelation::random;
  /// Rescale every link to unit non-constant variance before use.
  bool normalize_links = false;
  /// Require |beta_{c,k*}| = |gamma_{k*}| for every cluster.
  bool matched_leading_coeff = false;
  /// Pairwise overlap bound |w*_i . w*_j| <= slack / sqrt(d).
  /// Defaults to 5 * sqrt(log d).
  std::optional<double> overlap_slack;

  double rho_or_default() const;
  double overlap_slack_or_default() const;
  void validate() const;
};

struct TeacherSpec {
  int d = 0;
  int C = 0;
  double rho = 0.0;
  std::vector<Vec> v;
  std::vector<Vec> w_local;
  Vec w_global;
  std::vector<HermiteSeries> f_local;
  HermiteSeries g_global;
  std::vector<double> s;
  double zeta = 0.0;
  double overlap_slack = 0.0;

  /// Throws ConfigError / DegeneracyError naming the violated invariant.
  void validate() const;
};

/// A labeled draw. `cluster` is 0-based and only for diagnostics.
struct Sample {
  Vec x;
  double y = 0.0;
  int cluster = 0;
};

TeacherSpec build_teacher(const TeacherConfig& cfg, RngStream& rng);

/// f*_c = beta_c He_k and g* = He_k with raw (unnormalized) He_k,
/// s = (+1, -1, 0, ..., 0), all features exactly orthogonal. `betas` must
/// contain opposite signs.
TeacherConfig cancelling_teacher_config(int d, int C, int k_star, const std::vector<double>& betas,
                                        std::optional<double> rho = std::nullopt);
TeacherSpec build_cancelling_teacher(int d, int C, int k_star, const std::vector<double>& betas,
                                     RngStream& rng, std::optional<double> rho = std::nullopt);

/// f*_c(w*_c . x) + s_c g*(w*_g . x), no noise.
double noiseless_target(const TeacherSpec& spec, const Vec& x, int cluster);

/// Writes one draw into x (resized to d); returns y and sets `cluster`.
double draw_sample(const TeacherSpec& spec, RngStream& rng, Vec& x, int& cluster);

std::vector<Sample> sample_batch(const TeacherSpec& spec, int n, RngStream& rng);

/// Label-free stream of (x, y) pairs handed to training. The cluster label
/// of each draw is consumed internally and never exposed.
class SampleSource {
 public:
  SampleSource(const TeacherSpec& spec, RngStream rng) : spec_(&spec), rng_(std::move(rng)) {}

  /// Overwrites x with a fresh covariate and returns its label y.
  double next(Vec& x);
  std::uint64_t drawn() const noexcept { return drawn_; }

 private:
  const TeacherSpec* spec_;
  RngStream rng_;
  std::uint64_t drawn_ = 0;
};

}  // namespace moelab
