// Copyright 2026 The moe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <functional>
#include <optional>
#include <vector>

#include "moelab/metrics.hpp"
#include "moelab/model.hpp"
#include "moelab/teacher.hpp"

namespace moelab {

struct TrainConfig {
  ModelInit model;  // model.d is taken from the teacher

  long T1 = 1'000'000;
  long T2 = 1;
  long T3 = 2'000'000;
  long T4 = 20'000;
  double eta1 = 1.0;
  double eta2 = 1.0;
  double eta3 = 1.0;
  long n_router = 2000;
  /// Ridge strength. Defaults to 1e-3 * M * J / T4.
  std::optional<double> lambda_ridge;
  double C_b = 1.0;
  std::uint64_t seed = 0;

  bool reinit_before_phase3 = true;
  /// Defaults to on for ReLU experts and off otherwise.
  std::optional<bool> sign_flip_phase4;
  /// Sample biases at initialization instead of at the start of Phase IV.
  bool bias_at_init = false;
  /// Optional second Phase III stage: steps >= T3_stage1 use eta3_stage2.
  long T3_stage1 = 0;
  double eta3_stage2 = 0.0;

  /// Snapshots per SGD phase; cadence is max(1, T / snapshots).
  long snapshots = 200;
  /// Held-out draws for routing accuracy and test loss.
  long eval_n = 10'000;

  /// Baseline width; 0 means M * J.
  int vanilla_width = 0;
  /// Baseline steps; 0 means T1 + T2 * n_router + T3 + T4.
  long vanilla_steps = 0;

  double lambda_or_default() const;
  bool sign_flip_or_default() const;
  int vanilla_width_or_default() const;
  long vanilla_steps_or_default() const;
  long total_budget() const;
  void validate() const;
};

struct Snapshot {
  long step = 0;
  AlignmentReport report;
};

struct PhaseLog {
  int phase = 0;
  std::vector<Snapshot> snapshots;  // strictly increasing steps
  double wall_seconds = 0.0;
};

/// Normalized spherical SGD under top-1 routing. The router is frozen.
PhaseLog run_phase1(MoEModel& model, const TeacherSpec& teacher, const TrainConfig& cfg,
                    const RngStream& rng);
/// T2 router steps, each on a fresh batch of n_router draws.
PhaseLog run_phase2(MoEModel& model, const TeacherSpec& teacher, const TrainConfig& cfg,
                    const RngStream& rng);
/// Fresh first layer and second-layer signs for every expert; router kept.
void reinitialize_experts(MoEModel& model, const RngStream& rng);
/// Normalized spherical SGD under adaptive routing. Switches the model to
/// adaptive_topk.
PhaseLog run_phase3(MoEModel& model, const TeacherSpec& teacher, const TrainConfig& cfg,
                    const RngStream& rng);

/// Design matrix and targets of a Phase IV fit.
struct RidgeProblem {
  RowMat features;  // T4 x (M J)
  Vec targets;
};

/// phi_(m,j)(x) = 1[h_m(x) >= 0] sigma_j(w_{m,j} . x + b_{m,j}) / J, ordered
/// expert-major.
void phase4_features(const MoEModel& model, const Vec& x, Eigen::Ref<Vec> out);

/// Accumulates G^T G and G^T y over row blocks.
class RidgeAccumulator {
 public:
  explicit RidgeAccumulator(int dim);
  void add(const Eigen::Ref<const RowMat>& rows, const Eigen::Ref<const Vec>& y);
  long rows() const noexcept { return rows_; }
  /// Solves (G^T G / T + lambda I) a = G^T y / T. With lambda = 0 and a
  /// singular system throws DegeneracyError asking for lambda > 0.
  Vec solve(double lambda) const;

 private:
  Eigen::MatrixXd gram_;
  Vec rhs_;
  long rows_ = 0;
};

Vec ridge_fit(const Eigen::Ref<const RowMat>& G, const Vec& y, double lambda);

/// Samples biases (unless already drawn at init), optionally flips row
/// signs, then fits every second layer by ridge regression on T4 draws.
PhaseLog run_phase4_ridge(MoEModel& model, const TeacherSpec& teacher, const TrainConfig& cfg,
                          const RngStream& rng, RidgeProblem* capture = nullptr);

/// Single-expert network of width vanilla_width trained by the Phase I
/// update for vanilla_steps draws.
struct VanillaResult {
  MoEModel model;
  PhaseLog log;
  /// max_j |w_j . w*_g| at each snapshot.
  std::vector<double> global_alignment;
};
VanillaResult train_vanilla(const TeacherSpec& teacher, const TrainConfig& cfg);

struct PhaseMetrics {
  int phase = 0;
  double routing_accuracy_top1 = 0.0;
  double routing_accuracy_adaptive = 0.0;
  LossEstimate test_l1;
};

struct PipelineResult {
  TeacherSpec teacher;
  MoEModel init;
  MoEModel model;
  ProfessionalSets professional;  // from the initialization
  std::array<MoEModel, 4> checkpoints;
  std::vector<PhaseLog> logs;
  std::vector<PhaseMetrics> metrics;
};

/// Called after each phase with the phase id (1..4) and the model.
using PhaseCallback = std::function<void(int, const MoEModel&, const PhaseLog&)>;

PipelineResult run_pipeline(const TrainConfig& cfg, const TeacherConfig& teacher_cfg,
                            const PhaseCallback& on_phase = {});

/// Named streams derived from the run seed.
RngStream teacher_stream(std::uint64_t seed);
RngStream init_stream(std::uint64_t seed);
RngStream phase_stream(std::uint64_t seed, int phase);
RngStream eval_stream(std::uint64_t seed);

}  // namespace moelab
