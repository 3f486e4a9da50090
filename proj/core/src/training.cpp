// Copyright 2026 The moe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelab/training.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "moelab/error.hpp"

namespace moelab {

namespace {

constexpr long kRidgeBlock = 256;
constexpr double kSingularRatio = 1e-12;

class PhaseTimer {
 public:
  PhaseTimer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

// Records step 0, every cadence-th step and the final step.
class SnapshotSchedule {
 public:
  SnapshotSchedule(long total, long count)
      : total_(total), cadence_(std::max(1L, total / std::max(1L, count))) {}
  bool due(long done) const { return done == 0 || done == total_ || done % cadence_ == 0; }

 private:
  long total_;
  long cadence_;
};

void record(PhaseLog& log, long step, const MoEModel& model, const TeacherSpec& teacher) {
  if (!log.snapshots.empty() && log.snapshots.back().step >= step) return;
  log.snapshots.push_back({step, alignment_report(model, teacher)});
}

// w_j <- normalize(w_j + scale (a_j / J) sigma'(w_j.x + b_j) (x - (w_j.x) w_j)).
// Rows with a zero coefficient are left untouched.
void spherical_expert_step(ExpertParams& e, const Vec& x, double scale, Vec& proj) {
  proj.noalias() = e.W * x;
  const double inv_j = 1.0 / e.J();
  for (int j = 0; j < e.J(); ++j) {
    double value;
    double deriv;
    e.act.eval(j, proj[j] + e.b[j], value, deriv);
    const double c = scale * e.a[j] * inv_j * deriv;
    if (c == 0.0) continue;
    auto row = e.W.row(j);
    row += c * (x.transpose() - proj[j] * row);
    row /= row.norm();
  }
}

// pi_m = softmax(logits)_m without materializing the vector.
double softmax_at(const Vec& logits, int m) {
  double denom = 0.0;
  for (int i = 0; i < logits.size(); ++i) denom += std::exp(logits[i] - logits[m]);
  return 1.0 / denom;
}

void sample_biases(MoEModel& model, double C_b, RngStream& rng) {
  for (auto& e : model.experts) {
    for (int j = 0; j < e.J(); ++j) e.b[j] = rng.uniform(-C_b, C_b);
  }
}

}  // namespace

RngStream teacher_stream(std::uint64_t seed) { return RngStream(seed).derive(tags::kTeacher); }
RngStream init_stream(std::uint64_t seed) { return RngStream(seed).derive(tags::kInit); }
RngStream phase_stream(std::uint64_t seed, int phase) {
  return RngStream(seed).derive(tags::kData).derive(static_cast<std::uint64_t>(phase));
}
RngStream eval_stream(std::uint64_t seed) { return RngStream(seed).derive(tags::kEval); }

double TrainConfig::lambda_or_default() const {
  if (lambda_ridge) return *lambda_ridge;
  return 1e-3 * static_cast<double>(model.M) * model.J / static_cast<double>(std::max(T4, 1L));
}

bool TrainConfig::sign_flip_or_default() const {
  return sign_flip_phase4.value_or(model.kind == ActivationKind::relu);
}

int TrainConfig::vanilla_width_or_default() const {
  return vanilla_width > 0 ? vanilla_width : model.M * model.J;
}

long TrainConfig::total_budget() const { return T1 + T2 * n_router + T3 + T4; }

long TrainConfig::vanilla_steps_or_default() const {
  return vanilla_steps > 0 ? vanilla_steps : total_budget();
}

void TrainConfig::validate() const {
  auto nonneg = [](long v, const char* f) {
    if (v < 0) throw ConfigError("must be >= 0 (got " + std::to_string(v) + ")", f);
  };
  auto positive = [](double v, const char* f) {
    if (!(v > 0.0)) throw ConfigError("must be > 0", f);
  };
  nonneg(T1, "train.T1");
  nonneg(T2, "train.T2");
  nonneg(T3, "train.T3");
  nonneg(T4, "train.T4");
  positive(eta1, "train.eta1");
  positive(eta2, "train.eta2");
  positive(eta3, "train.eta3");
  if (n_router < 1) throw ConfigError("must be >= 1", "train.n_router");
  if (lambda_ridge && !(*lambda_ridge >= 0.0)) throw ConfigError("must be >= 0", "train.lambda_ridge");
  if (!(C_b >= 0.0)) throw ConfigError("must be >= 0", "train.C_b");
  if (model.M < 1) throw ConfigError("must be >= 1", "model.M");
  if (model.J < 1) throw ConfigError("must be >= 1", "model.J");
  if (model.kind == ActivationKind::randomized_poly &&
      (model.k_min < 0 || model.p_max < model.k_min)) {
    throw ConfigError("need 0 <= k_min <= p_max", "model.p_max");
  }
  nonneg(T3_stage1, "train.T3_stage1");
  if (T3_stage1 > 0) positive(eta3_stage2, "train.eta3_stage2");
  if (snapshots < 1) throw ConfigError("must be >= 1", "train.snapshots");
  if (eval_n < 1) throw ConfigError("must be >= 1", "eval.n");
  if (vanilla_width < 0) throw ConfigError("must be >= 0", "vanilla.width");
  nonneg(vanilla_steps, "vanilla.steps");
}

PhaseLog run_phase1(MoEModel& model, const TeacherSpec& teacher, const TrainConfig& cfg,
                    const RngStream& rng) {
  if (model.mode != RoutingMode::softmax_top1) throw ModeError("Phase I requires softmax_top1");
  model.validate();
  PhaseTimer timer;
  PhaseLog log;
  log.phase = 1;
  SampleSource source(teacher, rng.derive(tags::kData));
  RngStream routing = rng.derive(tags::kRouting);
  const SnapshotSchedule schedule(cfg.T1, cfg.snapshots);
  Vec x(model.d());
  Vec logits(model.M());
  Vec proj;
  record(log, 0, model, teacher);
  for (long t = 0; t < cfg.T1; ++t) {
    const double y = source.next(x);
    logits.noalias() = model.router.theta * x;
    const int m = argmax_random_tie(logits, routing);
    const double pi = model.top1_weighted ? softmax_at(logits, m) : 1.0;
    spherical_expert_step(model.experts[static_cast<size_t>(m)], x, cfg.eta1 * y * pi, proj);
    if (schedule.due(t + 1)) record(log, t + 1, model, teacher);
  }
  log.wall_seconds = timer.seconds();
  return log;
}

PhaseLog run_phase2(MoEModel& model, const TeacherSpec& teacher, const TrainConfig& cfg,
                    const RngStream& rng) {
  if (model.mode != RoutingMode::softmax_top1) throw ModeError("Phase II requires softmax_top1");
  model.validate();
  PhaseTimer timer;
  PhaseLog log;
  log.phase = 2;
  SampleSource source(teacher, rng.derive(tags::kData));
  RngStream routing = rng.derive(tags::kRouting);
  Vec x(model.d());
  record(log, 0, model, teacher);
  for (long t = 0; t < cfg.T2; ++t) {
    Eigen::MatrixXd step = Eigen::MatrixXd::Zero(model.M(), model.d());
    for (long i = 0; i < cfg.n_router; ++i) {
      const double y = source.next(x);
      const int m = route_top1(model.router, x, routing);
      step += grad_theta_f1_routed(model, x, y, m).dtheta;
    }
    model.router.theta += (cfg.eta2 / static_cast<double>(cfg.n_router)) * step;
    record(log, t + 1, model, teacher);
  }
  log.wall_seconds = timer.seconds();
  return log;
}

void reinitialize_experts(MoEModel& model, const RngStream& rng) {
  RngStream r = rng;
  for (auto& e : model.experts) init_expert_weights(e, r);
}

PhaseLog run_phase3(MoEModel& model, const TeacherSpec& teacher, const TrainConfig& cfg,
                    const RngStream& rng) {
  model.mode = RoutingMode::adaptive_topk;
  model.validate();
  PhaseTimer timer;
  PhaseLog log;
  log.phase = 3;
  SampleSource source(teacher, rng.derive(tags::kData));
  const SnapshotSchedule schedule(cfg.T3, cfg.snapshots);
  Vec x(model.d());
  Vec logits(model.M());
  Vec proj;
  record(log, 0, model, teacher);
  for (long t = 0; t < cfg.T3; ++t) {
    const double y = source.next(x);
    const double eta = cfg.T3_stage1 > 0 && t >= cfg.T3_stage1 ? cfg.eta3_stage2 : cfg.eta3;
    logits.noalias() = model.router.theta * x;
    for (int m = 0; m < model.M(); ++m) {
      if (logits[m] >= 0.0) {
        spherical_expert_step(model.experts[static_cast<size_t>(m)], x, eta * y, proj);
      }
    }
    if (schedule.due(t + 1)) record(log, t + 1, model, teacher);
  }
  log.wall_seconds = timer.seconds();
  return log;
}

void phase4_features(const MoEModel& model, const Vec& x, Eigen::Ref<Vec> out) {
  const Vec logits = gate_logits(model.router, x);
  Eigen::Index offset = 0;
  for (int m = 0; m < model.M(); ++m) {
    const auto& e = model.experts[static_cast<size_t>(m)];
    auto seg = out.segment(offset, e.J());
    offset += e.J();
    if (logits[m] < 0.0) {
      seg.setZero();
      continue;
    }
    const Vec pre = e.W * x + e.b;
    for (int j = 0; j < e.J(); ++j) seg[j] = e.act.value(j, pre[j]) / e.J();
  }
  if (offset != out.size()) throw DimensionError("feature buffer has the wrong length");
}

RidgeAccumulator::RidgeAccumulator(int dim)
    : gram_(Eigen::MatrixXd::Zero(dim, dim)), rhs_(Vec::Zero(dim)) {}

void RidgeAccumulator::add(const Eigen::Ref<const RowMat>& rows, const Eigen::Ref<const Vec>& y) {
  if (rows.cols() != gram_.cols() || rows.rows() != y.size()) {
    throw DimensionError("ridge block has the wrong shape");
  }
  gram_.selfadjointView<Eigen::Lower>().rankUpdate(rows.transpose());
  rhs_.noalias() += rows.transpose() * y;
  rows_ += rows.rows();
}

Vec RidgeAccumulator::solve(double lambda) const {
  if (!(lambda >= 0.0)) throw ConfigError("must be >= 0", "train.lambda_ridge");
  const double T = static_cast<double>(std::max(rows_, 1L));
  Eigen::MatrixXd A = gram_.selfadjointView<Eigen::Lower>();
  A /= T;
  A.diagonal().array() += lambda;
  const Vec b = rhs_ / T;
  const char* hint = "singular normal equations; set train.lambda_ridge > 0";
  if (lambda > 0.0) {
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() == Eigen::Success) return llt.solve(b);
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  if (ldlt.info() != Eigen::Success) throw DegeneracyError(hint);
  const Vec D = ldlt.vectorD();
  const double dmax = D.cwiseAbs().maxCoeff();
  if (!(dmax > 0.0) || D.minCoeff() <= kSingularRatio * dmax) throw DegeneracyError(hint);
  return ldlt.solve(b);
}

Vec ridge_fit(const Eigen::Ref<const RowMat>& G, const Vec& y, double lambda) {
  RidgeAccumulator acc(static_cast<int>(G.cols()));
  acc.add(G, y);
  return acc.solve(lambda);
}

PhaseLog run_phase4_ridge(MoEModel& model, const TeacherSpec& teacher, const TrainConfig& cfg,
                          const RngStream& rng, RidgeProblem* capture) {
  model.validate();
  PhaseTimer timer;
  PhaseLog log;
  log.phase = 4;
  RngStream init = rng.derive(tags::kBias);
  if (!cfg.bias_at_init) sample_biases(model, cfg.C_b, init);
  if (cfg.sign_flip_or_default()) {
    for (auto& e : model.experts) {
      for (int j = 0; j < e.J(); ++j) {
        if (init.rademacher() < 0) e.W.row(j) *= -1.0;
      }
    }
  }

  int dim = 0;
  for (const auto& e : model.experts) dim += e.J();
  SampleSource source(teacher, rng.derive(tags::kData));
  RidgeAccumulator acc(dim);
  if (capture) {
    capture->features.resize(cfg.T4, dim);
    capture->targets.resize(cfg.T4);
  }
  RowMat block(kRidgeBlock, dim);
  Vec yb(kRidgeBlock);
  Vec x(model.d());
  Vec phi(dim);
  long filled = 0;
  for (long t = 0; t < cfg.T4; ++t) {
    const double y = source.next(x);
    phase4_features(model, x, phi);
    block.row(filled) = phi.transpose();
    yb[filled] = y;
    if (capture) {
      capture->features.row(t) = phi.transpose();
      capture->targets[t] = y;
    }
    if (++filled == kRidgeBlock) {
      acc.add(block, yb);
      filled = 0;
    }
  }
  if (filled > 0) acc.add(block.topRows(filled), yb.head(filled));

  const Vec a = acc.solve(cfg.lambda_or_default());
  Eigen::Index offset = 0;
  for (auto& e : model.experts) {
    e.a = a.segment(offset, e.J());
    offset += e.J();
  }
  record(log, cfg.T4, model, teacher);
  log.wall_seconds = timer.seconds();
  return log;
}

VanillaResult train_vanilla(const TeacherSpec& teacher, const TrainConfig& cfg) {
  cfg.validate();
  ModelInit mi = cfg.model;
  mi.d = teacher.d;
  mi.M = 1;
  mi.J = cfg.vanilla_width_or_default();
  RngStream irng = init_stream(cfg.seed);
  VanillaResult out;
  out.model = init_model(mi, irng);
  TrainConfig phase = cfg;
  phase.T1 = cfg.vanilla_steps_or_default();
  out.log = run_phase1(out.model, teacher, phase, phase_stream(cfg.seed, 1));
  for (const auto& s : out.log.snapshots) {
    out.global_alignment.push_back(s.report.kappa_g.cwiseAbs().maxCoeff());
  }
  return out;
}

PipelineResult run_pipeline(const TrainConfig& cfg, const TeacherConfig& teacher_cfg,
                            const PhaseCallback& on_phase) {
  cfg.validate();
  PipelineResult res;
  RngStream trng = teacher_stream(cfg.seed);
  res.teacher = build_teacher(teacher_cfg, trng);
  const TeacherSpec& teacher = res.teacher;

  ModelInit mi = cfg.model;
  mi.d = teacher.d;
  RngStream irng = init_stream(cfg.seed);
  res.model = init_model(mi, irng);
  if (cfg.bias_at_init) sample_biases(res.model, cfg.C_b, irng);
  res.init = res.model;
  res.professional = professional_sets(res.init, teacher);

  auto finish = [&](int phase, PhaseLog log) {
    MoEModel probe = res.model;
    RngStream erng = eval_stream(cfg.seed).derive(static_cast<std::uint64_t>(phase));
    PhaseMetrics pm;
    pm.phase = phase;
    RngStream r1 = erng.derive(1);
    RngStream r2 = erng.derive(2);
    RngStream r3 = erng.derive(3);
    pm.routing_accuracy_top1 = routing_accuracy(probe, teacher, res.professional, cfg.eval_n, r1,
                                                RoutingMode::softmax_top1);
    pm.routing_accuracy_adaptive = routing_accuracy(probe, teacher, res.professional, cfg.eval_n,
                                                    r2, RoutingMode::adaptive_topk);
    probe.mode = RoutingMode::adaptive_topk;
    pm.test_l1 = test_l1_loss(probe, teacher, cfg.eval_n, r3);
    res.metrics.push_back(pm);
    res.checkpoints[static_cast<size_t>(phase - 1)] = res.model;
    if (on_phase) on_phase(phase, res.model, log);
    res.logs.push_back(std::move(log));
  };

  finish(1, run_phase1(res.model, teacher, cfg, phase_stream(cfg.seed, 1)));
  finish(2, run_phase2(res.model, teacher, cfg, phase_stream(cfg.seed, 2)));
  if (cfg.reinit_before_phase3) {
    reinitialize_experts(res.model, phase_stream(cfg.seed, 3).derive(tags::kReinit));
  }
  finish(3, run_phase3(res.model, teacher, cfg, phase_stream(cfg.seed, 3)));
  finish(4, run_phase4_ridge(res.model, teacher, cfg, phase_stream(cfg.seed, 4)));
  return res;
}

}  // namespace moelab
