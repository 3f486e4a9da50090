// Copyright 2026 The moe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "moelab/error.hpp"
#include "moelab/parallel.hpp"

namespace moelab {

namespace {

constexpr long kChunk = 2048;

// One child stream per chunk, keyed off a single draw from the caller's
// stream, so results do not depend on the worker count.
RngStream chunk_parent(RngStream& rng) { return rng.derive(rng.engine()()); }

bool contains(const std::vector<int>& set, int m) {
  return std::find(set.begin(), set.end(), m) != set.end();
}

}  // namespace

AlignmentReport alignment_report(const MoEModel& model, const TeacherSpec& teacher) {
  if (model.d() != teacher.d) throw DimensionError("model and teacher dimensions differ");
  const int M = model.M();
  const int J = M > 0 ? model.experts.front().J() : 0;
  AlignmentReport r;
  r.kappa.assign(static_cast<size_t>(teacher.C), Eigen::MatrixXd(M, J));
  r.kappa_g.resize(M, J);
  for (int m = 0; m < M; ++m) {
    const auto& W = model.experts[static_cast<size_t>(m)].W;
    if (W.rows() != J) throw DimensionError("experts have different widths");
    for (int c = 0; c < teacher.C; ++c) {
      r.kappa[static_cast<size_t>(c)].row(m) = (W * teacher.w_local[static_cast<size_t>(c)]).transpose();
    }
    r.kappa_g.row(m) = (W * teacher.w_global).transpose();
  }
  r.iota.resize(teacher.C, M);
  for (int c = 0; c < teacher.C; ++c) {
    r.iota.row(c) = (model.router.theta * teacher.v[static_cast<size_t>(c)]).transpose();
  }
  return r;
}

std::vector<int> professional_clusters(const MoEModel& model, const TeacherSpec& teacher) {
  if (model.d() != teacher.d) throw DimensionError("model and teacher dimensions differ");
  std::vector<int> out(static_cast<size_t>(model.M()), 0);
  for (int m = 0; m < model.M(); ++m) {
    const auto& W = model.experts[static_cast<size_t>(m)].W;
    double best = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < teacher.C; ++c) {
      const double v = (W * teacher.w_local[static_cast<size_t>(c)]).maxCoeff();
      if (v > best) {
        best = v;
        out[static_cast<size_t>(m)] = c;
      }
    }
  }
  return out;
}

ProfessionalSets professional_sets(const MoEModel& model, const TeacherSpec& teacher) {
  ProfessionalSets sets(static_cast<size_t>(teacher.C));
  const auto owner = professional_clusters(model, teacher);
  for (int m = 0; m < model.M(); ++m) sets[static_cast<size_t>(owner[static_cast<size_t>(m)])].push_back(m);
  return sets;
}

double routing_accuracy(const MoEModel& model, const TeacherSpec& teacher,
                        const ProfessionalSets& professional, long n, RngStream& rng,
                        std::optional<RoutingMode> mode) {
  if (n <= 0) throw ConfigError("sample count must be > 0", "eval.n");
  if (static_cast<int>(professional.size()) != teacher.C) {
    throw DimensionError("professional sets do not match the cluster count");
  }
  if (model.d() != teacher.d) throw DimensionError("model and teacher dimensions differ");
  const RoutingMode use = mode.value_or(model.mode);
  const RngStream parent = chunk_parent(rng);
  const auto chunks = static_cast<size_t>((n + kChunk - 1) / kChunk);
  std::vector<long> hits(chunks, 0);
  parallel_for(chunks, [&](size_t k) {
    RngStream r = parent.derive(k);
    const long begin = static_cast<long>(k) * kChunk;
    const long end = std::min(n, begin + kChunk);
    Vec x;
    int cluster = 0;
    long h = 0;
    for (long i = begin; i < end; ++i) {
      draw_sample(teacher, r, x, cluster);
      const auto& pro = professional[static_cast<size_t>(cluster)];
      const Vec logits = model.router.theta * x;
      if (use == RoutingMode::softmax_top1) {
        if (contains(pro, argmax_random_tie(logits, r))) ++h;
      } else {
        bool any = false;
        bool ok = true;
        for (int m = 0; m < logits.size() && ok; ++m) {
          if (logits[m] >= 0.0) {
            any = true;
            ok = contains(pro, m);
          }
        }
        if (any && ok) ++h;
      }
    }
    hits[k] = h;
  });
  long total = 0;
  for (long h : hits) total += h;
  return static_cast<double>(total) / static_cast<double>(n);
}

LossEstimate test_l1_loss(const MoEModel& model, const TeacherSpec& teacher, long n,
                          RngStream& rng) {
  if (model.mode != RoutingMode::adaptive_topk) {
    throw ModeError("test_l1_loss requires mode adaptive_topk");
  }
  if (n <= 0) throw ConfigError("sample count must be > 0", "eval.n");
  if (model.d() != teacher.d) throw DimensionError("model and teacher dimensions differ");
  const RngStream parent = chunk_parent(rng);
  const auto chunks = static_cast<size_t>((n + kChunk - 1) / kChunk);
  std::vector<double> sum(chunks, 0.0);
  std::vector<double> sum_sq(chunks, 0.0);
  parallel_for(chunks, [&](size_t k) {
    RngStream r = parent.derive(k);
    const long begin = static_cast<long>(k) * kChunk;
    const long end = std::min(n, begin + kChunk);
    Vec x;
    int cluster = 0;
    for (long i = begin; i < end; ++i) {
      draw_sample(teacher, r, x, cluster);
      const double err = std::abs(forward_fhat(model, x) - noiseless_target(teacher, x, cluster));
      sum[k] += err;
      sum_sq[k] += err * err;
    }
  });
  double s = 0.0;
  double s2 = 0.0;
  for (size_t k = 0; k < chunks; ++k) {
    s += sum[k];
    s2 += sum_sq[k];
  }
  const double nn = static_cast<double>(n);
  LossEstimate out;
  out.mean = s / nn;
  const double var = n > 1 ? std::max(0.0, (s2 - nn * out.mean * out.mean) / (nn - 1.0)) : 0.0;
  out.stderr_ = std::sqrt(var / nn);
  return out;
}

std::vector<HermiteSeries> coeff_drift(const Activation& act, int neuron, double a, double b,
                                       const std::vector<double>& shifts, int p_max,
                                       int quad_order) {
  std::vector<HermiteSeries> out;
  out.reserve(shifts.size());
  for (double shift : shifts) {
    auto f = [&](double z) { return a * act.value(neuron, z + shift + b); };
    if (act.kind == ActivationKind::relu) {
      const double kink = -(shift + b);
      out.push_back(hermite_coeffs_piecewise(f, p_max, std::span<const double>(&kink, 1)));
    } else {
      out.push_back(hermite_coeffs(f, p_max, quad_order));
    }
  }
  return out;
}

BihariBounds bihari_bounds(double A0, double B, int k, long t) {
  if (!(A0 > 0.0)) throw ConfigError("A0 must be > 0");
  if (!(B >= 0.0)) throw ConfigError("B must be >= 0");
  if (k <= 3) throw ConfigError("k must be > 3");
  if (t < 0) throw ConfigError("t must be >= 0");
  const double km2 = k - 2.0;
  const double base = km2 * std::pow(A0, km2) * static_cast<double>(t);
  BihariBounds out;
  const double den_lo = 1.0 - B * base;
  out.lower = den_lo > 0.0 ? A0 / std::pow(den_lo, 1.0 / km2)
                           : std::numeric_limits<double>::infinity();
  const double den_hi = 1.0 - B * std::pow(1.0 + B, k - 1.0) * base;
  if (A0 >= 1.0 && den_hi > 0.0) out.upper = A0 / std::pow(den_hi, 1.0 / km2);
  return out;
}

}  // namespace moelab
