// Copyright 2026 The moe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelab/model.hpp"

#include <cmath>
#include <string>

#include "moelab/error.hpp"

namespace moelab {

std::string_view to_string(ActivationKind k) {
  return k == ActivationKind::relu ? "relu" : "randomized_poly";
}

std::string_view to_string(RoutingMode m) {
  return m == RoutingMode::softmax_top1 ? "softmax_top1" : "adaptive_topk";
}

ActivationKind activation_kind_from_string(std::string_view s) {
  if (s == "relu") return ActivationKind::relu;
  if (s == "randomized_poly") return ActivationKind::randomized_poly;
  throw ConfigError("unknown activation '" + std::string(s) + "'", "model.activation");
}

RoutingMode routing_mode_from_string(std::string_view s) {
  if (s == "softmax_top1") return RoutingMode::softmax_top1;
  if (s == "adaptive_topk") return RoutingMode::adaptive_topk;
  throw ConfigError("unknown routing mode '" + std::string(s) + "'", "model.mode");
}

Activation Activation::relu() { return Activation{}; }

Activation Activation::randomized_poly(int J, int k_min, int p_max, RngStream& rng) {
  if (k_min < 0 || p_max < k_min) throw ConfigError("need 0 <= k_min <= p_max", "model.k_min");
  if (J < 1) throw ConfigError("must be >= 1", "model.J");
  Activation act;
  act.kind = ActivationKind::randomized_poly;
  act.k_min = k_min;
  act.p_max = p_max;
  act.signs.resize(J, p_max - k_min + 1);
  for (int j = 0; j < J; ++j) {
    for (int i = 0; i <= p_max - k_min; ++i) act.signs(j, i) = rng.rademacher();
  }
  return act;
}

void Activation::eval(int j, double z, double& value, double& deriv) const {
  if (kind == ActivationKind::relu) {
    value = z > 0.0 ? z : 0.0;
    deriv = z > 0.0 ? 1.0 : 0.0;
    return;
  }
  // Normalized recurrence h_{i+1} = (z h_i - sqrt(i) h_{i-1}) / sqrt(i+1),
  // h_i' = sqrt(i) h_{i-1}.
  double hm1 = 0.0;
  double h = 1.0;
  value = 0.0;
  deriv = 0.0;
  for (int i = 0; i <= p_max; ++i) {
    if (i >= k_min) {
      const double s = signs(j, i - k_min);
      value += s * h;
      deriv += s * std::sqrt(static_cast<double>(i)) * hm1;
    }
    const double next = (z * h - std::sqrt(static_cast<double>(i)) * hm1) /
                        std::sqrt(static_cast<double>(i + 1));
    hm1 = h;
    h = next;
  }
}

double Activation::value(int j, double z) const {
  double v;
  double dv;
  eval(j, z, v, dv);
  return v;
}

double Activation::derivative(int j, double z) const {
  double v;
  double dv;
  eval(j, z, v, dv);
  return dv;
}

HermiteSeries Activation::series(int j) const {
  if (kind != ActivationKind::randomized_poly) {
    throw ConfigError("series() is only defined for randomized_poly");
  }
  auto s = HermiteSeries::zeros(p_max);
  for (int i = k_min; i <= p_max; ++i) s.coeffs[static_cast<size_t>(i)] = signs(j, i - k_min);
  return s;
}

void MoEModel::validate() const {
  const int dd = d();
  if (router.M() != M()) throw DimensionError("router has wrong number of experts");
  for (const auto& e : experts) {
    if (e.d() != dd) throw DimensionError("expert dimension differs from router dimension");
    if (e.a.size() != e.J() || e.b.size() != e.J()) {
      throw DimensionError("second layer or bias length differs from J");
    }
    if (e.act.kind == ActivationKind::randomized_poly && e.act.signs.rows() != e.J()) {
      throw DimensionError("activation sign table has wrong number of rows");
    }
  }
}

void init_expert_weights(ExpertParams& e, RngStream& rng) {
  const int J = e.J();
  const int d = e.d();
  for (int j = 0; j < J; ++j) e.W.row(j) = sample_unit_sphere(d, rng).transpose();
  for (int j = 0; j < J; ++j) e.a[j] = rng.rademacher();
}

MoEModel init_model(const ModelInit& cfg, RngStream& rng) {
  if (cfg.d < 1) throw ConfigError("must be >= 1", "teacher.d");
  if (cfg.M < 1) throw ConfigError("must be >= 1", "model.M");
  if (cfg.J < 1) throw ConfigError("must be >= 1", "model.J");
  MoEModel model;
  model.experts.resize(static_cast<size_t>(cfg.M));
  for (auto& e : model.experts) {
    e.W.resize(cfg.J, cfg.d);
    e.a.resize(cfg.J);
    e.b = Vec::Zero(cfg.J);
    init_expert_weights(e, rng);
    e.act = cfg.kind == ActivationKind::relu
                ? Activation::relu()
                : Activation::randomized_poly(cfg.J, cfg.k_min, cfg.p_max, rng);
  }
  model.router.theta = Eigen::MatrixXd::Zero(cfg.M, cfg.d);
  model.top1_weighted = cfg.top1_weighted;
  return model;
}

double expert_forward(const ExpertParams& e, const Vec& x) {
  if (x.size() != e.d()) throw DimensionError("expert_forward dimension mismatch");
  const Vec pre = e.W * x + e.b;
  double acc = 0.0;
  for (int j = 0; j < e.J(); ++j) acc += e.a[j] * e.act.value(j, pre[j]);
  return acc / e.J();
}

Vec gate_logits(const RouterParams& r, const Vec& x) {
  if (x.size() != r.theta.cols()) throw DimensionError("router dimension mismatch");
  return r.theta * x;
}

Vec softmax(const Vec& logits) {
  const double mx = logits.maxCoeff();
  Vec p = (logits.array() - mx).exp();
  return p / p.sum();
}

Vec gate_probs(const RouterParams& r, const Vec& x) { return softmax(gate_logits(r, x)); }

int argmax_random_tie(const Vec& logits, RngStream& rng) {
  const double mx = logits.maxCoeff();
  int count = 0;
  int first = -1;
  for (int m = 0; m < logits.size(); ++m) {
    if (logits[m] == mx) {
      if (first < 0) first = m;
      ++count;
    }
  }
  if (count == 1) return first;
  auto k = static_cast<int>(rng.uniform_int(static_cast<size_t>(count)));
  for (int m = 0; m < logits.size(); ++m) {
    if (logits[m] == mx && k-- == 0) return m;
  }
  return first;
}

int route_top1(const RouterParams& r, const Vec& x, RngStream& rng) {
  return argmax_random_tie(gate_logits(r, x), rng);
}

std::vector<int> active_set(const RouterParams& r, const Vec& x) {
  const Vec h = gate_logits(r, x);
  std::vector<int> out;
  for (int m = 0; m < h.size(); ++m) {
    if (h[m] >= 0.0) out.push_back(m);
  }
  return out;
}

namespace {

void require_mode(const MoEModel& model, RoutingMode mode, const char* op) {
  if (model.mode != mode) {
    throw ModeError(std::string(op) + " requires mode " + std::string(to_string(mode)));
  }
}

// Fills dW = scale * (a_j / J) sigma'(w_j . x + b_j) x^T.
void expert_grad_into(const ExpertParams& e, const Vec& x, double scale, RowMat& dW) {
  const Vec pre = e.W * x + e.b;
  dW.resize(e.J(), e.d());
  for (int j = 0; j < e.J(); ++j) {
    const double c = scale * e.a[j] / e.J() * e.act.derivative(j, pre[j]);
    dW.row(j) = c * x.transpose();
  }
}

ExpertGrads zero_expert_grads(const MoEModel& model) {
  ExpertGrads g;
  g.dW.reserve(model.experts.size());
  for (const auto& e : model.experts) g.dW.push_back(RowMat::Zero(e.J(), e.d()));
  return g;
}

}  // namespace

RoutedValue forward_f1(const MoEModel& model, const Vec& x, RngStream& rng) {
  require_mode(model, RoutingMode::softmax_top1, "forward_f1");
  const Vec h = gate_logits(model.router, x);
  const int m = argmax_random_tie(h, rng);
  const double pi = model.top1_weighted ? softmax(h)[m] : 1.0;
  return {pi * expert_forward(model.experts[static_cast<size_t>(m)], x), m};
}

double forward_fhat(const MoEModel& model, const Vec& x) {
  require_mode(model, RoutingMode::adaptive_topk, "forward_fhat");
  const Vec h = gate_logits(model.router, x);
  double acc = 0.0;
  for (int m = 0; m < h.size(); ++m) {
    if (h[m] >= 0.0) acc += expert_forward(model.experts[static_cast<size_t>(m)], x);
  }
  return acc;
}

ExpertGrads grad_w_f1_routed(const MoEModel& model, const Vec& x, double y, int chosen) {
  require_mode(model, RoutingMode::softmax_top1, "grad_w_f1");
  ExpertGrads g = zero_expert_grads(model);
  g.chosen = chosen;
  const double pi = model.top1_weighted ? gate_probs(model.router, x)[chosen] : 1.0;
  const auto c = static_cast<size_t>(chosen);
  expert_grad_into(model.experts[c], x, y * pi, g.dW[c]);
  return g;
}

ExpertGrads grad_w_f1(const MoEModel& model, const Vec& x, double y, RngStream& rng) {
  require_mode(model, RoutingMode::softmax_top1, "grad_w_f1");
  return grad_w_f1_routed(model, x, y, route_top1(model.router, x, rng));
}

ExpertGrads grad_w_fhat(const MoEModel& model, const Vec& x, double y) {
  require_mode(model, RoutingMode::adaptive_topk, "grad_w_fhat");
  ExpertGrads g = zero_expert_grads(model);
  const Vec h = gate_logits(model.router, x);
  for (int m = 0; m < model.M(); ++m) {
    if (h[m] >= 0.0) {
      const auto um = static_cast<size_t>(m);
      expert_grad_into(model.experts[um], x, y, g.dW[um]);
    }
  }
  return g;
}

RouterGrads grad_theta_f1_routed(const MoEModel& model, const Vec& x, double y, int chosen) {
  require_mode(model, RoutingMode::softmax_top1, "grad_theta_f1");
  const Vec pi = gate_probs(model.router, x);
  const double common =
      pi[chosen] * y * expert_forward(model.experts[static_cast<size_t>(chosen)], x);
  RouterGrads g;
  g.chosen = chosen;
  g.dtheta.resize(model.M(), model.d());
  // 1 - pi_chosen is taken as the sum of the other probabilities so that the
  // rows cancel to rounding of that one sum.
  double others = 0.0;
  for (int m = 0; m < model.M(); ++m) {
    if (m != chosen) others += pi[m];
  }
  for (int m = 0; m < model.M(); ++m) {
    const double coef = (m == chosen ? others : -pi[m]) * common;
    g.dtheta.row(m) = coef * x.transpose();
  }
  return g;
}

RouterGrads grad_theta_f1(const MoEModel& model, const Vec& x, double y, RngStream& rng) {
  require_mode(model, RoutingMode::softmax_top1, "grad_theta_f1");
  return grad_theta_f1_routed(model, x, y, route_top1(model.router, x, rng));
}

}  // namespace moelab
