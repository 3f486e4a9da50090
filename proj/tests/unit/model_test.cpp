// Copyright 2026 The moe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelab/model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "moelab/error.hpp"
#include "test_util.hpp"

namespace moelab {
namespace {

using testutil::fd_relative_error;
using testutil::random_model;

TEST(ActivationTest, RandomizedPolySingleNeuron) {
  Activation act;
  act.kind = ActivationKind::randomized_poly;
  act.k_min = 3;
  act.p_max = 3;
  act.signs = Eigen::MatrixXd::Ones(1, 1);
  ExpertParams e;
  e.W = RowMat::Zero(1, 4);
  e.W(0, 0) = 1.0;
  e.a = Vec::Ones(1);
  e.b = Vec::Zero(1);
  e.act = act;
  Vec x = Vec::Zero(4);
  x[0] = 1.0;
  EXPECT_NEAR(expert_forward(e, x), -2.0 / std::sqrt(6.0), 1e-14);
}

TEST(ActivationTest, ReluForwardAndKink) {
  ExpertParams e;
  e.W = RowMat::Zero(1, 3);
  e.W(0, 0) = 1.0;
  e.a = Vec::Ones(1);
  e.b = Vec::Zero(1);
  e.act = Activation::relu();
  Vec x = Vec::Zero(3);
  x[0] = 2.0;
  EXPECT_DOUBLE_EQ(expert_forward(e, x), 2.0);
  EXPECT_DOUBLE_EQ(e.act.derivative(0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(e.act.derivative(0, 1e-300), 1.0);
}

TEST(ActivationTest, SignsAreRademacherAndSeriesMatches) {
  RngStream rng(1);
  const auto act = Activation::randomized_poly(50, 2, 6, rng);
  EXPECT_TRUE((act.signs.array().abs() == 1.0).all());
  for (int j = 0; j < 5; ++j) {
    const auto s = act.series(j);
    for (double z : {-1.5, 0.2, 2.0}) {
      EXPECT_NEAR(series_eval(s, z), act.value(j, z), 1e-12);
      EXPECT_NEAR(series_derivative(s, z), act.derivative(j, z), 1e-11);
    }
    EXPECT_EQ(information_exponent(s), 2);
  }
  EXPECT_THROW(Activation::relu().series(0), ConfigError);
}

TEST(ModelTest, ZeroSecondLayerGivesZero) {
  RngStream rng(2);
  auto m = random_model(10, 2, 5, ActivationKind::randomized_poly, rng);
  m.experts[0].a.setZero();
  EXPECT_EQ(expert_forward(m.experts[0], Vec::Random(10)), 0.0);
}

TEST(ModelTest, ReluIsPositivelyHomogeneousInA) {
  RngStream rng(3);
  auto m = random_model(8, 1, 12, ActivationKind::relu, rng);
  const Vec x = gaussian_vector(8, rng);
  const double base = expert_forward(m.experts[0], x);
  m.experts[0].a *= 2.5;
  EXPECT_NEAR(expert_forward(m.experts[0], x), 2.5 * base, 1e-12 * (1.0 + std::abs(base)));
}

TEST(GateTest, SoftmaxProperties) {
  RouterParams r;
  r.theta = Eigen::MatrixXd::Zero(4, 3);
  const Vec p = gate_probs(r, Vec::Random(3));
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(p[i], 0.25);

  Vec l(2);
  l << 10.0, 0.0;
  const Vec q = softmax(l);
  EXPECT_NEAR(q[0], 1.0 / (1.0 + std::exp(-10.0)), 1e-15);
  EXPECT_NEAR(q[1], std::exp(-10.0) / (1.0 + std::exp(-10.0)), 1e-15);

  Vec big(3);
  big << 800.0, 799.0, 780.0;
  const Vec s1 = softmax(big);
  const Vec s2 = softmax((big.array() - 1234.5).matrix());
  EXPECT_TRUE(s1.allFinite());
  EXPECT_NEAR(s1.sum(), 1.0, 1e-12);
  EXPECT_LT((s1 - s2).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_TRUE((s1.array() > 0.0).all());
}

TEST(RouteTest, DistinctLogitsPickArgmax) {
  RngStream rng(4);
  Vec l(3);
  l << 0.1, 0.9, 0.3;
  EXPECT_EQ(argmax_random_tie(l, rng), 1);
}

TEST(RouteTest, TiesAreUniform) {
  RngStream rng(5);
  RouterParams r;
  r.theta = Eigen::MatrixXd::Zero(4, 3);
  std::vector<int> count(4, 0);
  const int n = 100000;
  const Vec x = Vec::Ones(3);
  for (int i = 0; i < n; ++i) ++count[static_cast<size_t>(route_top1(r, x, rng))];
  for (int c : count) EXPECT_NEAR(c / static_cast<double>(n), 0.25, 0.01);
}

TEST(RouteTest, NoTieDoesNotConsumeRandomness) {
  RngStream a(6);
  RngStream b(6);
  Vec l(3);
  l << 0.0, 1.0, 0.5;
  argmax_random_tie(l, a);
  EXPECT_EQ(a.engine()(), b.engine()());
}

TEST(RouteTest, SingleExpertAlwaysChosen) {
  RngStream rng(7);
  RouterParams r;
  r.theta = Eigen::MatrixXd::Random(1, 5);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(route_top1(r, gaussian_vector(5, rng), rng), 0);
}

TEST(ActiveSetTest, ThresholdAtZero) {
  RouterParams r;
  r.theta = Eigen::MatrixXd::Zero(3, 1);
  r.theta << -1.0, 2.0, 0.0;
  Vec x = Vec::Ones(1);
  EXPECT_EQ(active_set(r, x), (std::vector<int>{1, 2}));
  r.theta = -r.theta;
  EXPECT_EQ(active_set(r, x), (std::vector<int>{0, 2}));
  r.theta.setZero();
  EXPECT_EQ(active_set(r, x), (std::vector<int>{0, 1, 2}));
}

TEST(ForwardTest, F1ComposesGateRouteAndExpert) {
  RngStream rng(8);
  auto m = random_model(6, 3, 4, ActivationKind::randomized_poly, rng);
  m.router.theta = Eigen::MatrixXd::Random(3, 6);
  const Vec x = gaussian_vector(6, rng);
  RngStream r1(9);
  RngStream r2(9);
  const auto out = forward_f1(m, x, r1);
  const int k = route_top1(m.router, x, r2);
  EXPECT_EQ(out.chosen, k);
  EXPECT_NEAR(out.value,
              gate_probs(m.router, x)[k] * expert_forward(m.experts[static_cast<size_t>(k)], x),
              1e-14);
}

TEST(ForwardTest, F1WithZeroRouterHalvesForTwoExperts) {
  RngStream rng(10);
  auto m = random_model(5, 2, 3, ActivationKind::relu, rng);
  const Vec x = gaussian_vector(5, rng);
  const auto out = forward_f1(m, x, rng);
  EXPECT_NEAR(out.value, 0.5 * expert_forward(m.experts[static_cast<size_t>(out.chosen)], x),
              1e-15);
}

TEST(ForwardTest, F1SingleExpertIsTheExpert) {
  RngStream rng(11);
  auto m = random_model(5, 1, 3, ActivationKind::relu, rng);
  const Vec x = gaussian_vector(5, rng);
  EXPECT_DOUBLE_EQ(forward_f1(m, x, rng).value, expert_forward(m.experts[0], x));
}

TEST(ForwardTest, FhatSumsActiveExperts) {
  RngStream rng(12);
  auto m = random_model(4, 3, 5, ActivationKind::randomized_poly, rng);
  m.mode = RoutingMode::adaptive_topk;
  const Vec x = gaussian_vector(4, rng);
  double all = 0.0;
  for (const auto& e : m.experts) all += expert_forward(e, x);
  EXPECT_NEAR(forward_fhat(m, x), all, 1e-14);

  m.router.theta = Eigen::MatrixXd::Zero(3, 4);
  m.router.theta.row(1) = x.transpose();
  m.router.theta.row(0) = -x.transpose();
  m.router.theta.row(2) = -x.transpose();
  EXPECT_DOUBLE_EQ(forward_fhat(m, x), expert_forward(m.experts[1], x));

  m.router.theta.row(1) = -x.transpose();
  EXPECT_EQ(forward_fhat(m, x), 0.0);
}

TEST(ForwardTest, ModeMismatchRaises) {
  RngStream rng(13);
  auto m = random_model(4, 2, 3, ActivationKind::relu, rng);
  const Vec x = gaussian_vector(4, rng);
  EXPECT_THROW(forward_fhat(m, x), ModeError);
  EXPECT_THROW(grad_w_fhat(m, x, 1.0), ModeError);
  m.mode = RoutingMode::adaptive_topk;
  EXPECT_THROW(forward_f1(m, x, rng), ModeError);
  EXPECT_THROW(grad_theta_f1(m, x, 1.0, rng), ModeError);
}

TEST(GradientTest, ExpertGradF1MatchesFiniteDifferences) {
  RngStream rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    auto m = random_model(7, 3, 4, ActivationKind::randomized_poly, rng);
    m.router.theta = 0.3 * Eigen::MatrixXd::Random(3, 7);
    const Vec x = gaussian_vector(7, rng);
    const double y = rng.normal();
    RngStream r(15);
    const auto g = grad_w_f1(m, x, y, r);
    for (int k = 0; k < 3; ++k) {
      const auto uk = static_cast<size_t>(k);
      if (k != g.chosen) {
        EXPECT_EQ(g.dW[uk].cwiseAbs().maxCoeff(), 0.0);
        continue;
      }
      auto f = [&](const MoEModel& mm) {
        RngStream rr(15);
        return y * forward_f1(mm, x, rr).value;
      };
      EXPECT_LT(fd_relative_error(m, k, g.dW[uk], f), 1e-5);
    }
  }
}

TEST(GradientTest, ExpertGradFhatMatchesFiniteDifferences) {
  RngStream rng(16);
  for (int trial = 0; trial < 20; ++trial) {
    auto m = random_model(6, 3, 5, ActivationKind::randomized_poly, rng);
    m.mode = RoutingMode::adaptive_topk;
    m.router.theta = Eigen::MatrixXd::Random(3, 6);
    const Vec x = gaussian_vector(6, rng);
    const double y = rng.normal();
    const auto g = grad_w_fhat(m, x, y);
    const auto active = active_set(m.router, x);
    for (int k = 0; k < 3; ++k) {
      const auto uk = static_cast<size_t>(k);
      if (std::find(active.begin(), active.end(), k) == active.end()) {
        EXPECT_EQ(g.dW[uk].cwiseAbs().maxCoeff(), 0.0);
        continue;
      }
      auto f = [&](const MoEModel& mm) { return y * forward_fhat(mm, x); };
      EXPECT_LT(fd_relative_error(m, k, g.dW[uk], f), 1e-5);
    }
  }
}

TEST(GradientTest, ReluGradientAwayFromKinks) {
  RngStream rng(17);
  auto m = random_model(5, 1, 6, ActivationKind::relu, rng);
  m.mode = RoutingMode::adaptive_topk;
  Vec x = gaussian_vector(5, rng);
  const Vec pre = m.experts[0].W * x;
  ASSERT_GT(pre.cwiseAbs().minCoeff(), 1e-3);
  const auto g = grad_w_fhat(m, x, 1.3);
  auto f = [&](const MoEModel& mm) { return 1.3 * forward_fhat(mm, x); };
  EXPECT_LT(fd_relative_error(m, 0, g.dW[0], f), 1e-5);
}

TEST(GradientTest, RouterGradMatchesFiniteDifferences) {
  RngStream rng(18);
  for (int trial = 0; trial < 20; ++trial) {
    auto m = random_model(6, 4, 5, ActivationKind::randomized_poly, rng);
    m.router.theta = 0.5 * Eigen::MatrixXd::Random(4, 6);
    const Vec x = gaussian_vector(6, rng);
    const double y = rng.normal();
    RngStream r(19);
    const auto g = grad_theta_f1(m, x, y, r);
    const double h = 1e-5;
    Eigen::MatrixXd fd(4, 6);
    for (int a = 0; a < 4; ++a) {
      for (int b = 0; b < 6; ++b) {
        MoEModel p = m;
        MoEModel q = m;
        p.router.theta(a, b) += h;
        q.router.theta(a, b) -= h;
        // Keep the routed expert fixed: differentiate pi_{m(x)} f_{m(x)}.
        const double fp = y * gate_probs(p.router, x)[g.chosen] *
                          expert_forward(m.experts[static_cast<size_t>(g.chosen)], x);
        const double fq = y * gate_probs(q.router, x)[g.chosen] *
                          expert_forward(m.experts[static_cast<size_t>(g.chosen)], x);
        fd(a, b) = (fp - fq) / (2.0 * h);
      }
    }
    EXPECT_LT((fd - g.dtheta).norm() / std::max(1e-12, g.dtheta.norm()), 1e-5);
  }
}

TEST(GradientTest, RouterGradRowsCancel) {
  RngStream rng(20);
  for (int trial = 0; trial < 100; ++trial) {
    auto m = random_model(10, 8, 4, ActivationKind::randomized_poly, rng);
    m.router.theta = 2.0 * Eigen::MatrixXd::Random(8, 10);
    const Vec x = gaussian_vector(10, rng);
    const auto g = grad_theta_f1(m, x, rng.normal(), rng);
    const double scale = g.dtheta.cwiseAbs().maxCoeff();
    EXPECT_LE(g.dtheta.colwise().sum().cwiseAbs().maxCoeff(), 1e-12 * std::max(scale, 1e-300));
  }
}

TEST(GradientTest, ZeroLabelGivesZeroGradients) {
  RngStream rng(21);
  auto m = random_model(5, 3, 4, ActivationKind::relu, rng);
  const Vec x = gaussian_vector(5, rng);
  const auto gw = grad_w_f1(m, x, 0.0, rng);
  for (const auto& d : gw.dW) EXPECT_EQ(d.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(grad_theta_f1(m, x, 0.0, rng).dtheta.cwiseAbs().maxCoeff(), 0.0);
}

TEST(GradientTest, ZeroRouterGivesEveryExpertAFhatGradient) {
  RngStream rng(22);
  auto m = random_model(5, 3, 4, ActivationKind::randomized_poly, rng);
  m.mode = RoutingMode::adaptive_topk;
  const auto g = grad_w_fhat(m, gaussian_vector(5, rng), 1.0);
  for (const auto& d : g.dW) EXPECT_GT(d.cwiseAbs().maxCoeff(), 0.0);
}

TEST(ModelTest, ValidateCatchesShapeMismatch) {
  RngStream rng(23);
  auto m = random_model(5, 2, 4, ActivationKind::relu, rng);
  EXPECT_NO_THROW(m.validate());
  m.experts[1].W = RowMat::Zero(4, 6);
  EXPECT_THROW(m.validate(), DimensionError);
}

TEST(ModelTest, InitDrawsUnitRowsAndSigns) {
  RngStream rng(24);
  ModelInit mi;
  mi.d = 12;
  mi.M = 3;
  mi.J = 9;
  const auto m = init_model(mi, rng);
  for (const auto& e : m.experts) {
    EXPECT_LT((e.W.rowwise().norm().array() - 1.0).abs().maxCoeff(), 1e-14);
    EXPECT_TRUE((e.a.array().abs() == 1.0).all());
    EXPECT_EQ(e.b.cwiseAbs().maxCoeff(), 0.0);
  }
  EXPECT_EQ(m.router.theta.cwiseAbs().maxCoeff(), 0.0);
}

TEST(ModelTest, ExpertPermutationPermutesOutputs) {
  RngStream rng(25);
  auto m = random_model(6, 3, 4, ActivationKind::randomized_poly, rng);
  m.mode = RoutingMode::adaptive_topk;
  m.router.theta = Eigen::MatrixXd::Random(3, 6);
  MoEModel p = m;
  std::swap(p.experts[0], p.experts[2]);
  p.router.theta.row(0) = m.router.theta.row(2);
  p.router.theta.row(2) = m.router.theta.row(0);
  for (int i = 0; i < 10; ++i) {
    const Vec x = gaussian_vector(6, rng);
    EXPECT_NEAR(forward_fhat(m, x), forward_fhat(p, x), 1e-13);
  }
}

TEST(ModelTest, EnumStringsRoundTrip) {
  EXPECT_EQ(activation_kind_from_string(to_string(ActivationKind::relu)), ActivationKind::relu);
  EXPECT_EQ(routing_mode_from_string(to_string(RoutingMode::adaptive_topk)),
            RoutingMode::adaptive_topk);
  EXPECT_THROW(activation_kind_from_string("tanh"), ConfigError);
}

}  // namespace
}  // namespace moelab
