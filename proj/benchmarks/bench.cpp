// Copyright 2026 The moe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <cmath>

#include "moelab/hermite.hpp"
#include "moelab/metrics.hpp"
#include "moelab/model.hpp"
#include "moelab/teacher.hpp"
#include "moelab/training.hpp"

namespace moelab {
namespace {

void BM_HermiteCoeffs(benchmark::State& state) {
  const int p = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto s = hermite_coeffs([](double z) { return std::tanh(z); }, p, 2 * p + 2);
    benchmark::DoNotOptimize(s.coeffs.data());
  }
}
BENCHMARK(BM_HermiteCoeffs)->Arg(5)->Arg(10)->Arg(20);

void BM_ReluCoeffsPiecewise(benchmark::State& state) {
  const auto act = Activation::relu();
  for (auto _ : state) {
    auto s = coeff_drift(act, 0, 1.0, 0.0, {0.25}, 8, 64);
    benchmark::DoNotOptimize(s.data());
  }
}
BENCHMARK(BM_ReluCoeffsPiecewise);

void BM_ExpertForward(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  RngStream rng(1);
  ModelInit mi;
  mi.d = d;
  mi.M = 1;
  mi.J = 200;
  const MoEModel m = init_model(mi, rng);
  const Vec x = gaussian_vector(d, rng);
  for (auto _ : state) benchmark::DoNotOptimize(expert_forward(m.experts[0], x));
}
BENCHMARK(BM_ExpertForward)->Arg(100)->Arg(400);

// Phase III steps: adaptive routing touches every active expert.
void BM_Phase3Steps(benchmark::State& state) {
  TeacherConfig tc;
  tc.d = 100;
  tc.f_local = {HermiteSeries({0, 0, 0, 1, 0, 1}), HermiteSeries({0, 0, 0, 1, 1, 0})};
  tc.g_global = HermiteSeries({0, 0, 0, 1});
  tc.s = {1.0, -1.0};
  RngStream trng(2);
  const TeacherSpec t = build_teacher(tc, trng);
  TrainConfig cfg;
  cfg.model.d = tc.d;
  cfg.T3 = state.range(0);
  cfg.eta3 = 0.05;
  cfg.snapshots = 1;
  RngStream irng(3);
  ModelInit mi = cfg.model;
  MoEModel m = init_model(mi, irng);
  for (auto _ : state) {
    MoEModel work = m;
    benchmark::DoNotOptimize(run_phase3(work, t, cfg, RngStream(4)).snapshots.size());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Phase3Steps)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_RidgeFit(benchmark::State& state) {
  const auto p = state.range(0);
  RngStream rng(5);
  RowMat G(4 * p, p);
  for (Eigen::Index i = 0; i < G.size(); ++i) G.data()[i] = rng.normal();
  Vec y(G.rows());
  for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(ridge_fit(G, y, 1e-3).data());
}
BENCHMARK(BM_RidgeFit)->Arg(100)->Arg(400)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace moelab

BENCHMARK_MAIN();
