// Copyright 2026 The moe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelab/io.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <json.hpp>
#include <sstream>
#include <string>

#include "moelab/config.hpp"
#include "moelab/error.hpp"
#include "test_util.hpp"

namespace moelab {
namespace {

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

TEST(FormatDouble, ShortestRoundTrip) {
  RngStream rng(11);
  for (int i = 0; i < 2000; ++i) {
    const double x = rng.normal() * std::pow(10.0, rng.uniform(-30.0, 30.0));
    EXPECT_EQ(std::strtod(format_double(x).c_str(), nullptr), x);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_EQ(format_double(1.0), "1");
  EXPECT_EQ(std::strtod(format_double(std::numeric_limits<double>::denorm_min()).c_str(), nullptr),
            std::numeric_limits<double>::denorm_min());
}

TEST(Json, SeriesRoundTrip) {
  const HermiteSeries s({0.0, 0.1, -2.5, 1.0 / 3.0});
  EXPECT_EQ(series_from_json(series_to_json(s)).coeffs, s.coeffs);
  EXPECT_THROW(series_from_json("{\"nope\": 1}"), ConfigError);
  EXPECT_THROW(series_from_json("not json"), ConfigError);
}

TEST(Json, TeacherRoundTripIsExact) {
  RngStream rng(3);
  const auto t = build_teacher(default_experiment().resolved_teacher(), rng);
  const auto u = teacher_from_json(teacher_to_json(t));
  EXPECT_EQ(u.d, t.d);
  EXPECT_EQ(u.C, t.C);
  EXPECT_EQ(u.rho, t.rho);
  EXPECT_EQ(u.s, t.s);
  EXPECT_EQ(u.w_global, t.w_global);
  for (int c = 0; c < t.C; ++c) {
    EXPECT_EQ(u.v[c], t.v[c]);
    EXPECT_EQ(u.w_local[c], t.w_local[c]);
    EXPECT_EQ(u.f_local[c].coeffs, t.f_local[c].coeffs);
  }
  EXPECT_EQ(teacher_to_json(u), teacher_to_json(t));
}

TEST(Json, TeacherReaderValidates) {
  RngStream rng(3);
  const auto t = build_teacher(default_experiment().resolved_teacher(), rng);
  auto j = nlohmann::json::parse(teacher_to_json(t));
  j["w_global"][0] = 5.0;  // no longer unit norm
  EXPECT_ANY_THROW(teacher_from_json(j.dump()));
}

TEST(Json, ModelRoundTripIsExact) {
  for (auto kind : {ActivationKind::relu, ActivationKind::randomized_poly}) {
    RngStream rng(8);
    auto m = testutil::random_model(12, 3, 5, kind, rng);
    m.router.theta.setRandom();
    m.experts[1].b.setRandom();
    m.mode = RoutingMode::adaptive_topk;
    m.top1_weighted = false;
    const auto r = model_from_json(model_to_json(m));
    EXPECT_EQ(r.mode, m.mode);
    EXPECT_EQ(r.top1_weighted, m.top1_weighted);
    EXPECT_EQ(r.router.theta, m.router.theta);
    ASSERT_EQ(r.M(), m.M());
    for (int k = 0; k < m.M(); ++k) {
      EXPECT_EQ(r.experts[k].W, m.experts[k].W);
      EXPECT_EQ(r.experts[k].a, m.experts[k].a);
      EXPECT_EQ(r.experts[k].b, m.experts[k].b);
      EXPECT_TRUE(r.experts[k].act == m.experts[k].act);
    }
  }
}

TEST(Json, ModelReaderErrors) {
  RngStream rng(8);
  const auto m = testutil::random_model(6, 2, 3, ActivationKind::relu, rng);
  auto j = nlohmann::json::parse(model_to_json(m));
  EXPECT_EQ(j["format_version"], kCheckpointFormatVersion);

  auto bad_mode = j;
  bad_mode["mode"] = "sideways";
  EXPECT_THROW(model_from_json(bad_mode.dump()), ConfigError);

  auto missing = j;
  missing.erase("router");
  EXPECT_THROW(model_from_json(missing.dump()), ConfigError);

  auto wrong_shape = j;
  wrong_shape["experts"][0]["a"].erase(0);
  EXPECT_THROW(model_from_json(wrong_shape.dump()), DimensionError);
}

TEST(Csv, HeadersAreStable) {
  std::ostringstream a, r, l;
  write_align_experts_header(a);
  write_align_router_header(r);
  write_loss_header(l);
  EXPECT_EQ(first_line(a.str()), "phase,step,cluster,expert,neuron,kappa");
  EXPECT_EQ(first_line(r.str()), "phase,step,cluster,expert,iota");
  EXPECT_EQ(first_line(l.str()),
            "phase,routing_accuracy_top1,routing_accuracy_adaptive,test_l1,test_l1_stderr");
}

TEST(Csv, AlignmentRowsCoverEveryEntry) {
  RngStream rng(4);
  const auto t = build_teacher(default_experiment().resolved_teacher(), rng);
  const auto m = testutil::random_model(t.d, 3, 4, ActivationKind::relu, rng);
  const auto rep = alignment_report(m, t);
  std::ostringstream e, r;
  append_align_experts(e, 1, 10, rep);
  append_align_router(r, 1, 10, rep);
  const auto lines = [](const std::string& s) { return std::count(s.begin(), s.end(), '\n'); };
  // C clusters plus the global feature, M x J each.
  EXPECT_EQ(lines(e.str()), (t.C + 1) * 3 * 4);
  EXPECT_EQ(lines(r.str()), t.C * 3);
  EXPECT_NE(e.str().find("1,10,g,"), std::string::npos);
}

TEST(Csv, SamplesAndVanilla) {
  std::vector<Sample> batch(2);
  batch[0].x = Vec::Constant(3, 0.5);
  batch[0].y = 1.25;
  batch[1].x = Vec::Constant(3, -1.0);
  batch[1].cluster = 1;
  std::ostringstream s;
  write_samples_csv(s, batch);
  const std::string text = s.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);

  VanillaResult v;
  v.log.snapshots.resize(2);
  v.log.snapshots[0].step = 0;
  v.log.snapshots[1].step = 5;
  v.global_alignment = {0.1, 0.2};
  std::ostringstream o;
  write_vanilla_trace(o, v);
  EXPECT_EQ(o.str(), "step,max_abs_kappa_g\n0,0.1\n5,0.2\n");
}

TEST(Manifest, RoundTrip) {
  RunManifest m;
  m.run_id = "r-1";
  m.config_hash = "0123456789abcdef";
  m.seed = 18446744073709551615ULL;
  m.code_version = code_version();
  m.phases = {{1, "ckpt_phase1.json", 1.5}, {2, "ckpt_phase2.json", 0.25}};
  m.files = {"loss.csv"};
  m.error = "boom";
  const auto r = manifest_from_json(manifest_to_json(m));
  EXPECT_EQ(r.run_id, m.run_id);
  EXPECT_EQ(r.seed, m.seed);
  EXPECT_EQ(r.complete, false);
  ASSERT_EQ(r.phases.size(), 2u);
  EXPECT_EQ(r.phases[1].checkpoint, "ckpt_phase2.json");
  EXPECT_EQ(r.phases[0].wall_seconds, 1.5);
  EXPECT_EQ(r.files, m.files);
  EXPECT_EQ(r.error, m.error);
  EXPECT_FALSE(code_version().empty());
}

TEST(Files, WriteReadAndMissing) {
  const auto p = std::filesystem::temp_directory_path() / "moe_lab_io_test.txt";
  write_file(p, "abc\n");
  EXPECT_EQ(read_file(p), "abc\n");
  std::filesystem::remove(p);
  EXPECT_THROW(read_file(p), Error);
}

}  // namespace
}  // namespace moelab
