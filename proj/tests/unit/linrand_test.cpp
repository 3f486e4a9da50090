// Copyright 2026 The moe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelab/linrand.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "moelab/error.hpp"

namespace moelab {
namespace {

// Two-sided Kolmogorov-Smirnov statistic against the standard normal CDF.
double ks_normal(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    const double cdf = 0.5 * std::erfc(-xs[i] / std::sqrt(2.0));
    d = std::max({d, std::abs(cdf - i / n), std::abs((i + 1) / n - cdf)});
  }
  return d;
}

TEST(RngStreamTest, SameSeedAndStreamReplay) {
  RngStream a(42, 3);
  RngStream b(42, 3);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(a.normal(), b.normal());
    EXPECT_EQ(a.uniform_int(17), b.uniform_int(17));
  }
}

TEST(RngStreamTest, DeriveIsPureAndTagged) {
  RngStream root(7);
  RngStream c1 = root.derive(5);
  RngStream c2 = root.derive(5);
  RngStream c3 = root.derive(6);
  EXPECT_EQ(c1.engine()(), c2.engine()());
  EXPECT_NE(c1.engine()(), c3.engine()());
  RngStream fresh(7);
  EXPECT_EQ(root.engine()(), fresh.engine()());
}

TEST(RngStreamTest, DifferentSeedsDiffer) {
  RngStream a(1);
  RngStream b(2);
  int same = 0;
  for (int i = 0; i < 64; ++i) same += a.engine()() == b.engine()();
  EXPECT_EQ(same, 0);
}

TEST(RngStreamTest, NormalPassesKolmogorovSmirnov) {
  RngStream rng(123);
  std::vector<double> xs(20000);
  for (double& x : xs) x = rng.normal();
  // 1% critical value 1.63 / sqrt(n).
  EXPECT_LT(ks_normal(xs), 1.63 / std::sqrt(20000.0));
}

TEST(RngStreamTest, UniformIntIsRoughlyFlat) {
  RngStream rng(9);
  std::vector<int> count(5, 0);
  const int n = 50000;
  for (int i = 0; i < n; ++i) ++count[rng.uniform_int(5)];
  double chi2 = 0.0;
  for (int c : count) chi2 += std::pow(c - n / 5.0, 2) / (n / 5.0);
  EXPECT_LT(chi2, 13.28);  // chi2(4) at 1%
}

TEST(RngStreamTest, RademacherAndUniformRanges) {
  RngStream rng(5);
  int sum = 0;
  for (int i = 0; i < 10000; ++i) {
    const int r = rng.rademacher();
    ASSERT_TRUE(r == 1 || r == -1);
    sum += r;
    const double u = rng.uniform(-2.0, 3.0);
    ASSERT_GE(u, -2.0);
    ASSERT_LT(u, 3.0);
  }
  EXPECT_LT(std::abs(sum), 400);
}

TEST(SphereTest, UnitNormAndCoordinateLaw) {
  RngStream rng(17);
  const int d = 64;
  std::vector<double> scaled;
  for (int i = 0; i < 4000; ++i) {
    const Vec u = sample_unit_sphere(d, rng);
    ASSERT_NEAR(u.norm(), 1.0, 1e-14);
    scaled.push_back(std::sqrt(static_cast<double>(d)) * u[0]);
  }
  // sqrt(d) u_1 is close to N(0,1) at d = 64; allow the finite-d deviation.
  EXPECT_LT(ks_normal(scaled), 0.04);
}

TEST(SphereTest, OverlapConcentrates) {
  RngStream rng(3);
  const int d = 400;
  const Vec a = sample_unit_sphere(d, rng);
  double sq = 0.0;
  const int n = 2000;
  for (int i = 0; i < n; ++i) sq += std::pow(a.dot(sample_unit_sphere(d, rng)), 2);
  EXPECT_NEAR(sq / n * d, 1.0, 0.1);
}

TEST(SphereTest, RejectsBadDimension) {
  RngStream rng(1);
  EXPECT_THROW(sample_unit_sphere(0, rng), DimensionError);
}

TEST(OrthogonalizeTest, ProducesOrthonormalSet) {
  RngStream rng(21);
  std::vector<Vec> basis;
  for (int k = 0; k < 10; ++k) {
    basis.push_back(orthogonalize_against(gaussian_vector(12, rng), basis));
  }
  for (size_t i = 0; i < basis.size(); ++i) {
    EXPECT_NEAR(basis[i].norm(), 1.0, 1e-14);
    for (size_t j = 0; j < i; ++j) EXPECT_NEAR(basis[i].dot(basis[j]), 0.0, 1e-14);
  }
}

TEST(OrthogonalizeTest, DependentVectorRaises) {
  std::vector<Vec> basis{Vec::Unit(3, 0), Vec::Unit(3, 1)};
  Vec v(3);
  v << 2.0, -1.0, 0.0;
  EXPECT_THROW(orthogonalize_against(v, basis), DegeneracyError);
}

TEST(SphericalProjectTest, RemovesRadialPart) {
  RngStream rng(8);
  const Vec w = sample_unit_sphere(20, rng);
  const Vec g = gaussian_vector(20, rng);
  const Vec p = spherical_project(w, g);
  EXPECT_NEAR(p.dot(w), 0.0, 1e-13);
  EXPECT_NEAR((g - p).norm(), std::abs(g.dot(w)), 1e-12);
}

}  // namespace
}  // namespace moelab
