// Copyright 2026 The moe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace moelab {

/// A function expanded in the orthonormal probabilists' Hermite basis:
///
///   f(z) = sum_i coeffs[i] * He_i(z) / sqrt(i!)
///
/// so that E_{Z~N(0,1)}[f(Z)^2] = sum_i coeffs[i]^2.
struct HermiteSeries {
  std::vector<double> coeffs;

  HermiteSeries() = default;
  explicit HermiteSeries(std::vector<double> c) : coeffs(std::move(c)) {}

  /// All-zero series up to degree `p_max`.
  static HermiteSeries zeros(int p_max);
  /// Single normalized basis element He_k / sqrt(k!).
  static HermiteSeries basis(int degree, int p_max);
  /// Series of the raw polynomial sum_i raw[i] * He_i(z) (no 1/sqrt(i!)).
  static HermiteSeries from_raw(std::span<const double> raw);

  int p_max() const noexcept { return static_cast<int>(coeffs.size()) - 1; }
  double second_moment() const noexcept;

  friend bool operator==(const HermiteSeries&, const HermiteSeries&) = default;
};

inline constexpr int kDefaultPMax = 10;
inline constexpr double kDefaultExponentTol = 1e-8;

/// Probabilists' Hermite polynomial He_degree(z) by the three-term recurrence.
double he_eval(int degree, double z);

/// Orthonormal values h_i(z) = He_i(z)/sqrt(i!) for i = 0..p_max written to
/// `out` (size p_max+1). The normalized recurrence avoids overflow at high
/// degree.
void normalized_he_all(double z, std::span<double> out);

double series_eval(const HermiteSeries& s, double z);

/// d/dz of series_eval, using He_i' = i He_{i-1}.
double series_derivative(const HermiteSeries& s, double z);

/// Gauss-Hermite rule for the standard Gaussian weight (weights sum to 1).
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  int order() const noexcept { return static_cast<int>(nodes.size()); }
  /// E[f(Z)], Z ~ N(0,1), exact for polynomials of degree <= 2*order-1.
  double expect(const std::function<double(double)>& f) const;
};

/// Nodes from the symmetric Jacobi matrix (Golub-Welsch) refined by Newton
/// on the normalized recurrence; rules are cached per order.
const GaussHermiteRule& gauss_hermite(int order);

/// coeffs[i] = E[f(Z) He_i(Z)] / sqrt(i!) by Gauss-Hermite quadrature.
/// Throws QuadratureError unless quad_order >= 2 * p_max.
HermiteSeries hermite_coeffs(const std::function<double(double)>& f, int p_max,
                             int quad_order);

/// Same coefficients for a function that is smooth between the given kinks.
/// Each piece of [-40, 40] is integrated with composite Gauss-Legendre
/// panels, so ReLU-type kinks cost no accuracy.
HermiteSeries hermite_coeffs_piecewise(const std::function<double(double)>& f, int p_max,
                                       std::span<const double> kinks);

/// Smallest i with |coeffs[i]| > tol, or nullopt.
std::optional<int> information_exponent(const HermiteSeries& s,
                                        double tol = kDefaultExponentTol);

/// Rescale so that sum_{i>=1} coeffs[i]^2 = 1. The constant term is scaled by
/// the same factor. Throws ConfigError when all non-constant terms vanish.
HermiteSeries normalize_unit_variance(const HermiteSeries& s);

}  // namespace moelab
