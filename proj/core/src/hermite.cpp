// Copyright 2026 The moe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelab/hermite.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

#include "moelab/error.hpp"

namespace moelab {

HermiteSeries HermiteSeries::zeros(int p_max) {
  if (p_max < 0) throw ConfigError("p_max must be >= 0");
  return HermiteSeries(std::vector<double>(static_cast<size_t>(p_max) + 1, 0.0));
}

HermiteSeries HermiteSeries::basis(int degree, int p_max) {
  if (degree < 0 || degree > p_max) throw ConfigError("basis degree out of range");
  auto s = zeros(p_max);
  s.coeffs[static_cast<size_t>(degree)] = 1.0;
  return s;
}

HermiteSeries HermiteSeries::from_raw(std::span<const double> raw) {
  // He_i = sqrt(i!) * (He_i / sqrt(i!))
  std::vector<double> c(raw.size());
  double sqrt_fact = 1.0;
  for (size_t i = 0; i < raw.size(); ++i) {
    if (i > 0) sqrt_fact *= std::sqrt(static_cast<double>(i));
    c[i] = raw[i] * sqrt_fact;
  }
  return HermiteSeries(std::move(c));
}

double HermiteSeries::second_moment() const noexcept {
  double s = 0.0;
  for (double c : coeffs) s += c * c;
  return s;
}

double he_eval(int degree, double z) {
  if (degree < 0) throw ConfigError("Hermite degree must be >= 0");
  if (degree == 0) return 1.0;
  double prev = 1.0;
  double cur = z;
  for (int i = 1; i < degree; ++i) {
    const double next = z * cur - i * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

void normalized_he_all(double z, std::span<double> out) {
  if (out.empty()) return;
  out[0] = 1.0;
  if (out.size() == 1) return;
  out[1] = z;
  for (size_t i = 1; i + 1 < out.size(); ++i) {
    const double di = static_cast<double>(i);
    out[i + 1] = (z * out[i] - std::sqrt(di) * out[i - 1]) / std::sqrt(di + 1.0);
  }
}

namespace {

constexpr size_t kStackDegrees = 32;

}  // namespace

double series_eval(const HermiteSeries& s, double z) {
  const size_t n = s.coeffs.size();
  if (n == 0) return 0.0;
  std::vector<double> heap;
  double stack[kStackDegrees];
  std::span<double> h;
  if (n <= kStackDegrees) {
    h = std::span<double>(stack, n);
  } else {
    heap.resize(n);
    h = heap;
  }
  normalized_he_all(z, h);
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += s.coeffs[i] * h[i];
  return acc;
}

double series_derivative(const HermiteSeries& s, double z) {
  // d/dz h_i = sqrt(i) h_{i-1}
  const size_t n = s.coeffs.size();
  if (n <= 1) return 0.0;
  std::vector<double> heap;
  double stack[kStackDegrees];
  std::span<double> h;
  if (n <= kStackDegrees) {
    h = std::span<double>(stack, n);
  } else {
    heap.resize(n);
    h = heap;
  }
  normalized_he_all(z, h);
  double acc = 0.0;
  for (size_t i = 1; i < n; ++i) acc += s.coeffs[i] * std::sqrt(static_cast<double>(i)) * h[i - 1];
  return acc;
}

double GaussHermiteRule::expect(const std::function<double(double)>& f) const {
  double acc = 0.0;
  for (size_t i = 0; i < nodes.size(); ++i) acc += weights[i] * f(nodes[i]);
  return acc;
}

namespace {

GaussHermiteRule build_rule(int n) {
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    jacobi(i, i - 1) = jacobi(i - 1, i) = std::sqrt(static_cast<double>(i));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  if (eig.info() != Eigen::Success) throw QuadratureError("Golub-Welsch eigen solve failed");

  GaussHermiteRule rule;
  rule.nodes.resize(static_cast<size_t>(n));
  rule.weights.resize(static_cast<size_t>(n));
  std::vector<double> h(static_cast<size_t>(n) + 1);
  for (int k = 0; k < n; ++k) {
    double x = eig.eigenvalues()(k);
    // Newton polish on h_n(x) = 0 with h_n' = sqrt(n) h_{n-1}.
    for (int it = 0; it < 3; ++it) {
      normalized_he_all(x, h);
      const double deriv = std::sqrt(static_cast<double>(n)) * h[static_cast<size_t>(n) - 1];
      if (deriv == 0.0) break;
      x -= h[static_cast<size_t>(n)] / deriv;
    }
    normalized_he_all(x, h);
    const double hm1 = h[static_cast<size_t>(n) - 1];
    rule.nodes[static_cast<size_t>(k)] = x;
    rule.weights[static_cast<size_t>(k)] = 1.0 / (n * hm1 * hm1);
  }
  // Symmetrize to remove the last ulp of asymmetry from the eigen solve.
  for (int k = 0; k < n / 2; ++k) {
    const auto lo = static_cast<size_t>(k);
    const auto hi = static_cast<size_t>(n - 1 - k);
    const double x = 0.5 * (rule.nodes[hi] - rule.nodes[lo]);
    const double w = 0.5 * (rule.weights[hi] + rule.weights[lo]);
    rule.nodes[lo] = -x;
    rule.nodes[hi] = x;
    rule.weights[lo] = rule.weights[hi] = w;
  }
  if (n % 2 == 1) rule.nodes[static_cast<size_t>(n / 2)] = 0.0;
  return rule;
}

}  // namespace

const GaussHermiteRule& gauss_hermite(int order) {
  if (order < 1) throw QuadratureError("quadrature order must be >= 1");
  static std::mutex mu;
  static std::map<int, std::unique_ptr<GaussHermiteRule>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[order];
  if (!slot) slot = std::make_unique<GaussHermiteRule>(build_rule(order));
  return *slot;
}

HermiteSeries hermite_coeffs(const std::function<double(double)>& f, int p_max,
                             int quad_order) {
  if (p_max < 0) throw ConfigError("p_max must be >= 0");
  if (quad_order < 2 * p_max || quad_order < 1) {
    throw QuadratureError("quad_order " + std::to_string(quad_order) +
                          " cannot resolve degree " + std::to_string(p_max) +
                          " (need >= 2*p_max)");
  }
  const auto& rule = gauss_hermite(quad_order);
  auto out = HermiteSeries::zeros(p_max);
  std::vector<double> h(static_cast<size_t>(p_max) + 1);
  for (int k = 0; k < rule.order(); ++k) {
    const double x = rule.nodes[static_cast<size_t>(k)];
    const double fw = f(x) * rule.weights[static_cast<size_t>(k)];
    normalized_he_all(x, h);
    for (int i = 0; i <= p_max; ++i) out.coeffs[static_cast<size_t>(i)] += fw * h[static_cast<size_t>(i)];
  }
  return out;
}

namespace {

constexpr double kTailCut = 40.0;
constexpr int kLegendreNodes = 24;
constexpr double kPanelWidth = 0.5;

struct LegendreRule {
  std::vector<double> nodes;  // on [-1, 1]
  std::vector<double> weights;
};

const LegendreRule& gauss_legendre() {
  static const LegendreRule rule = [] {
    const int n = kLegendreNodes;
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i) {
      jacobi(i, i - 1) = jacobi(i - 1, i) = i / std::sqrt(4.0 * i * i - 1.0);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
    LegendreRule r;
    for (int k = 0; k < n; ++k) {
      r.nodes.push_back(eig.eigenvalues()(k));
      const double v = eig.eigenvectors()(0, k);
      r.weights.push_back(2.0 * v * v);
    }
    return r;
  }();
  return rule;
}

}  // namespace

HermiteSeries hermite_coeffs_piecewise(const std::function<double(double)>& f, int p_max,
                                       std::span<const double> kinks) {
  if (p_max < 0) throw ConfigError("p_max must be >= 0");
  std::vector<double> cuts{-kTailCut, kTailCut};
  for (double k : kinks) {
    if (k > -kTailCut && k < kTailCut) cuts.push_back(k);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  const auto& gl = gauss_legendre();
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  auto out = HermiteSeries::zeros(p_max);
  std::vector<double> h(static_cast<size_t>(p_max) + 1);
  for (size_t s = 0; s + 1 < cuts.size(); ++s) {
    const double lo = cuts[s];
    const double hi = cuts[s + 1];
    const int panels = std::max(1, static_cast<int>(std::ceil((hi - lo) / kPanelWidth)));
    const double width = (hi - lo) / panels;
    for (int p = 0; p < panels; ++p) {
      const double mid = lo + (p + 0.5) * width;
      for (size_t q = 0; q < gl.nodes.size(); ++q) {
        const double z = mid + 0.5 * width * gl.nodes[q];
        const double w = 0.5 * width * gl.weights[q] * inv_sqrt_2pi * std::exp(-0.5 * z * z);
        if (w == 0.0) continue;
        const double fw = f(z) * w;
        normalized_he_all(z, h);
        for (int i = 0; i <= p_max; ++i) out.coeffs[static_cast<size_t>(i)] += fw * h[static_cast<size_t>(i)];
      }
    }
  }
  return out;
}

std::optional<int> information_exponent(const HermiteSeries& s, double tol) {
  if (!(tol > 0.0)) throw ConfigError("tolerance must be > 0");
  for (size_t i = 0; i < s.coeffs.size(); ++i) {
    if (std::abs(s.coeffs[i]) > tol) return static_cast<int>(i);
  }
  return std::nullopt;
}

HermiteSeries normalize_unit_variance(const HermiteSeries& s) {
  double var = 0.0;
  for (size_t i = 1; i < s.coeffs.size(); ++i) var += s.coeffs[i] * s.coeffs[i];
  if (!(var > 0.0)) throw ConfigError("cannot normalize a series with no non-constant terms");
  const double scale = 1.0 / std::sqrt(var);
  HermiteSeries out = s;
  for (double& c : out.coeffs) c *= scale;
  return out;
}

}  // namespace moelab
