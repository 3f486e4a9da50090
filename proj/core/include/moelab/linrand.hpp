// Copyright 2026 The moe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <span>

namespace moelab {

using Vec = Eigen::VectorXd;

/// Seeded random stream. Equal (seed, stream) pairs replay identical draws;
/// derive() is the only way to split off an independent child stream.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  /// Child stream keyed by `tag`; does not advance this stream.
  RngStream derive(std::uint64_t tag) const;

  double normal();
  /// Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  int rademacher();
  /// Uniform integer in [0, n). n must be > 0.
  std::size_t uniform_int(std::size_t n);

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Stream tags used by the training pipeline, so that each phase and each
/// consumer owns a disjoint stream.
namespace tags {
inline constexpr std::uint64_t kTeacher = 0x7465616368ULL;
inline constexpr std::uint64_t kInit = 0x696e6974ULL;
inline constexpr std::uint64_t kData = 0x64617461ULL;
inline constexpr std::uint64_t kRouting = 0x726f757465ULL;
inline constexpr std::uint64_t kReinit = 0x7265696e6974ULL;
inline constexpr std::uint64_t kBias = 0x62696173ULL;
inline constexpr std::uint64_t kEval = 0x6576616cULL;
}  // namespace tags

Vec gaussian_vector(int d, RngStream& rng);

/// Uniform on S^{d-1}: a Gaussian draw divided by its norm. Throws
/// DimensionError for d < 1.
Vec sample_unit_sphere(int d, RngStream& rng);

/// Gram-Schmidt (two passes) of v against an orthonormal basis, then
/// normalize. Throws DegeneracyError if the residual norm is below 1e-10.
Vec orthogonalize_against(const Vec& v, std::span<const Vec> basis);

/// (I - w w^T) g.
Vec spherical_project(const Vec& w, const Vec& g);

}  // namespace moelab
