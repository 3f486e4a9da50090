// Copyright 2026 The moe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelab/linrand.hpp"

#include <array>
#include <cmath>

#include "moelab/error.hpp"

namespace moelab {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream) {
  const std::array<std::uint32_t, 4> words{
      static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

constexpr double kDegenerateResidual = 1e-10;

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), engine_(make_engine(seed, stream)) {}

RngStream RngStream::derive(std::uint64_t tag) const {
  return RngStream(seed_, splitmix64(stream_ ^ splitmix64(tag)));
}

double RngStream::normal() { return normal_(engine_); }

double RngStream::uniform() { return std::generate_canonical<double, 53>(engine_); }

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int RngStream::rademacher() { return (engine_() >> 63) ? 1 : -1; }

std::size_t RngStream::uniform_int(std::size_t n) {
  if (n == 0) throw DimensionError("uniform_int needs n > 0");
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(engine_);
}

Vec gaussian_vector(int d, RngStream& rng) {
  if (d < 0) throw DimensionError("negative dimension");
  Vec v(d);
  for (int i = 0; i < d; ++i) v[i] = rng.normal();
  return v;
}

Vec sample_unit_sphere(int d, RngStream& rng) {
  if (d < 1) throw DimensionError("sphere dimension must be >= 1");
  for (;;) {
    Vec v = gaussian_vector(d, rng);
    const double n = v.norm();
    if (n > 0.0) return v / n;
  }
}

Vec orthogonalize_against(const Vec& v, std::span<const Vec> basis) {
  Vec r = v;
  for (int pass = 0; pass < 2; ++pass) {
    for (const Vec& b : basis) {
      if (b.size() != r.size()) throw DimensionError("basis dimension mismatch");
      r -= b.dot(r) * b;
    }
  }
  const double n = r.norm();
  if (!(n >= kDegenerateResidual)) {
    throw DegeneracyError("vector lies in the span of the basis (residual " + std::to_string(n) +
                          ")");
  }
  return r / n;
}

Vec spherical_project(const Vec& w, const Vec& g) {
  if (w.size() != g.size()) throw DimensionError("spherical_project dimension mismatch");
  return g - w.dot(g) * w;
}

}  // namespace moelab
