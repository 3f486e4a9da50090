// Copyright 2026 The moe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelab/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "moelab/error.hpp"

namespace moelab {

namespace {

constexpr double kSumTol = 1e-12;
constexpr double kOrthTol = 1e-10;
constexpr double kUnitTol = 1e-10;

bool nonzero_series(const HermiteSeries& s) {
  for (double c : s.coeffs) {
    if (c != 0.0) return true;
  }
  return false;
}

double leading_coeff(const HermiteSeries& s) {
  const auto k = information_exponent(s);
  return k ? s.coeffs[static_cast<size_t>(*k)] : 0.0;
}

void check_leading(const std::vector<HermiteSeries>& f, const HermiteSeries& g) {
  const auto kg = information_exponent(g);
  for (size_t c = 0; c < f.size(); ++c) {
    const auto kc = information_exponent(f[c]);
    if (kc != kg || std::abs(std::abs(leading_coeff(f[c])) - std::abs(leading_coeff(g))) > 1e-12) {
      throw ConfigError("cluster " + std::to_string(c) +
                            " leading Hermite coefficient does not match the global link",
                        "teacher.matched_leading_coeff");
    }
  }
}

}  // namespace

double TeacherConfig::rho_or_default() const {
  if (rho) return *rho;
  return std::ceil(std::pow(std::log(static_cast<double>(d)), 1.5));
}

double TeacherConfig::overlap_slack_or_default() const {
  if (overlap_slack) return *overlap_slack;
  return 5.0 * std::sqrt(std::log(static_cast<double>(std::max(d, 2))));
}

void TeacherConfig::validate() const {
  if (C < 1) throw ConfigError("must be >= 1", "teacher.C");
  if (d < 2 * C + 2) {
    throw ConfigError("must be >= 2C+2 = " + std::to_string(2 * C + 2), "teacher.d");
  }
  if (static_cast<int>(f_local.size()) != C) {
    throw ConfigError("expected " + std::to_string(C) + " local links", "teacher.f_local");
  }
  if (static_cast<int>(s.size()) != C) {
    throw ConfigError("expected " + std::to_string(C) + " mixing signs", "teacher.s");
  }
  double sum = 0.0;
  for (double x : s) sum += x;
  if (std::abs(sum) > kSumTol) throw ConfigError("mixing signs must sum to 0", "teacher.s");
  for (const auto& f : f_local) {
    if (!nonzero_series(f)) throw ConfigError("local link is identically zero", "teacher.f_local");
  }
  bool any_s = false;
  for (double x : s) any_s = any_s || x != 0.0;
  if (any_s && !nonzero_series(g_global)) {
    throw ConfigError("global link is identically zero", "teacher.g_global");
  }
  if (rho && !(*rho >= 0.0)) throw ConfigError("must be >= 0", "teacher.rho");
  if (!(zeta >= 0.0)) throw ConfigError("must be >= 0", "teacher.zeta");
  if (overlap_slack && !(*overlap_slack > 0.0)) {
    throw ConfigError("must be > 0", "teacher.overlap_slack");
  }
  if (matched_leading_coeff) {
    if (normalize_links) {
      std::vector<HermiteSeries> f;
      for (const auto& x : f_local) f.push_back(normalize_unit_variance(x));
      check_leading(f, normalize_unit_variance(g_global));
    } else {
      check_leading(f_local, g_global);
    }
  }
}

void TeacherSpec::validate() const {
  if (C < 1) throw ConfigError("C must be >= 1");
  const auto uc = static_cast<size_t>(C);
  if (v.size() != uc || w_local.size() != uc || f_local.size() != uc || s.size() != uc) {
    throw DimensionError("per-cluster lists must have length C");
  }
  double sum = 0.0;
  for (double x : s) sum += x;
  if (std::abs(sum) > kSumTol) throw ConfigError("mixing signs must sum to 0", "teacher.s");

  std::vector<const Vec*> feats;
  for (const auto& w : w_local) feats.push_back(&w);
  feats.push_back(&w_global);
  auto check_unit = [&](const Vec& u, const char* what) {
    if (u.size() != d) throw DimensionError(std::string(what) + " has wrong dimension");
    if (std::abs(u.norm() - 1.0) > kUnitTol) {
      throw DegeneracyError(std::string(what) + " is not unit norm");
    }
  };
  for (const auto* w : feats) check_unit(*w, "feature index");
  for (const auto& vc : v) check_unit(vc, "cluster mean");

  for (const auto& vc : v) {
    for (const auto* w : feats) {
      if (std::abs(vc.dot(*w)) > kOrthTol) {
        throw DegeneracyError("cluster mean is not orthogonal to a feature index");
      }
    }
  }
  const double bound = overlap_slack / std::sqrt(static_cast<double>(d));
  for (size_t i = 0; i < feats.size(); ++i) {
    for (size_t j = i + 1; j < feats.size(); ++j) {
      if (std::abs(feats[i]->dot(*feats[j])) > bound) {
        throw DegeneracyError("feature indices overlap beyond the configured slack");
      }
    }
  }
  if (!(zeta >= 0.0)) throw ConfigError("must be >= 0", "teacher.zeta");
}

TeacherSpec build_teacher(const TeacherConfig& cfg, RngStream& rng) {
  cfg.validate();
  TeacherSpec spec;
  spec.d = cfg.d;
  spec.C = cfg.C;
  spec.rho = cfg.rho_or_default();
  spec.s = cfg.s;
  spec.zeta = cfg.zeta;
  spec.overlap_slack = cfg.overlap_slack_or_default();
  for (const auto& f : cfg.f_local) {
    spec.f_local.push_back(cfg.normalize_links ? normalize_unit_variance(f) : f);
  }
  spec.g_global = cfg.normalize_links && nonzero_series(cfg.g_global)
                      ? normalize_unit_variance(cfg.g_global)
                      : cfg.g_global;

  // Features first (w*_1..w*_C, then w*_g), then cluster means.
  std::vector<Vec> basis;
  auto draw_feature = [&]() {
    Vec w = sample_unit_sphere(cfg.d, rng);
    if (cfg.correlation == FeatureCorrelation::orthogonal) w = orthogonalize_against(w, basis);
    basis.push_back(w);
    return w;
  };
  for (int c = 0; c < cfg.C; ++c) spec.w_local.push_back(draw_feature());
  spec.w_global = draw_feature();

  // Cluster means are orthogonalized against every feature regardless of the
  // correlation option, so keep a separate orthonormal basis of the features.
  std::vector<Vec> span;
  for (const auto& w : basis) span.push_back(orthogonalize_against(w, span));
  for (int c = 0; c < cfg.C; ++c) {
    Vec vc = orthogonalize_against(sample_unit_sphere(cfg.d, rng), span);
    span.push_back(vc);
    spec.v.push_back(std::move(vc));
  }
  spec.validate();
  return spec;
}

TeacherConfig cancelling_teacher_config(int d, int C, int k_star, const std::vector<double>& betas,
                                        std::optional<double> rho) {
  if (C < 2) throw ConfigError("must be >= 2", "teacher.C");
  if (k_star < 2 || k_star % 2 != 0) throw ConfigError("must be even and >= 2", "teacher.k_star");
  if (static_cast<int>(betas.size()) != C) {
    throw ConfigError("expected " + std::to_string(C) + " betas", "teacher.betas");
  }
  bool pos = false;
  bool neg = false;
  for (double b : betas) {
    pos = pos || b > 0.0;
    neg = neg || b < 0.0;
  }
  if (!(pos && neg)) throw ConfigError("need at least one pair of opposite signs", "teacher.betas");

  TeacherConfig cfg;
  cfg.d = d;
  cfg.C = C;
  cfg.rho = rho;
  cfg.correlation = FeatureCorrelation::orthogonal;
  cfg.s.assign(static_cast<size_t>(C), 0.0);
  cfg.s[0] = 1.0;
  cfg.s[1] = -1.0;
  // Raw He_k = sqrt(k!) times the orthonormal element.
  const int p_max = std::max(k_star, kDefaultPMax);
  const auto he_k = HermiteSeries::from_raw(HermiteSeries::basis(k_star, p_max).coeffs);
  for (double b : betas) {
    auto f = he_k;
    for (double& c : f.coeffs) c *= b;
    cfg.f_local.push_back(std::move(f));
  }
  cfg.g_global = he_k;
  return cfg;
}

TeacherSpec build_cancelling_teacher(int d, int C, int k_star, const std::vector<double>& betas,
                                     RngStream& rng, std::optional<double> rho) {
  return build_teacher(cancelling_teacher_config(d, C, k_star, betas, rho), rng);
}

double noiseless_target(const TeacherSpec& spec, const Vec& x, int cluster) {
  const auto c = static_cast<size_t>(cluster);
  double y = series_eval(spec.f_local[c], spec.w_local[c].dot(x));
  if (spec.s[c] != 0.0) y += spec.s[c] * series_eval(spec.g_global, spec.w_global.dot(x));
  return y;
}

double draw_sample(const TeacherSpec& spec, RngStream& rng, Vec& x, int& cluster) {
  cluster = static_cast<int>(rng.uniform_int(static_cast<size_t>(spec.C)));
  x.resize(spec.d);
  for (int i = 0; i < spec.d; ++i) x[i] = rng.normal();
  if (spec.rho != 0.0) x.noalias() += spec.rho * spec.v[static_cast<size_t>(cluster)];
  double y = noiseless_target(spec, x, cluster);
  if (spec.zeta > 0.0) y += spec.zeta * rng.normal();
  return y;
}

std::vector<Sample> sample_batch(const TeacherSpec& spec, int n, RngStream& rng) {
  if (n < 1) throw ConfigError("batch size must be >= 1");
  std::vector<Sample> out(static_cast<size_t>(n));
  for (auto& s : out) s.y = draw_sample(spec, rng, s.x, s.cluster);
  return out;
}

double SampleSource::next(Vec& x) {
  int cluster = 0;
  ++drawn_;
  return draw_sample(*spec_, rng_, x, cluster);
}

}  // namespace moelab
