// Copyright 2026 The moe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "moelab/teacher.hpp"
#include "moelab/training.hpp"

namespace moelab {

/// Parsed value of the flat TOML subset used by experiment files: booleans,
/// numbers, strings and (nested) arrays of those.
struct ConfigValue {
  using Array = std::vector<ConfigValue>;
  std::variant<bool, std::int64_t, double, std::string, Array> v;

  bool is_number() const {
    return std::holds_alternative<std::int64_t>(v) || std::holds_alternative<double>(v);
  }
};

/// section.key -> value. Keys before the first header live in section "".
using ConfigTable = std::map<std::string, ConfigValue>;

/// Throws ConfigError with the line number on malformed input.
ConfigTable parse_config_table(std::string_view text);

enum class TeacherKind { clustered, cancelling };
enum class LinkBasis { normalized, raw };

struct ExperimentConfig {
  std::string name = "experiment";

  TeacherKind teacher_kind = TeacherKind::clustered;
  /// Coefficients in f_local / g_global are either orthonormal-basis
  /// coefficients or raw He_i multipliers.
  LinkBasis link_basis = LinkBasis::normalized;
  TeacherConfig teacher;
  int k_star = 4;  // cancelling only
  std::vector<double> betas{1.0, -1.0};

  TrainConfig train;

  std::uint64_t eval_seed = 0;

  std::string out_dir = "out";
  std::string run_id;  // empty: "<name>-seed<seed>"

  /// Teacher configuration with links converted to the orthonormal basis.
  TeacherConfig resolved_teacher() const;
  std::string resolved_run_id() const;
  void validate() const;
};

/// Defaults for every field: the scaled two-cluster recipe.
ExperimentConfig default_experiment();

ExperimentConfig experiment_from_table(const ConfigTable& table);
ExperimentConfig parse_experiment(std::string_view text);
ExperimentConfig load_experiment(const std::filesystem::path& path);

/// Canonical text form. Parsing it back and rendering again is the identity.
/// Unset optional fields are written as comments showing their rule.
std::string render_experiment(const ExperimentConfig& cfg);

/// FNV-1a of the canonical rendering, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace moelab
