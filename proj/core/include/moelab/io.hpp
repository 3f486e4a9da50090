// Copyright 2026 The moe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "moelab/metrics.hpp"
#include "moelab/model.hpp"
#include "moelab/teacher.hpp"
#include "moelab/training.hpp"

namespace moelab {

inline constexpr int kCheckpointFormatVersion = 1;

/// Shortest text that parses back to the same double.
std::string format_double(double x);

// JSON documents. Readers throw ConfigError naming the offending field.
std::string series_to_json(const HermiteSeries& s);
HermiteSeries series_from_json(std::string_view text);

std::string teacher_to_json(const TeacherSpec& t);
TeacherSpec teacher_from_json(std::string_view text);

std::string model_to_json(const MoEModel& m);
MoEModel model_from_json(std::string_view text);

// CSV writers. Every file starts with a header row.
void write_samples_csv(std::ostream& os, const std::vector<Sample>& batch);

/// phase,step,cluster,expert,neuron,kappa. The global feature is cluster "g".
void write_align_experts_header(std::ostream& os);
void append_align_experts(std::ostream& os, int phase, long step, const AlignmentReport& r);

/// phase,step,cluster,expert,iota
void write_align_router_header(std::ostream& os);
void append_align_router(std::ostream& os, int phase, long step, const AlignmentReport& r);

/// phase,routing_accuracy_top1,routing_accuracy_adaptive,test_l1,test_l1_stderr
void write_loss_header(std::ostream& os);
void append_loss(std::ostream& os, const PhaseMetrics& m);

/// step,max_abs_kappa_g
void write_vanilla_trace(std::ostream& os, const VanillaResult& v);

struct PhaseRecord {
  int phase = 0;
  std::string checkpoint;  // relative to the run directory
  double wall_seconds = 0.0;
};

struct RunManifest {
  std::string run_id;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string code_version;
  bool complete = false;
  std::vector<PhaseRecord> phases;
  std::vector<std::string> files;  // metric files, relative
  std::optional<std::string> error;
};

std::string manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(std::string_view text);

/// Version string compiled into the library.
std::string code_version();

/// Throws Error when the file cannot be opened.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace moelab
