// Copyright 2026 The moe-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// moe_lab: run, evaluate and inspect mixture-of-experts training experiments.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "moelab/config.hpp"
#include "moelab/error.hpp"
#include "moelab/io.hpp"
#include "moelab/metrics.hpp"
#include "moelab/training.hpp"

namespace fs = std::filesystem;
using namespace moelab;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct CommonOpts {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<long> snapshots;
};

ExperimentConfig load(const CommonOpts& o) {
  ExperimentConfig cfg = o.config.empty() ? default_experiment() : load_experiment(o.config);
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (o.seed) cfg.train.seed = *o.seed;
  if (o.snapshots) cfg.train.snapshots = *o.snapshots;
  cfg.validate();
  return cfg;
}

fs::path make_run_dir(const ExperimentConfig& cfg) {
  fs::path dir = fs::path(cfg.out_dir) / cfg.resolved_run_id();
  fs::create_directories(dir);
  return dir;
}

std::ofstream open_csv(const fs::path& p) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + p.string());
  return os;
}

int cmd_run(const CommonOpts& o) {
  const ExperimentConfig cfg = load(o);
  const TeacherConfig tcfg = cfg.resolved_teacher();
  const fs::path dir = make_run_dir(cfg);

  RunManifest man;
  man.run_id = cfg.resolved_run_id();
  man.config_hash = config_hash(cfg);
  man.seed = cfg.train.seed;
  man.code_version = code_version();
  man.files = {"align_experts.csv", "align_router.csv", "loss.csv"};
  auto flush_manifest = [&] { write_file(dir / "manifest.json", manifest_to_json(man)); };

  try {
    write_file(dir / "config.toml", render_experiment(cfg));
    RngStream trng = teacher_stream(cfg.train.seed);
    write_file(dir / "teacher.json", teacher_to_json(build_teacher(tcfg, trng)));
    flush_manifest();

    auto experts_csv = open_csv(dir / "align_experts.csv");
    auto router_csv = open_csv(dir / "align_router.csv");
    write_align_experts_header(experts_csv);
    write_align_router_header(router_csv);

    auto on_phase = [&](int phase, const MoEModel& model, const PhaseLog& log) {
      const std::string ck = "ckpt_phase" + std::to_string(phase) + ".json";
      write_file(dir / ck, model_to_json(model));
      for (const auto& s : log.snapshots) {
        append_align_experts(experts_csv, phase, s.step, s.report);
        append_align_router(router_csv, phase, s.step, s.report);
      }
      experts_csv.flush();
      router_csv.flush();
      man.phases.push_back({phase, ck, log.wall_seconds});
      flush_manifest();
      std::fprintf(stderr, "phase %d done (%.1f s)\n", phase, log.wall_seconds);
    };
    const PipelineResult res = run_pipeline(cfg.train, tcfg, on_phase);

    write_file(dir / "ckpt_init.json", model_to_json(res.init));
    auto loss_csv = open_csv(dir / "loss.csv");
    write_loss_header(loss_csv);
    for (const auto& m : res.metrics) append_loss(loss_csv, m);
    loss_csv.close();

    man.files.push_back("ckpt_init.json");
    man.files.push_back("teacher.json");
    man.files.push_back("config.toml");
    man.complete = true;
    flush_manifest();
  } catch (const std::exception& e) {
    man.error = e.what();
    try {
      flush_manifest();
    } catch (const std::exception&) {
    }
    throw;
  }
  std::cout << (dir / "manifest.json").string() << "\n";
  return 0;
}

int cmd_vanilla(const CommonOpts& o) {
  const ExperimentConfig cfg = load(o);
  const TeacherConfig tcfg = cfg.resolved_teacher();
  const fs::path dir = make_run_dir(cfg);

  RunManifest man;
  man.run_id = cfg.resolved_run_id();
  man.config_hash = config_hash(cfg);
  man.seed = cfg.train.seed;
  man.code_version = code_version();
  man.files = {"vanilla_trace.csv"};
  try {
    write_file(dir / "config.toml", render_experiment(cfg));
    RngStream trng = teacher_stream(cfg.train.seed);
    const TeacherSpec teacher = build_teacher(tcfg, trng);
    write_file(dir / "teacher.json", teacher_to_json(teacher));
    const VanillaResult v = train_vanilla(teacher, cfg.train);
    auto trace = open_csv(dir / "vanilla_trace.csv");
    write_vanilla_trace(trace, v);
    trace.close();
    write_file(dir / "ckpt_vanilla.json", model_to_json(v.model));
    man.phases.push_back({1, "ckpt_vanilla.json", v.log.wall_seconds});
    man.complete = true;
    write_file(dir / "manifest.json", manifest_to_json(man));
    double peak = 0.0;
    for (double a : v.global_alignment) peak = std::max(peak, a);
    std::cout << "max_abs_kappa_g " << format_double(peak) << "\n";
  } catch (const std::exception& e) {
    man.error = e.what();
    try {
      write_file(dir / "manifest.json", manifest_to_json(man));
    } catch (const std::exception&) {
    }
    throw;
  }
  return 0;
}

struct EvalOpts {
  std::string checkpoint;
  std::string teacher;
  std::string init;
  long n = 10'000;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_eval(const EvalOpts& o) {
  if (o.n < 1) throw ConfigError("must be >= 1", "n");
  const TeacherSpec teacher = teacher_from_json(read_file(o.teacher));
  const MoEModel model = model_from_json(read_file(o.checkpoint));
  if (model.d() != teacher.d) {
    throw DimensionError("checkpoint d = " + std::to_string(model.d()) + " but teacher d = " +
                         std::to_string(teacher.d));
  }
  MoEModel reference = model;
  if (!o.init.empty()) {
    reference = model_from_json(read_file(o.init));
    if (reference.d() != model.d() || reference.M() != model.M()) {
      throw DimensionError("init checkpoint does not match the evaluated model");
    }
  }
  const ProfessionalSets prof = professional_sets(reference, teacher);
  const AlignmentReport rep = alignment_report(model, teacher);

  RngStream erng = RngStream(o.seed).derive(tags::kEval);
  RngStream r1 = erng.derive(1);
  RngStream r2 = erng.derive(2);
  RngStream r3 = erng.derive(3);
  const double acc1 = routing_accuracy(model, teacher, prof, o.n, r1, RoutingMode::softmax_top1);
  const double acc2 = routing_accuracy(model, teacher, prof, o.n, r2, RoutingMode::adaptive_topk);
  MoEModel probe = model;
  probe.mode = RoutingMode::adaptive_topk;
  const LossEstimate loss = test_l1_loss(probe, teacher, o.n, r3);

  std::ostringstream csv;
  csv << "metric,value\n";
  for (size_t c = 0; c < rep.kappa.size(); ++c) {
    csv << "max_abs_kappa_" << c << ',' << format_double(rep.kappa[c].cwiseAbs().maxCoeff())
        << '\n';
  }
  csv << "max_abs_kappa_g," << format_double(rep.kappa_g.cwiseAbs().maxCoeff()) << '\n';
  csv << "max_abs_iota," << format_double(rep.iota.cwiseAbs().maxCoeff()) << '\n';
  csv << "routing_accuracy_top1," << format_double(acc1) << '\n';
  csv << "routing_accuracy_adaptive," << format_double(acc2) << '\n';
  csv << "test_l1," << format_double(loss.mean) << '\n';
  csv << "test_l1_stderr," << format_double(loss.stderr_) << '\n';
  std::cout << csv.str();
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    write_file(fs::path(o.out) / "eval.csv", csv.str());
  }
  return 0;
}

struct SampleOpts {
  std::string config;
  std::optional<std::uint64_t> seed;
  long n = 1000;
  std::string out;
};

int cmd_sample(const SampleOpts& o) {
  if (o.n < 1) throw ConfigError("must be >= 1", "n");
  CommonOpts co;
  co.config = o.config;
  co.seed = o.seed;
  const ExperimentConfig cfg = load(co);
  RngStream trng = teacher_stream(cfg.train.seed);
  const TeacherSpec teacher = build_teacher(cfg.resolved_teacher(), trng);
  RngStream srng = RngStream(cfg.eval_seed).derive(tags::kData);
  const auto batch = sample_batch(teacher, static_cast<int>(o.n), srng);
  if (o.out.empty()) {
    write_samples_csv(std::cout, batch);
  } else {
    auto os = open_csv(o.out);
    write_samples_csv(os, batch);
  }
  return 0;
}

void add_common(CLI::App* sub, CommonOpts& o) {
  sub->add_option("--config", o.config, "Experiment file (TOML subset)")->check(CLI::ExistingFile);
  sub->add_option("--out", o.out, "Output root directory");
  sub->add_option("--seed", o.seed, "Override train.seed");
  sub->add_option("--snapshots", o.snapshots, "Override train.snapshots");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"moe_lab: clustered-data mixture-of-experts experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", code_version());

  CommonOpts run_opts;
  auto* run = app.add_subcommand("run", "Train all four phases and write a run directory");
  add_common(run, run_opts);

  CommonOpts van_opts;
  auto* van = app.add_subcommand("vanilla", "Train the single-expert baseline");
  add_common(van, van_opts);

  EvalOpts ev;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint against a teacher");
  eval->add_option("--checkpoint", ev.checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("--teacher", ev.teacher)->required()->check(CLI::ExistingFile);
  eval->add_option("--init", ev.init, "Checkpoint defining the professional sets")
      ->check(CLI::ExistingFile);
  eval->add_option("--n", ev.n, "Held-out draws");
  eval->add_option("--seed", ev.seed, "Evaluation seed");
  eval->add_option("--out", ev.out, "Directory for eval.csv");

  SampleOpts so;
  auto* sample = app.add_subcommand("sample", "Export a labeled batch as CSV");
  sample->add_option("--config", so.config)->check(CLI::ExistingFile);
  sample->add_option("--seed", so.seed, "Override train.seed (teacher)");
  sample->add_option("--n", so.n, "Batch size");
  sample->add_option("--out", so.out, "CSV path; stdout when omitted");

  auto* defaults = app.add_subcommand("defaults", "Print every setting with its default");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(run_opts);
    if (*van) return cmd_vanilla(van_opts);
    if (*eval) return cmd_eval(ev);
    if (*sample) return cmd_sample(so);
    if (*defaults) {
      std::cout << render_experiment(default_experiment());
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
