// Copyright 2026 The moe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelab/io.hpp"

#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "moelab/error.hpp"

#ifndef MOE_LAB_VERSION
#define MOE_LAB_VERSION "unknown"
#endif

namespace moelab {

namespace {

using json = nlohmann::json;

json parse(std::string_view text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what(), what);
  }
}

const json& field(const json& j, const char* key, const std::string& ctx) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError("missing field", ctx + "." + key);
  return j.at(key);
}

template <class T>
T get(const json& j, const char* key, const std::string& ctx) {
  const json& v = field(j, key, ctx);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("wrong type", ctx + "." + key);
  }
}

json vec_json(const Vec& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Vec vec_from(const json& j, const std::string& ctx) {
  if (!j.is_array()) throw ConfigError("expected an array", ctx);
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError("expected numbers", ctx);
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

template <class Mat>
json mat_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<size_t>(c)] = m(r, c);
    rows.push_back(std::move(row));
  }
  return rows;
}

template <class Mat>
Mat mat_from(const json& j, Eigen::Index cols, const std::string& ctx) {
  if (!j.is_array()) throw ConfigError("expected an array of rows", ctx);
  Mat m(static_cast<Eigen::Index>(j.size()), cols);
  for (size_t r = 0; r < j.size(); ++r) {
    const Vec row = vec_from(j[r], ctx);
    if (row.size() != cols) throw DimensionError(ctx + ": ragged or mis-sized row");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

json series_json(const HermiteSeries& s) { return json(s.coeffs); }

HermiteSeries series_from(const json& j, const std::string& ctx) {
  const Vec v = vec_from(j, ctx);
  if (v.size() == 0) throw ConfigError("empty series", ctx);
  return HermiteSeries(std::vector<double>(v.data(), v.data() + v.size()));
}

json activation_json(const Activation& a) {
  json j{{"kind", std::string(to_string(a.kind))}, {"k_min", a.k_min}, {"p_max", a.p_max}};
  if (a.kind == ActivationKind::randomized_poly) j["signs"] = mat_json(a.signs);
  return j;
}

Activation activation_from(const json& j, const std::string& ctx) {
  Activation a;
  a.kind = activation_kind_from_string(get<std::string>(j, "kind", ctx));
  if (a.kind == ActivationKind::relu) return a;
  a.k_min = get<int>(j, "k_min", ctx);
  a.p_max = get<int>(j, "p_max", ctx);
  if (a.k_min < 0 || a.p_max < a.k_min) throw ConfigError("need 0 <= k_min <= p_max", ctx);
  a.signs = mat_from<Eigen::MatrixXd>(field(j, "signs", ctx), a.p_max - a.k_min + 1,
                                      ctx + ".signs");
  return a;
}

void write_row_prefix(std::ostream& os, int phase, long step) { os << phase << ',' << step << ','; }

}  // namespace

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string series_to_json(const HermiteSeries& s) { return series_json(s).dump(); }

HermiteSeries series_from_json(std::string_view text) {
  return series_from(parse(text, "series"), "series");
}

std::string teacher_to_json(const TeacherSpec& t) {
  json j;
  j["d"] = t.d;
  j["C"] = t.C;
  j["rho"] = t.rho;
  j["zeta"] = t.zeta;
  j["overlap_slack"] = t.overlap_slack;
  j["s"] = t.s;
  json v = json::array();
  json w = json::array();
  json f = json::array();
  for (int c = 0; c < t.C; ++c) {
    const auto uc = static_cast<size_t>(c);
    v.push_back(vec_json(t.v[uc]));
    w.push_back(vec_json(t.w_local[uc]));
    f.push_back(series_json(t.f_local[uc]));
  }
  j["v"] = std::move(v);
  j["w_local"] = std::move(w);
  j["w_global"] = vec_json(t.w_global);
  j["f_local"] = std::move(f);
  j["g_global"] = series_json(t.g_global);
  return j.dump();
}

TeacherSpec teacher_from_json(std::string_view text) {
  const std::string ctx = "teacher";
  const json j = parse(text, "teacher");
  TeacherSpec t;
  t.d = get<int>(j, "d", ctx);
  t.C = get<int>(j, "C", ctx);
  t.rho = get<double>(j, "rho", ctx);
  t.zeta = get<double>(j, "zeta", ctx);
  t.overlap_slack = get<double>(j, "overlap_slack", ctx);
  t.s = get<std::vector<double>>(j, "s", ctx);
  const json& v = field(j, "v", ctx);
  const json& w = field(j, "w_local", ctx);
  const json& f = field(j, "f_local", ctx);
  if (!v.is_array() || !w.is_array() || !f.is_array()) {
    throw ConfigError("expected arrays", ctx + ".v");
  }
  for (size_t c = 0; c < v.size(); ++c) t.v.push_back(vec_from(v[c], ctx + ".v"));
  for (size_t c = 0; c < w.size(); ++c) t.w_local.push_back(vec_from(w[c], ctx + ".w_local"));
  for (size_t c = 0; c < f.size(); ++c) t.f_local.push_back(series_from(f[c], ctx + ".f_local"));
  t.w_global = vec_from(field(j, "w_global", ctx), ctx + ".w_global");
  t.g_global = series_from(field(j, "g_global", ctx), ctx + ".g_global");
  t.validate();
  return t;
}

std::string model_to_json(const MoEModel& m) {
  json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["mode"] = std::string(to_string(m.mode));
  j["top1_weighted"] = m.top1_weighted;
  j["d"] = m.d();
  j["M"] = m.M();
  j["router"] = {{"theta", mat_json(m.router.theta)}};
  json experts = json::array();
  for (const auto& e : m.experts) {
    experts.push_back({{"W", mat_json(e.W)},
                       {"a", vec_json(e.a)},
                       {"b", vec_json(e.b)},
                       {"activation", activation_json(e.act)}});
  }
  j["experts"] = std::move(experts);
  return j.dump();
}

MoEModel model_from_json(std::string_view text) {
  const std::string ctx = "checkpoint";
  const json j = parse(text, "checkpoint");
  const int version = get<int>(j, "format_version", ctx);
  if (version != kCheckpointFormatVersion) {
    throw ConfigError("unsupported version " + std::to_string(version), ctx + ".format_version");
  }
  MoEModel m;
  m.mode = routing_mode_from_string(get<std::string>(j, "mode", ctx));
  m.top1_weighted = get<bool>(j, "top1_weighted", ctx);
  const int d = get<int>(j, "d", ctx);
  const int M = get<int>(j, "M", ctx);
  if (d < 1 || M < 1) throw ConfigError("d and M must be >= 1", ctx + ".d");
  m.router.theta =
      mat_from<Eigen::MatrixXd>(field(field(j, "router", ctx), "theta", ctx + ".router"), d,
                                ctx + ".router.theta");
  const json& experts = field(j, "experts", ctx);
  if (!experts.is_array() || static_cast<int>(experts.size()) != M) {
    throw DimensionError(ctx + ".experts: expected " + std::to_string(M) + " experts");
  }
  for (size_t i = 0; i < experts.size(); ++i) {
    const std::string ec = ctx + ".experts[" + std::to_string(i) + "]";
    ExpertParams e;
    e.W = mat_from<RowMat>(field(experts[i], "W", ec), d, ec + ".W");
    e.a = vec_from(field(experts[i], "a", ec), ec + ".a");
    e.b = vec_from(field(experts[i], "b", ec), ec + ".b");
    e.act = activation_from(field(experts[i], "activation", ec), ec + ".activation");
    m.experts.push_back(std::move(e));
  }
  m.validate();
  return m;
}

void write_samples_csv(std::ostream& os, const std::vector<Sample>& batch) {
  const Eigen::Index d = batch.empty() ? 0 : batch.front().x.size();
  for (Eigen::Index i = 0; i < d; ++i) os << "x_" << i << ',';
  os << "y,cluster\n";
  for (const auto& s : batch) {
    if (s.x.size() != d) throw DimensionError("samples disagree on d");
    for (Eigen::Index i = 0; i < d; ++i) os << format_double(s.x[i]) << ',';
    os << format_double(s.y) << ',' << s.cluster << '\n';
  }
}

void write_align_experts_header(std::ostream& os) {
  os << "phase,step,cluster,expert,neuron,kappa\n";
}

void append_align_experts(std::ostream& os, int phase, long step, const AlignmentReport& r) {
  auto emit = [&](const std::string& cluster, const Eigen::MatrixXd& k) {
    for (Eigen::Index m = 0; m < k.rows(); ++m) {
      for (Eigen::Index j = 0; j < k.cols(); ++j) {
        write_row_prefix(os, phase, step);
        os << cluster << ',' << m << ',' << j << ',' << format_double(k(m, j)) << '\n';
      }
    }
  };
  for (size_t c = 0; c < r.kappa.size(); ++c) emit(std::to_string(c), r.kappa[c]);
  emit("g", r.kappa_g);
}

void write_align_router_header(std::ostream& os) { os << "phase,step,cluster,expert,iota\n"; }

void append_align_router(std::ostream& os, int phase, long step, const AlignmentReport& r) {
  for (Eigen::Index c = 0; c < r.iota.rows(); ++c) {
    for (Eigen::Index m = 0; m < r.iota.cols(); ++m) {
      write_row_prefix(os, phase, step);
      os << c << ',' << m << ',' << format_double(r.iota(c, m)) << '\n';
    }
  }
}

void write_loss_header(std::ostream& os) {
  os << "phase,routing_accuracy_top1,routing_accuracy_adaptive,test_l1,test_l1_stderr\n";
}

void append_loss(std::ostream& os, const PhaseMetrics& m) {
  os << m.phase << ',' << format_double(m.routing_accuracy_top1) << ','
     << format_double(m.routing_accuracy_adaptive) << ',' << format_double(m.test_l1.mean) << ','
     << format_double(m.test_l1.stderr_) << '\n';
}

void write_vanilla_trace(std::ostream& os, const VanillaResult& v) {
  os << "step,max_abs_kappa_g\n";
  for (size_t i = 0; i < v.log.snapshots.size(); ++i) {
    os << v.log.snapshots[i].step << ',' << format_double(v.global_alignment[i]) << '\n';
  }
}

std::string manifest_to_json(const RunManifest& m) {
  json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["run_id"] = m.run_id;
  j["config_hash"] = m.config_hash;
  j["seed"] = m.seed;
  j["code_version"] = m.code_version;
  j["complete"] = m.complete;
  json phases = json::array();
  for (const auto& p : m.phases) {
    phases.push_back(
        {{"phase", p.phase}, {"checkpoint", p.checkpoint}, {"wall_seconds", p.wall_seconds}});
  }
  j["phases"] = std::move(phases);
  j["files"] = m.files;
  j["error"] = m.error ? json(*m.error) : json(nullptr);
  return j.dump(2) + "\n";
}

RunManifest manifest_from_json(std::string_view text) {
  const std::string ctx = "manifest";
  const json j = parse(text, "manifest");
  RunManifest m;
  m.run_id = get<std::string>(j, "run_id", ctx);
  m.config_hash = get<std::string>(j, "config_hash", ctx);
  m.seed = get<std::uint64_t>(j, "seed", ctx);
  m.code_version = get<std::string>(j, "code_version", ctx);
  m.complete = get<bool>(j, "complete", ctx);
  for (const auto& p : field(j, "phases", ctx)) {
    m.phases.push_back({get<int>(p, "phase", ctx + ".phases"),
                        get<std::string>(p, "checkpoint", ctx + ".phases"),
                        get<double>(p, "wall_seconds", ctx + ".phases")});
  }
  m.files = get<std::vector<std::string>>(j, "files", ctx);
  const json& e = field(j, "error", ctx);
  if (!e.is_null()) m.error = e.get<std::string>();
  return m;
}

std::string code_version() { return MOE_LAB_VERSION; }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace moelab
