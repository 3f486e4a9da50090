// Copyright 2026 The moe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelab/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "moelab/error.hpp"

namespace moelab {

// ---------------------------------------------------------------------------
// TOML subset
// ---------------------------------------------------------------------------

namespace {

class TableParser {
 public:
  explicit TableParser(std::string_view text) : s_(text) {}

  ConfigTable run() {
    ConfigTable out;
    std::string section;
    for (;;) {
      skip_blank_lines();
      if (eof()) break;
      if (peek() == '[') {
        ++pos_;
        skip_inline_space();
        section = identifier("section name");
        skip_inline_space();
        expect(']');
        end_of_statement();
        continue;
      }
      const std::string key = identifier("key");
      skip_inline_space();
      expect('=');
      skip_inline_space();
      ConfigValue v = value();
      end_of_statement();
      const std::string full = section.empty() ? key : section + "." + key;
      if (!out.emplace(full, std::move(v)).second) fail("duplicate key '" + full + "'");
    }
    return out;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("line " + std::to_string(line_) + ": " + msg);
  }

  bool eof() const { return pos_ >= s_.size(); }
  char peek() const { return eof() ? '\0' : s_[pos_]; }

  void advance() {
    if (peek() == '\n') ++line_;
    ++pos_;
  }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    advance();
  }

  void skip_inline_space() {
    while (peek() == ' ' || peek() == '\t' || peek() == '\r') advance();
  }

  void skip_comment() {
    if (peek() == '#') {
      while (!eof() && peek() != '\n') advance();
    }
  }

  void skip_blank_lines() {
    for (;;) {
      skip_inline_space();
      skip_comment();
      if (peek() == '\n') {
        advance();
        continue;
      }
      return;
    }
  }

  // Whitespace, newlines and comments inside arrays.
  void skip_any_space() { skip_blank_lines(); }

  void end_of_statement() {
    skip_inline_space();
    skip_comment();
    if (!eof() && peek() != '\n') fail("unexpected trailing characters");
  }

  std::string identifier(const char* what) {
    std::string out;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' ||
                      peek() == '-')) {
      out.push_back(peek());
      advance();
    }
    if (out.empty()) fail(std::string("expected ") + what);
    return out;
  }

  ConfigValue value() {
    const char c = peek();
    if (c == '"') return {string_value()};
    if (c == '[') return {array_value()};
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::string word = identifier("value");
      if (word == "true") return {true};
      if (word == "false") return {false};
      fail("unknown bare word '" + word + "'");
    }
    return number_value();
  }

  std::string string_value() {
    expect('"');
    std::string out;
    for (;;) {
      if (eof() || peek() == '\n') fail("unterminated string");
      const char c = peek();
      advance();
      if (c == '"') return out;
      if (c == '\\') {
        const char e = peek();
        advance();
        switch (e) {
          case 'n': out.push_back('\n'); break;
          case 't': out.push_back('\t'); break;
          case '"': out.push_back('"'); break;
          case '\\': out.push_back('\\'); break;
          default: fail(std::string("unknown escape \\") + e);
        }
      } else {
        out.push_back(c);
      }
    }
  }

  ConfigValue::Array array_value() {
    expect('[');
    ConfigValue::Array out;
    for (;;) {
      skip_any_space();
      if (peek() == ']') {
        advance();
        return out;
      }
      out.push_back(value());
      skip_any_space();
      if (peek() == ',') {
        advance();
        continue;
      }
      if (peek() != ']') fail("expected ',' or ']' in array");
    }
  }

  ConfigValue number_value() {
    std::string digits;
    bool is_float = false;
    while (!eof()) {
      const char c = peek();
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '+' || c == '-') {
        digits.push_back(c);
      } else if (c == '.' || c == 'e' || c == 'E') {
        is_float = true;
        digits.push_back(c);
      } else if (c != '_') {
        break;
      }
      advance();
    }
    if (digits.empty()) fail("expected a value");
    try {
      size_t used = 0;
      if (is_float) {
        const double d = std::stod(digits, &used);
        if (used == digits.size()) return {d};
      } else {
        const long long i = std::stoll(digits, &used);
        if (used == digits.size()) return {static_cast<std::int64_t>(i)};
      }
    } catch (const std::exception&) {
    }
    fail("malformed number '" + digits + "'");
  }

  std::string_view s_;
  size_t pos_ = 0;
  int line_ = 1;
};

// ---------------------------------------------------------------------------
// Typed accessors
// ---------------------------------------------------------------------------

double as_double(const ConfigValue& v, const std::string& key) {
  if (const auto* i = std::get_if<std::int64_t>(&v.v)) return static_cast<double>(*i);
  if (const auto* d = std::get_if<double>(&v.v)) return *d;
  throw ConfigError("expected a number", key);
}

std::int64_t as_int(const ConfigValue& v, const std::string& key) {
  if (const auto* i = std::get_if<std::int64_t>(&v.v)) return *i;
  if (const auto* d = std::get_if<double>(&v.v)) {
    if (std::isfinite(*d) && *d == std::floor(*d) && std::abs(*d) < 9.0e15) {
      return static_cast<std::int64_t>(*d);
    }
  }
  throw ConfigError("expected an integer", key);
}

bool as_bool(const ConfigValue& v, const std::string& key) {
  if (const auto* b = std::get_if<bool>(&v.v)) return *b;
  throw ConfigError("expected true or false", key);
}

std::string as_string(const ConfigValue& v, const std::string& key) {
  if (const auto* s = std::get_if<std::string>(&v.v)) return *s;
  throw ConfigError("expected a string", key);
}

std::vector<double> as_doubles(const ConfigValue& v, const std::string& key) {
  const auto* arr = std::get_if<ConfigValue::Array>(&v.v);
  if (!arr) throw ConfigError("expected an array of numbers", key);
  std::vector<double> out;
  for (const auto& e : *arr) out.push_back(as_double(e, key));
  return out;
}

std::vector<std::vector<double>> as_double_rows(const ConfigValue& v, const std::string& key) {
  const auto* arr = std::get_if<ConfigValue::Array>(&v.v);
  if (!arr) throw ConfigError("expected an array of arrays", key);
  std::vector<std::vector<double>> out;
  for (const auto& e : *arr) out.push_back(as_doubles(e, key));
  return out;
}

int as_int32(const ConfigValue& v, const std::string& key) {
  const auto i = as_int(v, key);
  if (i < std::numeric_limits<int>::min() || i > std::numeric_limits<int>::max()) {
    throw ConfigError("out of range", key);
  }
  return static_cast<int>(i);
}

std::uint64_t as_seed(const ConfigValue& v, const std::string& key) {
  const auto i = as_int(v, key);
  if (i < 0) throw ConfigError("must be >= 0", key);
  return static_cast<std::uint64_t>(i);
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  std::string s(buf);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string fmt_array(const std::vector<double>& xs) {
  std::string out = "[";
  for (size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ", ";
    out += fmt_double(xs[i]);
  }
  return out + "]";
}

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out.push_back(c);
  }
  return out + "\"";
}

const char* bool_str(bool b) { return b ? "true" : "false"; }

}  // namespace

ConfigTable parse_config_table(std::string_view text) { return TableParser(text).run(); }

// ---------------------------------------------------------------------------
// Experiment
// ---------------------------------------------------------------------------

ExperimentConfig default_experiment() {
  ExperimentConfig c;
  c.name = "scaled_two_cluster";
  c.teacher.d = 100;
  c.teacher.C = 2;
  c.teacher.s = {1.0, -1.0};
  c.teacher.f_local = {HermiteSeries({0, 0, 0, 1, 0, 1}), HermiteSeries({0, 0, 0, 1, 1, 0})};
  c.teacher.g_global = HermiteSeries({0, 0, 0, 1, 0, 0});
  return c;
}

TeacherConfig ExperimentConfig::resolved_teacher() const {
  if (teacher_kind == TeacherKind::cancelling) {
    TeacherConfig t = cancelling_teacher_config(teacher.d, teacher.C, k_star, betas, teacher.rho);
    t.zeta = teacher.zeta;
    t.overlap_slack = teacher.overlap_slack;
    return t;
  }
  if (link_basis == LinkBasis::normalized) return teacher;
  TeacherConfig t = teacher;
  for (auto& f : t.f_local) f = HermiteSeries::from_raw(f.coeffs);
  t.g_global = HermiteSeries::from_raw(teacher.g_global.coeffs);
  return t;
}

std::string ExperimentConfig::resolved_run_id() const {
  if (!run_id.empty()) return run_id;
  return name + "-seed" + std::to_string(train.seed);
}

void ExperimentConfig::validate() const {
  if (name.empty()) throw ConfigError("must not be empty", "name");
  for (char c : resolved_run_id()) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) {
      throw ConfigError("may only contain letters, digits, '-', '_' and '.'", "output.run_id");
    }
  }
  resolved_teacher().validate();
  train.validate();
}

ExperimentConfig experiment_from_table(const ConfigTable& table) {
  ExperimentConfig c = default_experiment();
  using Setter = std::function<void(const ConfigValue&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"name", [&](auto& v, auto& k) { c.name = as_string(v, k); }},
      {"teacher.kind",
       [&](auto& v, auto& k) {
         const auto s = as_string(v, k);
         if (s == "clustered") c.teacher_kind = TeacherKind::clustered;
         else if (s == "cancelling") c.teacher_kind = TeacherKind::cancelling;
         else throw ConfigError("expected \"clustered\" or \"cancelling\"", k);
       }},
      {"teacher.d", [&](auto& v, auto& k) { c.teacher.d = as_int32(v, k); }},
      {"teacher.C", [&](auto& v, auto& k) { c.teacher.C = as_int32(v, k); }},
      {"teacher.rho", [&](auto& v, auto& k) { c.teacher.rho = as_double(v, k); }},
      {"teacher.zeta", [&](auto& v, auto& k) { c.teacher.zeta = as_double(v, k); }},
      {"teacher.s", [&](auto& v, auto& k) { c.teacher.s = as_doubles(v, k); }},
      {"teacher.link_basis",
       [&](auto& v, auto& k) {
         const auto s = as_string(v, k);
         if (s == "normalized") c.link_basis = LinkBasis::normalized;
         else if (s == "raw") c.link_basis = LinkBasis::raw;
         else throw ConfigError("expected \"normalized\" or \"raw\"", k);
       }},
      {"teacher.f_local",
       [&](auto& v, auto& k) {
         c.teacher.f_local.clear();
         for (auto& row : as_double_rows(v, k)) c.teacher.f_local.emplace_back(std::move(row));
       }},
      {"teacher.g_global",
       [&](auto& v, auto& k) { c.teacher.g_global = HermiteSeries(as_doubles(v, k)); }},
      {"teacher.normalize_links",
       [&](auto& v, auto& k) { c.teacher.normalize_links = as_bool(v, k); }},
      {"teacher.matched_leading_coeff",
       [&](auto& v, auto& k) { c.teacher.matched_leading_coeff = as_bool(v, k); }},
      {"teacher.correlation",
       [&](auto& v, auto& k) {
         const auto s = as_string(v, k);
         if (s == "random") c.teacher.correlation = FeatureCorrelation::random;
         else if (s == "orthogonal") c.teacher.correlation = FeatureCorrelation::orthogonal;
         else throw ConfigError("expected \"random\" or \"orthogonal\"", k);
       }},
      {"teacher.overlap_slack",
       [&](auto& v, auto& k) { c.teacher.overlap_slack = as_double(v, k); }},
      {"teacher.k_star", [&](auto& v, auto& k) { c.k_star = as_int32(v, k); }},
      {"teacher.betas", [&](auto& v, auto& k) { c.betas = as_doubles(v, k); }},
      {"model.M", [&](auto& v, auto& k) { c.train.model.M = as_int32(v, k); }},
      {"model.J", [&](auto& v, auto& k) { c.train.model.J = as_int32(v, k); }},
      {"model.activation",
       [&](auto& v, auto& k) { c.train.model.kind = activation_kind_from_string(as_string(v, k)); }},
      {"model.k_min", [&](auto& v, auto& k) { c.train.model.k_min = as_int32(v, k); }},
      {"model.p_max", [&](auto& v, auto& k) { c.train.model.p_max = as_int32(v, k); }},
      {"model.top1_weighted",
       [&](auto& v, auto& k) { c.train.model.top1_weighted = as_bool(v, k); }},
      {"train.T1", [&](auto& v, auto& k) { c.train.T1 = as_int(v, k); }},
      {"train.T2", [&](auto& v, auto& k) { c.train.T2 = as_int(v, k); }},
      {"train.T3", [&](auto& v, auto& k) { c.train.T3 = as_int(v, k); }},
      {"train.T4", [&](auto& v, auto& k) { c.train.T4 = as_int(v, k); }},
      {"train.eta1", [&](auto& v, auto& k) { c.train.eta1 = as_double(v, k); }},
      {"train.eta2", [&](auto& v, auto& k) { c.train.eta2 = as_double(v, k); }},
      {"train.eta3", [&](auto& v, auto& k) { c.train.eta3 = as_double(v, k); }},
      {"train.n_router", [&](auto& v, auto& k) { c.train.n_router = as_int(v, k); }},
      {"train.lambda_ridge", [&](auto& v, auto& k) { c.train.lambda_ridge = as_double(v, k); }},
      {"train.C_b", [&](auto& v, auto& k) { c.train.C_b = as_double(v, k); }},
      {"train.seed", [&](auto& v, auto& k) { c.train.seed = as_seed(v, k); }},
      {"train.reinit_before_phase3",
       [&](auto& v, auto& k) { c.train.reinit_before_phase3 = as_bool(v, k); }},
      {"train.sign_flip_phase4",
       [&](auto& v, auto& k) { c.train.sign_flip_phase4 = as_bool(v, k); }},
      {"train.bias_at_init", [&](auto& v, auto& k) { c.train.bias_at_init = as_bool(v, k); }},
      {"train.T3_stage1", [&](auto& v, auto& k) { c.train.T3_stage1 = as_int(v, k); }},
      {"train.eta3_stage2", [&](auto& v, auto& k) { c.train.eta3_stage2 = as_double(v, k); }},
      {"train.snapshots", [&](auto& v, auto& k) { c.train.snapshots = as_int(v, k); }},
      {"eval.n", [&](auto& v, auto& k) { c.train.eval_n = as_int(v, k); }},
      {"eval.seed", [&](auto& v, auto& k) { c.eval_seed = as_seed(v, k); }},
      {"vanilla.width", [&](auto& v, auto& k) { c.train.vanilla_width = as_int32(v, k); }},
      {"vanilla.steps", [&](auto& v, auto& k) { c.train.vanilla_steps = as_int(v, k); }},
      {"output.dir", [&](auto& v, auto& k) { c.out_dir = as_string(v, k); }},
      {"output.run_id", [&](auto& v, auto& k) { c.run_id = as_string(v, k); }},
  };
  for (const auto& [key, value] : table) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown key", key);
    it->second(value, key);
  }
  return c;
}

ExperimentConfig parse_experiment(std::string_view text) {
  ExperimentConfig c = experiment_from_table(parse_config_table(text));
  c.validate();
  return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_experiment(ss.str());
}

std::string render_experiment(const ExperimentConfig& c) {
  std::ostringstream o;
  const auto& t = c.teacher;
  const auto& tr = c.train;
  o << "name = " << quoted(c.name) << "\n\n";

  o << "[teacher]\n";
  o << "kind = " << (c.teacher_kind == TeacherKind::clustered ? "\"clustered\"" : "\"cancelling\"")
    << "\n";
  o << "d = " << t.d << "\n";
  o << "C = " << t.C << "\n";
  if (t.rho) o << "rho = " << fmt_double(*t.rho) << "\n";
  else o << "# rho = ceil(log(d)^1.5)\n";
  o << "zeta = " << fmt_double(t.zeta) << "\n";
  o << "s = " << fmt_array(t.s) << "\n";
  o << "link_basis = " << (c.link_basis == LinkBasis::normalized ? "\"normalized\"" : "\"raw\"")
    << "\n";
  o << "f_local = [";
  for (size_t i = 0; i < t.f_local.size(); ++i) {
    if (i) o << ", ";
    o << fmt_array(t.f_local[i].coeffs);
  }
  o << "]\n";
  o << "g_global = " << fmt_array(t.g_global.coeffs) << "\n";
  o << "normalize_links = " << bool_str(t.normalize_links) << "\n";
  o << "matched_leading_coeff = " << bool_str(t.matched_leading_coeff) << "\n";
  o << "correlation = "
    << (t.correlation == FeatureCorrelation::random ? "\"random\"" : "\"orthogonal\"") << "\n";
  if (t.overlap_slack) o << "overlap_slack = " << fmt_double(*t.overlap_slack) << "\n";
  else o << "# overlap_slack = 5*sqrt(log(d))\n";
  o << "k_star = " << c.k_star << "\n";
  o << "betas = " << fmt_array(c.betas) << "\n\n";

  o << "[model]\n";
  o << "M = " << tr.model.M << "\n";
  o << "J = " << tr.model.J << "\n";
  o << "activation = " << quoted(std::string(to_string(tr.model.kind))) << "\n";
  o << "k_min = " << tr.model.k_min << "\n";
  o << "p_max = " << tr.model.p_max << "\n";
  o << "top1_weighted = " << bool_str(tr.model.top1_weighted) << "\n\n";

  o << "[train]\n";
  o << "T1 = " << tr.T1 << "\n";
  o << "T2 = " << tr.T2 << "\n";
  o << "T3 = " << tr.T3 << "\n";
  o << "T4 = " << tr.T4 << "\n";
  o << "eta1 = " << fmt_double(tr.eta1) << "\n";
  o << "eta2 = " << fmt_double(tr.eta2) << "\n";
  o << "eta3 = " << fmt_double(tr.eta3) << "\n";
  o << "n_router = " << tr.n_router << "\n";
  if (tr.lambda_ridge) o << "lambda_ridge = " << fmt_double(*tr.lambda_ridge) << "\n";
  else o << "# lambda_ridge = 1e-3*M*J/T4\n";
  o << "C_b = " << fmt_double(tr.C_b) << "\n";
  o << "seed = " << tr.seed << "\n";
  o << "reinit_before_phase3 = " << bool_str(tr.reinit_before_phase3) << "\n";
  if (tr.sign_flip_phase4) o << "sign_flip_phase4 = " << bool_str(*tr.sign_flip_phase4) << "\n";
  else o << "# sign_flip_phase4 = (activation == \"relu\")\n";
  o << "bias_at_init = " << bool_str(tr.bias_at_init) << "\n";
  o << "T3_stage1 = " << tr.T3_stage1 << "\n";
  o << "eta3_stage2 = " << fmt_double(tr.eta3_stage2) << "\n";
  o << "snapshots = " << tr.snapshots << "\n\n";

  o << "[eval]\n";
  o << "n = " << tr.eval_n << "\n";
  o << "seed = " << c.eval_seed << "\n\n";

  o << "[vanilla]\n";
  o << "# 0 selects M*J and T1 + T2*n_router + T3 + T4\n";
  o << "width = " << tr.vanilla_width << "\n";
  o << "steps = " << tr.vanilla_steps << "\n\n";

  o << "[output]\n";
  o << "dir = " << quoted(c.out_dir) << "\n";
  o << "run_id = " << quoted(c.run_id) << "\n";
  return o.str();
}

std::string config_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : render_experiment(cfg)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace moelab
