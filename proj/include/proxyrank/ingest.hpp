#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The proxyrank Authors

/**
 * @file ingest.hpp
 * @brief On-disk formats: trajectory JSONL, score / feature / report CSV, run manifests
 *
 * Trajectory file: one JSON object per line,
 *
 *   {"task": str, "instance": str, "expert": str, "answer_correct": bool|null,
 *    "tokens": [{"id": int, "lp": num, "rank": int, "maxp": num, "ent": num,
 *                "elp": num (optional)}, ...]}
 *
 * Optional document keys "template" (str) and "truncated" (int >= 0) are
 * preserved; other keys are ignored. Floats are written as the shortest
 * decimal that round-trips. All text is UTF-8 with LF line endings.
 */

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "proxyrank/curvefit.hpp"
#include "proxyrank/error.hpp"
#include "proxyrank/format.hpp"
#include "proxyrank/protocols.hpp"
#include "proxyrank/proxylib.hpp"
#include "proxyrank/ranking.hpp"
#include "proxyrank/tokenstats.hpp"

namespace proxyrank {

struct TrajectoryDocument {
  std::string task;
  std::string instance;
  std::string expert;
  std::optional<bool> answer_correct;
  std::vector<TokenRecord> tokens;
  std::optional<std::string> template_id;
  std::optional<std::int64_t> truncated;

  bool operator==(const TrajectoryDocument&) const = default;
};

struct LineError {
  std::size_t line = 0;
  std::string message;
};

struct TrajectoryReadResult {
  std::vector<TrajectoryDocument> documents;
  std::vector<LineError> errors;
};

enum class ReadMode { fail_fast, permissive };

namespace detail {

inline std::string at_line(const std::string& msg, std::size_t line) {
  return msg + " (line " + std::to_string(line) + ")";
}

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(where + "missing field \"" + key + "\"");
  return *it;
}

inline double number_field(const nlohmann::json& obj, const char* key, const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_number()) throw ValidationError(where + key + " must be a number");
  return v.get<double>();
}

inline std::int64_t integer_field(const nlohmann::json& obj, const char* key, const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_number_integer()) throw ValidationError(where + key + " must be an integer");
  return v.get<std::int64_t>();
}

inline std::string string_field(const nlohmann::json& obj, const char* key) {
  const auto& v = require(obj, key, "");
  if (!v.is_string()) throw ValidationError(std::string(key) + " must be a string");
  return v.get<std::string>();
}

inline TokenRecord parse_token(const nlohmann::json& t, std::size_t index) {
  const std::string where = "tokens[" + std::to_string(index) + "].";
  if (!t.is_object()) throw ValidationError("tokens[" + std::to_string(index) + "] must be an object");
  TokenRecord r;
  r.token_id = integer_field(t, "id", where);
  r.expert_logprob = number_field(t, "lp", where);
  r.rank = integer_field(t, "rank", where);
  r.max_prob = number_field(t, "maxp", where);
  r.entropy_norm = number_field(t, "ent", where);
  if (auto it = t.find("elp"); it != t.end() && !it->is_null()) {
    if (!it->is_number()) throw ValidationError(where + "elp must be a number");
    r.expert_model_logprob = it->get<double>();
  }
  if (auto msg = check_record(r); !msg.empty()) throw ValidationError(where + msg);
  return r;
}

}  // namespace detail

/// Parses and validates one JSONL line. Errors carry the line number.
inline TrajectoryDocument parse_trajectory_line(std::string_view text, std::size_t line) {
  try {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ValidationError("document must be a JSON object");
    TrajectoryDocument doc;
    doc.task = detail::string_field(j, "task");
    doc.instance = detail::string_field(j, "instance");
    doc.expert = detail::string_field(j, "expert");
    if (auto it = j.find("answer_correct"); it != j.end() && !it->is_null()) {
      if (!it->is_boolean()) throw ValidationError("answer_correct must be a boolean or null");
      doc.answer_correct = it->get<bool>();
    }
    if (auto it = j.find("template"); it != j.end() && !it->is_null()) {
      if (!it->is_string()) throw ValidationError("template must be a string");
      doc.template_id = it->get<std::string>();
    }
    if (auto it = j.find("truncated"); it != j.end() && !it->is_null()) {
      if (!it->is_number_integer() || it->get<std::int64_t>() < 0)
        throw ValidationError("truncated must be a non-negative integer");
      doc.truncated = it->get<std::int64_t>();
    }
    const auto& tokens = detail::require(j, "tokens", "");
    if (!tokens.is_array()) throw ValidationError("tokens must be an array");
    if (tokens.empty()) throw ValidationError("tokens must be non-empty");
    doc.tokens.reserve(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) doc.tokens.push_back(detail::parse_token(tokens[i], i));
    return doc;
  } catch (const ValidationError& e) {
    throw ValidationError(detail::at_line(e.what(), line));
  }
}

/// Streams validated documents to `sink` in file order. In permissive mode
/// invalid lines are collected and skipped; blank lines are ignored.
inline std::vector<LineError> for_each_trajectory(const std::filesystem::path& path, ReadMode mode,
                                                  const std::function<void(TrajectoryDocument&&)>& sink) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open trajectory file " + path.string());
  std::vector<LineError> errors;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      sink(parse_trajectory_line(line, lineno));
    } catch (const ValidationError& e) {
      if (mode == ReadMode::fail_fast) throw ValidationError(path.string() + ": " + e.what());
      errors.push_back({lineno, e.what()});
    }
  }
  return errors;
}

inline TrajectoryReadResult read_trajectories(const std::filesystem::path& path, ReadMode mode = ReadMode::fail_fast) {
  TrajectoryReadResult out;
  out.errors = for_each_trajectory(path, mode, [&](TrajectoryDocument&& d) { out.documents.push_back(std::move(d)); });
  return out;
}

inline std::string to_json_line(const TrajectoryDocument& doc) {
  nlohmann::ordered_json j;
  j["task"] = doc.task;
  j["instance"] = doc.instance;
  j["expert"] = doc.expert;
  j["answer_correct"] = doc.answer_correct ? nlohmann::ordered_json(*doc.answer_correct) : nlohmann::ordered_json();
  if (doc.template_id) j["template"] = *doc.template_id;
  if (doc.truncated) j["truncated"] = *doc.truncated;
  auto& tokens = j["tokens"] = nlohmann::ordered_json::array();
  for (const auto& r : doc.tokens) {
    nlohmann::ordered_json t;
    t["id"] = r.token_id;
    t["lp"] = r.expert_logprob;
    t["rank"] = r.rank;
    t["maxp"] = r.max_prob;
    t["ent"] = r.entropy_norm;
    if (r.expert_model_logprob) t["elp"] = *r.expert_model_logprob;
    tokens.push_back(std::move(t));
  }
  return j.dump();
}

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  auto out = open_output(path);
  out << text;
  out.flush();
  if (!out) throw ValidationError("failed writing " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

inline void write_trajectories(const std::filesystem::path& path, const std::vector<TrajectoryDocument>& docs) {
  std::string text;
  for (const auto& d : docs) text += to_json_line(d) + "\n";
  detail::write_text(path, text);
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Minimal CSV: comma-separated, no quoting. Returns rows with their 1-based
/// line numbers; blank lines and lines starting with '#' are skipped.
struct CsvRow {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

inline std::vector<CsvRow> parse_csv(const std::string& text) {
  std::vector<CsvRow> rows;
  std::size_t lineno = 0, pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (line.find('"') != std::string::npos)
      throw ValidationError("quoted CSV fields are not supported (line " + std::to_string(lineno) + ")");
    CsvRow row;
    row.line = lineno;
    std::size_t p = 0;
    for (;;) {
      auto c = line.find(',', p);
      row.fields.push_back(line.substr(p, c == std::string::npos ? std::string::npos : c - p));
      if (c == std::string::npos) break;
      p = c + 1;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace detail {

inline void expect_header(const std::vector<CsvRow>& rows, const std::vector<std::string>& header,
                          const std::string& what) {
  if (rows.empty()) throw ValidationError(what + ": missing header");
  if (rows.front().fields != header) {
    std::string h;
    for (const auto& f : header) h += (h.empty() ? "" : ",") + f;
    throw ValidationError(what + ": header must be \"" + h + "\"");
  }
}

inline double csv_number(const CsvRow& row, std::size_t col, const std::string& what) {
  double v;
  if (!parse_double(row.fields[col], v) || !std::isfinite(v))
    throw ValidationError(what + ": non-numeric value \"" + row.fields[col] + "\" (row " + std::to_string(row.line) +
                          ")");
  return v;
}

inline void expect_width(const CsvRow& row, std::size_t width, const std::string& what) {
  if (row.fields.size() != width)
    throw ValidationError(what + ": expected " + std::to_string(width) + " columns (row " + std::to_string(row.line) +
                          ")");
}

}  // namespace detail

struct ScoreReadResult {
  ScoreTable table;
  std::vector<std::string> warnings;
};

inline ScoreReadResult parse_scores(const std::string& text, const std::string& what = "scores") {
  const auto rows = parse_csv(text);
  detail::expect_header(rows, {"subject", "task", "score"}, what);
  ScoreReadResult out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    detail::expect_width(r, 3, what);
    const double v = detail::csv_number(r, 2, what);
    try {
      out.table.insert(r.fields[0], r.fields[1], v);
    } catch (const ValidationError& e) {
      throw ValidationError(what + ": " + e.what() + " (row " + std::to_string(r.line) + ")");
    }
  }
  if (out.table.empty()) out.warnings.push_back(what + ": no score rows");
  return out;
}

inline ScoreReadResult read_scores(const std::filesystem::path& path) {
  return parse_scores(detail::read_text(path), path.string());
}

// ---------------------------------------------------------------------------
// Proxy feature files
// ---------------------------------------------------------------------------

inline constexpr const char* kGenericCeId = "baseline/generic_ce";
inline constexpr const char* kRbridgeId = "baseline/rbridge";

/// Baseline values keyed by (subject, task); generic CE uses task "*".
using BaselineTable = std::map<std::pair<std::string, std::string>, std::map<std::string, double>>;

struct FeatureFile {
  FeatureTable features;
  BaselineTable baselines;
};

/// Rows subject,task,proxy_id,value,n_instances,n_undefined; undefined values
/// are written as "nan". Values use shortest round-trip formatting.
inline std::string format_features(const FeatureFile& f) {
  std::string out = "subject,task,proxy_id,value,n_instances,n_undefined\n";
  for (const auto& [key, v] : f.features) {
    for (int j = 0; j < kNumProxies; ++j) {
      out += key.first + "," + key.second + "," + ProxyId::from_index(j).str() + ",";
      out += v.defined[j] ? format_shortest(v.values[j]) : std::string("nan");
      out += "," + std::to_string(v.n_contributing[j]) + "," + std::to_string(v.n_undefined[j]) + "\n";
    }
  }
  for (const auto& [key, m] : f.baselines)
    for (const auto& [name, value] : m)
      out += key.first + "," + key.second + "," + name + "," + format_shortest(value) + ",0,0\n";
  return out;
}

inline FeatureFile parse_features(const std::string& text, const std::string& what = "features") {
  const auto rows = parse_csv(text);
  detail::expect_header(rows, {"subject", "task", "proxy_id", "value", "n_instances", "n_undefined"}, what);
  std::map<std::pair<std::string, std::string>, ProxyVector> partial;
  std::map<std::pair<std::string, std::string>, std::array<bool, kNumProxies>> seen;
  FeatureFile out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    detail::expect_width(r, 6, what);
    const auto key = std::make_pair(r.fields[0], r.fields[1]);
    const auto& pid = r.fields[2];
    if (pid.rfind("baseline/", 0) == 0) {
      out.baselines[key][pid] = detail::csv_number(r, 3, what);
      continue;
    }
    auto id = ProxyId::parse(pid);
    if (!id) throw ValidationError(what + ": unknown proxy id \"" + pid + "\" (row " + std::to_string(r.line) + ")");
    auto& v = partial[key];
    v.subject = key.first;
    v.task = key.second;
    auto& s = seen[key];
    if (s[id->index()])
      throw ValidationError(what + ": duplicate entry " + pid + " for (" + key.first + ", " + key.second + ") (row " +
                            std::to_string(r.line) + ")");
    s[id->index()] = true;
    if (r.fields[3] == "nan") {
      v.defined[id->index()] = false;
      v.values[id->index()] = 0.0;
    } else {
      v.defined[id->index()] = true;
      v.values[id->index()] = detail::csv_number(r, 3, what);
    }
    double ni, nu;
    if (!parse_double(r.fields[4], ni) || !parse_double(r.fields[5], nu))
      throw ValidationError(what + ": non-numeric count (row " + std::to_string(r.line) + ")");
    v.n_contributing[id->index()] = static_cast<int>(ni);
    v.n_undefined[id->index()] = static_cast<int>(nu);
    v.n_instances = std::max(v.n_instances, static_cast<int>(ni + nu));
  }
  for (auto& [key, v] : partial) {
    const auto& s = seen[key];
    for (int j = 0; j < kNumProxies; ++j)
      if (!s[j])
        throw ValidationError(what + ": (" + key.first + ", " + key.second + ") is missing " +
                              ProxyId::from_index(j).str());
    out.features.insert(std::move(v));
  }
  return out;
}

inline FeatureFile read_features(const std::filesystem::path& path) {
  return parse_features(detail::read_text(path), path.string());
}

// ---------------------------------------------------------------------------
// Run manifests
// ---------------------------------------------------------------------------

struct RunManifest {
  std::string subject;
  SubjectKind kind = SubjectKind::model;
  std::optional<double> n_params;
  std::optional<double> d_tokens;
  std::optional<double> step;
  std::map<std::string, std::vector<std::filesystem::path>> files;  // task -> trajectory files
  std::optional<std::filesystem::path> generic;                     // generic-text token stream
};

/// Relative paths resolve against the manifest's directory; every referenced
/// file must exist.
inline RunManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir,
                                  const std::string& what = "manifest") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(what + ": malformed JSON: " + e.what());
  }
  if (!j.is_object()) throw ValidationError(what + ": must be a JSON object");
  static const std::vector<std::string> known = {"subject", "kind", "n_params", "d_tokens", "step", "files", "generic"};
  for (const auto& [k, v] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw ValidationError(what + ": unknown key \"" + k + "\"");
  RunManifest m;
  try {
    m.subject = detail::string_field(j, "subject");
  } catch (const ValidationError& e) {
    throw ValidationError(what + ": " + e.what());
  }
  if (m.subject.empty() || m.subject.find(',') != std::string::npos)
    throw ValidationError(what + ": subject must be non-empty and contain no commas");
  if (auto it = j.find("kind"); it != j.end()) {
    auto k = it->is_string() ? parse_subject_kind(it->get<std::string>()) : std::nullopt;
    if (!k) throw ValidationError(what + ": kind must be one of model, corpus, checkpoint");
    m.kind = *k;
  }
  auto positive = [&](const char* key) -> std::optional<double> {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_number() || !(it->get<double>() > 0.0))
      throw ValidationError(what + ": " + key + " must be a positive number");
    return it->get<double>();
  };
  m.n_params = positive("n_params");
  m.d_tokens = positive("d_tokens");
  if (auto it = j.find("step"); it != j.end() && !it->is_null()) {
    if (!it->is_number() || it->get<double>() < 0.0) throw ValidationError(what + ": step must be >= 0");
    m.step = it->get<double>();
  }
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    if (path.is_relative()) path = base_dir / path;
    if (!std::filesystem::exists(path)) throw ValidationError(what + ": referenced file does not exist: " + path.string());
    return path;
  };
  auto fit = j.find("files");
  if (fit == j.end() || !fit->is_object()) throw ValidationError(what + ": files must be an object task -> path");
  for (const auto& [task, v] : fit->items()) {
    if (task.empty() || task.find(',') != std::string::npos)
      throw ValidationError(what + ": task names must be non-empty and contain no commas");
    auto& list = m.files[task];
    if (v.is_string()) {
      list.push_back(resolve(v.get<std::string>()));
    } else if (v.is_array() && !v.empty()) {
      for (const auto& e : v) {
        if (!e.is_string()) throw ValidationError(what + ": files[" + task + "] entries must be strings");
        list.push_back(resolve(e.get<std::string>()));
      }
    } else {
      throw ValidationError(what + ": files[" + task + "] must be a path or a non-empty list of paths");
    }
  }
  if (m.files.empty()) throw ValidationError(what + ": files is empty");
  if (auto it = j.find("generic"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw ValidationError(what + ": generic must be a path");
    m.generic = resolve(it->get<std::string>());
  }
  return m;
}

inline RunManifest read_manifest(const std::filesystem::path& path) {
  return parse_manifest(detail::read_text(path), path.parent_path(), path.string());
}

// ---------------------------------------------------------------------------
// Reports (6 significant digits, long format)
// ---------------------------------------------------------------------------

namespace detail {

inline std::string rho_cell(const std::optional<double>& r) { return r ? format_g6(*r) : std::string("nan"); }

}  // namespace detail

/// Block 1: fold,seed,task,rho,ranker (one row per fold x seed x held-out task).
/// Block 2: task,mean_rho,std_rho,n_seeds,n_values,n_undefined (per task, then "overall").
/// Block 3 (selection rankers): proxy_id,count,frequency.
/// Blocks are separated by a blank line; a leading '#' line records the sampling scheme.
inline std::string format_cv_report(const CvReport& r) {
  std::string out = "# variant=" + std::string(to_string(r.variant)) + " prng=" + r.prng + "\n";
  out += "fold,seed,task,rho,ranker\n";
  for (const auto& rec : r.records)
    for (std::size_t i = 0; i < rec.heldout.size(); ++i)
      out += std::to_string(rec.fold) + "," + std::to_string(rec.seed) + "," + rec.heldout[i] + "," +
             detail::rho_cell(rec.rho[i]) + "," + rec.ranker + "\n";
  out += "\ntask,mean_rho,std_rho,n_seeds,n_values,n_undefined\n";
  auto agg = [&](const Aggregate& a) {
    out += a.task + "," + format_g6(a.mean) + "," + format_g6(a.std) + "," + std::to_string(a.n_seeds) + "," +
           std::to_string(a.n_values) + "," + std::to_string(a.n_undefined) + "\n";
  };
  for (const auto& a : r.per_task) agg(a);
  agg(r.overall);
  if (r.has_selection()) {
    out += "\nproxy_id,count,frequency\n";
    const auto freq = r.selection_frequency();
    for (int j = 0; j < kNumProxies; ++j)
      out += ProxyId::from_index(j).str() + "," + std::to_string(r.selection_counts[j]) + "," + format_g6(freq[j]) +
             "\n";
  }
  return out;
}

inline std::string format_oracle_report(const OracleResult& r) {
  std::string out = "# in-sample: fit and evaluated on every task and subject\n";
  out += "task,rho,ranker\n";
  for (std::size_t i = 0; i < r.tasks.size(); ++i)
    out += r.tasks[i] + "," + detail::rho_cell(r.rho[i]) + "," + r.ranker.describe() + "\n";
  out += "mean," + format_g6(r.mean) + "," + r.ranker.describe() + "\n";
  return out;
}

inline std::string format_decision_curve(const std::vector<CurvePoint>& curve) {
  std::string out = "scale,compute_fraction,decision_accuracy\n";
  for (const auto& p : curve)
    out += p.scale + "," + format_g6(p.compute_fraction) + "," + format_g6(p.decision_accuracy) + "\n";
  return out;
}

template <typename Report, typename Formatter>
void write_report(const Report& report, const std::filesystem::path& path, Formatter&& fmt) {
  detail::write_text(path, fmt(report));
}

inline void write_report(const CvReport& r, const std::filesystem::path& path) {
  detail::write_text(path, format_cv_report(r));
}

inline void write_report(const OracleResult& r, const std::filesystem::path& path) {
  detail::write_text(path, format_oracle_report(r));
}

inline void write_report(const std::vector<CurvePoint>& curve, const std::filesystem::path& path) {
  detail::write_text(path, format_decision_curve(curve));
}

}  // namespace proxyrank
