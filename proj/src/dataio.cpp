// Copyright 2026 The flowtrace Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "flowtrace/dataio.hpp"

#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "flowtrace/error.hpp"

namespace flowtrace {

namespace fs = std::filesystem;

namespace {

std::string fmt9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

bool parse_double(std::string_view field, double& out) {
  std::string s(field);
  if (s.empty()) return false;
  char* end = nullptr;
  errno = 0;
  out = std::strtod(s.c_str(), &end);
  return errno == 0 && end == s.c_str() + s.size() && std::isfinite(out);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    if (!fs::exists(path)) fail(ErrorCode::missing_file, "no such file: " + path.string());
    fail(ErrorCode::io, "cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json opt(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

template <typename T>
T field(const Json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key))
    fail(ErrorCode::format, where + ": missing field '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::format, where + ": field '" + key + "' has the wrong type");
  }
}

std::optional<double> opt_field(const Json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
  return field<double>(obj, key, where);
}

Json config_json(const TrialConfig& c) {
  return Json{{"target_force", c.target_force},       {"band_width", c.band_width},
              {"trial_duration", c.trial_duration},   {"hold_duration", c.hold_duration},
              {"rest_duration", c.rest_duration},     {"press_threshold", c.press_threshold}};
}

TrialConfig config_from(const Json& j) {
  TrialConfig c;
  const std::string w = "config";
  c.target_force = field<double>(j, "target_force", w);
  c.band_width = field<double>(j, "band_width", w);
  c.trial_duration = field<double>(j, "trial_duration", w);
  c.hold_duration = field<double>(j, "hold_duration", w);
  c.rest_duration = field<double>(j, "rest_duration", w);
  c.press_threshold = field<double>(j, "press_threshold", w);
  return c;
}

}  // namespace

std::string trace_to_csv(const ForceTrace& trace) {
  std::string out = kTraceHeader;
  out += '\n';
  for (std::size_t i = 0; i < trace.samples.size(); ++i) {
    out += fmt9(trace.time_of(i));
    out += ',';
    out += fmt9(trace.samples[i]);
    out += '\n';
  }
  return out;
}

ForceTrace trace_from_csv(std::string_view text, const std::string& source) {
  std::vector<double> t;
  std::vector<double> f;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header = false;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!header) {
      if (line != kTraceHeader)
        fail(ErrorCode::parse, source + ":" + std::to_string(line_no) + ": expected header '" +
                                   kTraceHeader + "'");
      header = true;
      continue;
    }
    if (line.empty()) continue;
    const auto comma = line.find(',');
    double tv = 0;
    double fv = 0;
    if (comma == std::string_view::npos || !parse_double(line.substr(0, comma), tv) ||
        !parse_double(line.substr(comma + 1), fv))
      fail(ErrorCode::parse, source + ":" + std::to_string(line_no) + ": malformed row");
    if (!t.empty() && !(tv > t.back()))
      fail(ErrorCode::format, source + ":" + std::to_string(line_no) + ": time is not increasing");
    t.push_back(tv);
    f.push_back(fv);
  }
  if (!header) fail(ErrorCode::parse, source + ": empty file, expected header");
  if (t.size() < 2) fail(ErrorCode::format, source + ": need two rows to infer the sample period");
  ForceTrace tr;
  tr.dt = round_sig9((t.back() - t.front()) / static_cast<double>(t.size() - 1));
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double expect = t.front() + static_cast<double>(i) * tr.dt;
    if (std::abs(t[i] - expect) > 1e-6 * std::max(1.0, std::abs(expect)))
      fail(ErrorCode::format, source + ":" + std::to_string(i + 2) + ": samples are not uniform");
  }
  tr.samples = std::move(f);
  return tr;
}

void write_trace(const ForceTrace& trace, const fs::path& path) {
  write_text_atomic(path, trace_to_csv(trace));
}

ForceTrace read_trace(const fs::path& path) { return trace_from_csv(read_file(path), path.string()); }

std::string dump_json(const Json& doc) { return doc.dump(2) + "\n"; }

void write_text_atomic(const fs::path& path, std::string_view text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) fail(ErrorCode::io, "cannot create " + path.parent_path().string() + ": " + ec.message());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::io, "cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) {
      fs::remove(tmp, ec);
      fail(ErrorCode::io, "write failed for " + path.string());
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail(ErrorCode::io, "cannot replace " + path.string());
  }
}

void write_json_atomic(const Json& doc, const fs::path& path) { write_text_atomic(path, dump_json(doc)); }

Json read_json(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::parse, path.string() + ": " + e.what());
  }
}

Json session_to_json(const SessionData& data, const fs::path& session_path,
                     const SessionWriteOptions& options, const Json& extra) {
  data.validate();
  std::string trace_dir = options.trace_dir;
  if (trace_dir.empty()) trace_dir = session_path.stem().string() + ".traces";
  const fs::path base = session_path.parent_path();

  Json doc;
  doc["schema"] = "flowtrace.session";
  doc["schema_version"] = kSessionSchemaVersion;
  doc["subject_id"] = data.subject_id;
  doc["config"] = config_json(data.config);
  doc["sessions"] = data.sessions;
  doc["trials_per_session"] = data.trials_per_session;

  Json sc;
  sc["k1"] = data.staircase.params.k1;
  sc["k2"] = data.staircase.params.k2;
  sc["initial_band"] = data.staircase.params.initial_band;
  sc["measured_skill"] = opt(data.staircase.measured_skill);
  Json hist = Json::array();
  for (const auto& e : data.staircase.history)
    hist.push_back(Json{{"band", e.band}, {"success", e.success}, {"completing_time", e.completing_time}});
  sc["history"] = std::move(hist);
  doc["staircase"] = std::move(sc);

  Json trials = Json::array();
  for (std::size_t k = 0; k < data.trials.size(); ++k) {
    const TrialRecord& r = data.trials[k];
    Json t;
    t["index"] = k + 1;
    t["success"] = r.success;
    t["press_onset"] = opt(r.press_onset);
    t["band_entry"] = opt(r.band_entry);
    t["success_latch"] = opt(r.success_latch);
    if (options.mode == TraceMode::inline_samples) {
      t["dt"] = r.trace.dt;
      t["samples"] = r.trace.samples;
    } else {
      char name[32];
      std::snprintf(name, sizeof name, "trial_%04zu.csv", k + 1);
      const std::string rel = trace_dir + "/" + name;
      const fs::path target = base / rel;
      if (!(options.keep_existing_traces && fs::exists(target))) write_trace(r.trace, target);
      t["trace_file"] = rel;
    }
    trials.push_back(std::move(t));
  }
  doc["trials"] = std::move(trials);

  Json probes = Json::array();
  for (const auto& p : data.probes)
    probes.push_back(Json{{"probe_index", p.probe_index},
                          {"trial_index", p.trial_index},
                          {"responses", p.responses},
                          {"intensity", p.intensity}});
  doc["probes"] = std::move(probes);
  doc["ground_truth_flow"] = data.ground_truth_flow;
  doc["provenance"] = Json{{"seed", data.provenance.seed},
                           {"tool_version", data.provenance.tool_version},
                           {"source", data.provenance.source}};
  for (const auto& [k, v] : extra.items()) doc[k] = v;
  return doc;
}

SessionData session_from_json(const Json& doc, const fs::path& session_path) {
  const std::string where = session_path.string();
  if (!doc.is_object()) fail(ErrorCode::format, where + ": session document is not an object");
  const int version = field<int>(doc, "schema_version", where);
  if (version != kSessionSchemaVersion)
    fail(ErrorCode::version_mismatch, where + ": schema_version expected " +
                                          std::to_string(kSessionSchemaVersion) + ", found " +
                                          std::to_string(version));
  const fs::path base = session_path.parent_path();

  SessionData d;
  d.subject_id = field<std::string>(doc, "subject_id", where);
  d.config = config_from(field<Json>(doc, "config", where));
  d.sessions = field<int>(doc, "sessions", where);
  d.trials_per_session = field<int>(doc, "trials_per_session", where);

  const Json sc = field<Json>(doc, "staircase", where);
  d.staircase.params.k1 = field<double>(sc, "k1", "staircase");
  d.staircase.params.k2 = field<double>(sc, "k2", "staircase");
  d.staircase.params.initial_band = field<double>(sc, "initial_band", "staircase");
  d.staircase.measured_skill = opt_field(sc, "measured_skill", "staircase");
  for (const auto& e : field<Json>(sc, "history", "staircase"))
    d.staircase.history.push_back({field<double>(e, "band", "staircase history"),
                                   field<bool>(e, "success", "staircase history"),
                                   field<double>(e, "completing_time", "staircase history")});

  const Json trials = field<Json>(doc, "trials", where);
  if (!trials.is_array()) fail(ErrorCode::format, where + ": 'trials' is not an array");
  for (std::size_t k = 0; k < trials.size(); ++k) {
    const Json& t = trials[k];
    const std::string tw = where + " trial " + std::to_string(k + 1);
    ForceTrace tr;
    if (t.contains("trace_file")) {
      const fs::path p = base / field<std::string>(t, "trace_file", tw);
      if (!fs::exists(p)) fail(ErrorCode::missing_file, tw + ": trace file " + p.string() + " not found");
      tr = read_trace(p);
    } else {
      tr.dt = field<double>(t, "dt", tw);
      tr.samples = field<std::vector<double>>(t, "samples", tw);
    }
    TrialRecord rec = evaluate_trial(tr, d.config);
    if (rec.success != field<bool>(t, "success", tw) ||
        rec.success_latch != opt_field(t, "success_latch", tw) ||
        rec.press_onset != opt_field(t, "press_onset", tw) ||
        rec.band_entry != opt_field(t, "band_entry", tw))
      fail(ErrorCode::validation, tw + ": stored outcome disagrees with its trace");
    d.trials.push_back(std::move(rec));
  }

  for (const auto& p : field<Json>(doc, "probes", where)) {
    const auto r = field<std::array<int, 3>>(p, "responses", "probe");
    d.probes.push_back(FlowProbe::from_responses(field<int>(p, "probe_index", "probe"),
                                                 field<int>(p, "trial_index", "probe"), r));
  }
  if (doc.contains("ground_truth_flow"))
    d.ground_truth_flow = field<std::vector<double>>(doc, "ground_truth_flow", where);
  const Json prov = field<Json>(doc, "provenance", where);
  d.provenance.seed = field<std::uint64_t>(prov, "seed", "provenance");
  d.provenance.tool_version = field<std::string>(prov, "tool_version", "provenance");
  d.provenance.source = field<std::string>(prov, "source", "provenance");
  d.validate();
  return d;
}

void write_session(const SessionData& data, const fs::path& path,
                   const SessionWriteOptions& options, const Json& extra) {
  write_json_atomic(session_to_json(data, path, options, extra), path);
}

SessionData read_session(const fs::path& path) { return session_from_json(read_json(path), path); }

}  // namespace flowtrace
