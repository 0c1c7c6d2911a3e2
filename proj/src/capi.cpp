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


#include "flowtrace/flowtrace.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <new>
#include <set>
#include <thread>

#include "flowtrace/dataio.hpp"
#include "flowtrace/error.hpp"
#include "flowtrace/metrics.hpp"
#include "flowtrace/pipeline.hpp"
#include "flowtrace/service.hpp"
#include "flowtrace/simulator.hpp"
#include "flowtrace/version.hpp"

struct ft_staircase {
  flowtrace::Staircase s;
};

struct ft_session {
  flowtrace::SessionData data;
};

struct ft_server {
  std::unique_ptr<flowtrace::Service> svc;
};

namespace {

using namespace flowtrace;

thread_local std::string g_last_error;

template <typename F>
ft_status guard(F&& f) {
  try {
    g_last_error.clear();
    f();
    return FT_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return static_cast<ft_status>(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return FT_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return FT_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) fail(ErrorCode::invalid_input, std::string(what) + " is NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

Json parse_options(const char* text) {
  if (!text || !*text) return Json::object();
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, std::string("options are not JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::invalid_input, "options must be a JSON object");
  return j;
}

// Strict reader: every key must be consumed by some get().
class Fields {
 public:
  explicit Fields(const Json& j) : j_(j) {}

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      fail(ErrorCode::invalid_input, std::string("option '") + key + "' has the wrong type");
    }
  }

  const Json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) fail(ErrorCode::invalid_input, "unknown option '" + k + "'");
  }

 private:
  const Json& j_;
  std::set<std::string> seen_;
};

void read_trial_fields(Fields& f, TrialConfig& c) {
  f.get("target_force", c.target_force);
  f.get("band_width", c.band_width);
  f.get("trial_duration", c.trial_duration);
  f.get("hold_duration", c.hold_duration);
  f.get("rest_duration", c.rest_duration);
  f.get("press_threshold", c.press_threshold);
}

void read_staircase_fields(Fields& f, StaircaseParams& p) {
  f.get("k1", p.k1);
  f.get("k2", p.k2);
  f.get("initial_band", p.initial_band);
}

CohortOptions cohort_from_json(const Json& j) {
  CohortOptions o;
  Fields f(j);
  f.get("subjects", o.subjects);
  f.get("seed", o.seed);
  std::string flow = flow_kind_name(o.flow_kind);
  f.get("flow", flow);
  o.flow_kind = flow_kind_from_name(flow);
  f.get("flow_mean", o.flow.mean);
  f.get("relaxation_trials", o.flow.relaxation_trials);
  f.get("stationary_sd", o.flow.stationary_sd);
  f.get("flow_noise_sd", o.flow.noise_sd);
  double period = o.flow.components.front().period_s;
  double amplitude = o.flow.components.front().amplitude;
  f.get("flow_period_s", period);
  f.get("flow_amplitude", amplitude);
  o.flow.components = {{period, amplitude}};
  f.get("sessions", o.sessions);
  f.get("trials_per_session", o.trials_per_session);
  f.get("probes_per_session", o.probes_per_session);
  f.get("min_gap", o.min_gap);
  f.get("report_noise_sd", o.report_noise_sd);
  f.get("measure_skill", o.measure_skill);
  f.get("skill_intensity", o.skill_intensity);
  f.get("skill_trials", o.skill_trials);
  f.get("skill_max_trials", o.skill_max_trials);
  read_trial_fields(f, o.config);
  o.flow.trial_period_s = o.config.trial_duration + o.config.rest_duration;
  read_staircase_fields(f, o.staircase);
  f.finish();
  require(o.subjects >= 1, ErrorCode::invalid_input, "subjects must be at least 1");
  o.config.validate();
  return o;
}

AnalysisOptions analysis_from_json(const Json& j) {
  AnalysisOptions o;
  Fields f(j);
  f.get("random_replicates", o.random_replicates);
  f.get("permutation_replicates", o.permutation_replicates);
  f.get("seed", o.seed);
  f.get("qc", o.qc);
  f.get("max_subset", o.max_subset);
  f.get("window", o.window);
  f.get("fs", o.fs);
  f.get("power_fraction", o.power_fraction);
  std::string draw = o.label_draw == LabelDraw::continuous ? "continuous" : "likert_grid";
  f.get("label_draw", draw);
  if (draw == "continuous")
    o.label_draw = LabelDraw::continuous;
  else if (draw == "likert_grid")
    o.label_draw = LabelDraw::likert_grid;
  else
    fail(ErrorCode::invalid_input, "label_draw must be 'continuous' or 'likert_grid'");
  f.get("jobs", o.jobs);
  f.get("significance", o.significance);
  f.finish();
  require(o.random_replicates >= 1 && o.permutation_replicates >= 1, ErrorCode::invalid_input,
          "replicate counts must be positive");
  require(o.window >= 1 && o.max_subset >= 1 && o.fs > 0, ErrorCode::invalid_input,
          "window, max_subset and fs must be positive");
  require(o.power_fraction > 0 && o.power_fraction < 1, ErrorCode::invalid_input,
          "power_fraction must be in (0, 1)");
  return o;
}

ServiceOptions service_from_json(const Json& j) {
  ServiceOptions o;
  Fields f(j);
  f.get("host", o.host);
  f.get("port", o.port);
  std::string data_dir = o.data_dir.string();
  f.get("data_dir", data_dir);
  o.data_dir = data_dir;
  std::string static_dir;
  f.get("static_dir", static_dir);
  if (!static_dir.empty()) o.static_dir = static_dir;
  f.get("analysis_threads", o.analysis_threads);
  f.get("handle_signals", o.handle_signals);
  if (const Json* a = f.sub("analysis")) o.analysis = analysis_from_json(*a);
  if (const Json* s = f.sub("session_defaults")) o.session_defaults = live_options_from_json(*s);
  f.finish();
  return o;
}

TrialConfig to_config(const ft_trial_config* c) {
  need(c, "config");
  TrialConfig t;
  t.target_force = c->target_force;
  t.band_width = c->band_width;
  t.trial_duration = c->trial_duration;
  t.hold_duration = c->hold_duration;
  t.rest_duration = c->rest_duration;
  t.press_threshold = c->press_threshold;
  return t;
}

ForceTrace to_trace(const double* samples, std::size_t n, double dt) {
  if (n > 0) need(samples, "samples");
  ForceTrace t;
  t.dt = dt;
  t.samples.assign(samples, samples + n);
  return t;
}

double nan_if_absent(const std::optional<double>& v) {
  return v ? *v : std::numeric_limits<double>::quiet_NaN();
}

Json record_json(const TrialRecord& r) {
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  Json m;
  const MetricsVector mv = trial_metrics(r, {&r, 1});
  for (Metric k : kAllMetrics) m[std::string(metric_name(k))] = mv.at(k);
  return Json{{"samples", r.trace.samples.size()},
              {"dt", r.trace.dt},
              {"success", r.success},
              {"press_onset", opt(r.press_onset)},
              {"band_entry", opt(r.band_entry)},
              {"success_latch", opt(r.success_latch)},
              {"metrics", m}};
}

std::vector<SessionData> read_sessions(const char* const* paths, std::size_t n) {
  require(n > 0, ErrorCode::invalid_input, "no session files given");
  need(paths, "session_paths");
  std::vector<SessionData> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    need(paths[i], "session path");
    out.push_back(read_session(paths[i]));
  }
  return out;
}

Json session_summary(const SessionData& d) {
  std::size_t wins = 0;
  for (const auto& t : d.trials) wins += t.success ? 1 : 0;
  return Json{{"subject_id", d.subject_id},
              {"sessions", d.sessions},
              {"trials_per_session", d.trials_per_session},
              {"trials", d.trials.size()},
              {"probes", d.probes.size()},
              {"band_width", d.config.band_width},
              {"measured_skill", d.staircase.measured_skill ? Json(*d.staircase.measured_skill) : Json(nullptr)},
              {"success_rate", d.trials.empty() ? 0.0 : static_cast<double>(wins) / static_cast<double>(d.trials.size())},
              {"source", d.provenance.source},
              {"seed", d.provenance.seed}};
}

}  // namespace

extern "C" {

const char* ft_version(void) { return kVersion; }

const char* ft_status_name(ft_status status) {
  if (status == FT_OK) return "ok";
  if (status == FT_ERR_INTERNAL) return "internal";
  if (status >= 1 && status <= 14) return error_code_name(static_cast<ErrorCode>(status));
  return "unknown";
}

const char* ft_last_error(void) { return g_last_error.c_str(); }

void ft_string_free(char* s) { std::free(s); }

void ft_trial_config_default(ft_trial_config* config) {
  if (!config) return;
  const TrialConfig t;
  *config = {t.target_force, t.band_width, t.trial_duration, t.hold_duration, t.rest_duration, t.press_threshold};
}

const char* ft_metric_name(int index) {
  if (index < 0 || index >= FT_METRIC_COUNT) return nullptr;
  return metric_name(static_cast<Metric>(index)).data();
}

ft_status ft_evaluate_trial(const ft_trial_config* config, const double* samples, size_t n, double dt,
                            ft_trial_result* out) {
  return guard([&] {
    need(out, "out");
    const TrialRecord r = evaluate_trial(to_trace(samples, n, dt), to_config(config));
    *out = {r.success ? 1 : 0, nan_if_absent(r.press_onset), nan_if_absent(r.band_entry),
            nan_if_absent(r.success_latch)};
  });
}

ft_status ft_trial_metrics(const ft_trial_config* config, const double* samples, size_t n, double dt,
                           double out[FT_METRIC_COUNT]) {
  return guard([&] {
    need(out, "out");
    const TrialRecord r = evaluate_trial(to_trace(samples, n, dt), to_config(config));
    const MetricsVector m = trial_metrics(r, {&r, 1});
    for (Metric k : kAllMetrics) out[static_cast<int>(k)] = m.at(k);
  });
}

ft_status ft_trace_read(const char* path, double** samples, size_t* n, double* dt) {
  return guard([&] {
    need(path, "path");
    need(samples, "samples");
    need(n, "n");
    need(dt, "dt");
    const ForceTrace t = read_trace(path);
    auto* buf = static_cast<double*>(std::malloc(sizeof(double) * std::max<std::size_t>(1, t.samples.size())));
    if (!buf) throw std::bad_alloc();
    std::copy(t.samples.begin(), t.samples.end(), buf);
    *samples = buf;
    *n = t.samples.size();
    *dt = t.dt;
  });
}

void ft_samples_free(double* samples) { std::free(samples); }

ft_status ft_trace_metrics(const char* path, const char* config_json, char** result_json) {
  return guard([&] {
    need(path, "path");
    need(result_json, "result_json");
    TrialConfig cfg;
    const Json j = parse_options(config_json);
    Fields f(j);
    read_trial_fields(f, cfg);
    f.finish();
    const ForceTrace trace = read_trace(path);
    Json out = record_json(evaluate_trial(trace, cfg));
    *result_json = dup_string(dump_json(out));
  });
}

ft_status ft_staircase_new(double k1, double k2, double initial_band, ft_staircase** out) {
  return guard([&] {
    need(out, "out");
    *out = new ft_staircase{Staircase(StaircaseParams{k1, k2, initial_band})};
  });
}

void ft_staircase_free(ft_staircase* s) { delete s; }

ft_status ft_staircase_step(ft_staircase* s, int success, double completing_time, double* next_band) {
  return guard([&] {
    need(s, "staircase");
    const double b = s->s.step(success != 0, completing_time);
    if (next_band) *next_band = b;
  });
}

double ft_staircase_band(const ft_staircase* s) {
  return s ? s->s.current_band() : std::numeric_limits<double>::quiet_NaN();
}

size_t ft_staircase_transitions(const ft_staircase* s) { return s ? s->s.transition_points().size() : 0; }

ft_status ft_staircase_measured_skill(const ft_staircase* s, size_t count, double* out) {
  return guard([&] {
    need(s, "staircase");
    need(out, "out");
    *out = s->s.measured_skill(count);
  });
}

ft_status ft_staircase_simulate(const char* options_json, char** result_json) {
  return guard([&] {
    need(result_json, "result_json");
    const Json j = parse_options(options_json);
    Fields f(j);
    TrialConfig cfg;
    StaircaseParams sp;
    double intensity = 4.0;
    int min_trials = 50, max_trials = 200, transitions = 10;
    std::uint64_t seed = 0;
    read_trial_fields(f, cfg);
    read_staircase_fields(f, sp);
    f.get("intensity", intensity);
    f.get("skill_trials", min_trials);
    f.get("skill_max_trials", max_trials);
    f.get("transitions", transitions);
    f.get("seed", seed);
    f.finish();
    require(transitions >= 1 && min_trials >= 1 && max_trials >= min_trials, ErrorCode::invalid_input,
            "inconsistent trial limits");
    const Staircase s = simulate_staircase(SimParams{}, cfg, sp, intensity, min_trials, max_trials,
                                           static_cast<std::size_t>(transitions), seed);
    Json hist = Json::array();
    for (const auto& e : s.history())
      hist.push_back(Json{{"band", e.band}, {"success", e.success}, {"completing_time", e.completing_time}});
    const auto found = s.transition_points().size();
    Json out{{"trials", s.history().size()},
             {"transitions", found},
             {"transition_points", s.transition_points()},
             {"measured_skill", found >= static_cast<std::size_t>(transitions)
                                    ? Json(s.measured_skill(static_cast<std::size_t>(transitions)))
                                    : Json(nullptr)},
             {"final_band", s.current_band()},
             {"history", hist}};
    *result_json = dup_string(dump_json(out));
  });
}

ft_status ft_session_read(const char* path, ft_session** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new ft_session{read_session(path)};
  });
}

ft_status ft_session_write(const ft_session* s, const char* path, int referenced_traces) {
  return guard([&] {
    need(s, "session");
    need(path, "path");
    SessionWriteOptions w;
    w.mode = referenced_traces ? TraceMode::referenced : TraceMode::inline_samples;
    write_session(s->data, path, w);
  });
}

ft_status ft_session_summary(const ft_session* s, char** json) {
  return guard([&] {
    need(s, "session");
    need(json, "json");
    *json = dup_string(dump_json(session_summary(s->data)));
  });
}

void ft_session_free(ft_session* s) { delete s; }

ft_status ft_session_simulate(const char* cohort_json, int index, ft_session** out) {
  return guard([&] {
    need(out, "out");
    const CohortOptions o = cohort_from_json(parse_options(cohort_json));
    require(index >= 0 && index < o.subjects, ErrorCode::invalid_input, "subject index out of range");
    *out = new ft_session{simulate_cohort_subject(o, index)};
  });
}

ft_status ft_simulate_cohort(const char* cohort_json, const char* out_dir, int referenced_traces, int jobs,
                             char** summary_json) {
  return guard([&] {
    need(out_dir, "out_dir");
    const CohortOptions o = cohort_from_json(parse_options(cohort_json));
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) fail(ErrorCode::io, std::string("cannot create '") + out_dir + "': " + ec.message());
    SessionWriteOptions w;
    w.mode = referenced_traces ? TraceMode::referenced : TraceMode::inline_samples;

    std::vector<Json> rows(static_cast<std::size_t>(o.subjects));
    std::vector<std::string> errors(rows.size());
    std::atomic<int> next{0};
    auto worker = [&] {
      for (int i = next++; i < o.subjects; i = next++) {
        try {
          const SessionData d = simulate_cohort_subject(o, i);
          const auto path = std::filesystem::path(out_dir) / (d.subject_id + ".json");
          write_session(d, path, w);
          Json row = session_summary(d);
          row["file"] = path.string();
          rows[static_cast<std::size_t>(i)] = std::move(row);
        } catch (const std::exception& e) {
          errors[static_cast<std::size_t>(i)] = e.what();
        }
      }
    };
    const int n_jobs = std::clamp(jobs, 1, o.subjects);
    std::vector<std::thread> pool;
    for (int t = 1; t < n_jobs; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (std::size_t i = 0; i < errors.size(); ++i)
      if (!errors[i].empty()) fail(ErrorCode::io, subject_name(static_cast<int>(i)) + ": " + errors[i]);

    if (summary_json) {
      Json out{{"subjects", o.subjects}, {"seed", o.seed}, {"flow", flow_kind_name(o.flow_kind)},
               {"out_dir", out_dir}, {"sessions", rows}};
      *summary_json = dup_string(dump_json(out));
    }
  });
}

ft_status ft_analyze(const char* const* session_paths, size_t n, const char* options_json, char** report_json) {
  return guard([&] {
    need(report_json, "report_json");
    const AnalysisOptions o = analysis_from_json(parse_options(options_json));
    const auto data = read_sessions(session_paths, n);
    *report_json = dup_string(dump_json(run_pipeline(data, o)));
  });
}

ft_status ft_psd(const char* const* session_paths, size_t n, const char* options_json, const char* csv_dir,
                 char** summary_json) {
  return guard([&] {
    need(summary_json, "summary_json");
    AnalysisOptions o = analysis_from_json(parse_options(options_json));
    o.significance = false;
    const auto data = read_sessions(session_paths, n);
    const auto subjects = analyze_cohort(data, o);
    Json out = psd_summary(subjects);
    Json warnings = Json::array();
    for (const auto& s : subjects) {
      if (s.error) warnings.push_back(s.subject_id + ": " + *s.error);
      if (!s.included) warnings.push_back(s.subject_id + ": excluded by quality control");
      for (const auto& w : s.warnings)
        if (w.rfind("timescale", 0) == 0) warnings.push_back(s.subject_id + ": " + w);
    }
    out["warnings"] = warnings;
    if (csv_dir) {
      std::error_code ec;
      std::filesystem::create_directories(csv_dir, ec);
      if (ec) fail(ErrorCode::io, std::string("cannot create '") + csv_dir + "': " + ec.message());
      for (const auto& s : subjects) {
        if (!s.psd) continue;
        std::string text = "frequency_hz,power\n";
        char line[64];
        for (std::size_t k = 0; k < s.psd->frequency.size(); ++k) {
          std::snprintf(line, sizeof line, "%.9g,%.9g\n", s.psd->frequency[k], s.psd->density[k]);
          text += line;
        }
        write_text_atomic(std::filesystem::path(csv_dir) / (s.subject_id + "_psd.csv"), text);
      }
    }
    *summary_json = dup_string(dump_json(out));
  });
}

ft_status ft_series_timescale(const double* series, size_t n, double fs, double fraction, double* timescale) {
  return guard([&] {
    need(timescale, "timescale");
    if (n > 0) need(series, "series");
    std::vector<double> x(series, series + n);
    double m = 0;
    for (double v : x) m += v;
    if (n > 0) m /= static_cast<double>(n);
    for (double& v : x) v -= m;
    *timescale = power_timescale(welch_psd(x, fs), fraction);
  });
}

ft_status ft_server_new(const char* options_json, ft_server** out) {
  return guard([&] {
    need(out, "out");
    ServiceOptions o = service_from_json(parse_options(options_json));
    *out = new ft_server{std::make_unique<Service>(std::move(o))};
  });
}

unsigned short ft_server_port(const ft_server* s) { return s ? s->svc->port() : 0; }

ft_status ft_server_run(ft_server* s) {
  return guard([&] {
    need(s, "server");
    s->svc->run();
  });
}

void ft_server_stop(ft_server* s) {
  if (s) s->svc->stop();
}

void ft_server_free(ft_server* s) { delete s; }

}  // extern "C"
