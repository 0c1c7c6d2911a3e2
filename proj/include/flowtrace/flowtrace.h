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


/* C interface to libflowtrace. Every function returns an ft_status; on
 * failure ft_last_error() holds a message for the calling thread. Strings
 * handed out by the library are released with ft_string_free. Options are
 * passed as JSON objects whose keys mirror the session configuration field
 * names; unknown keys are rejected. */

#ifndef FLOWTRACE_FLOWTRACE_H_
#define FLOWTRACE_FLOWTRACE_H_

#include <stddef.h>

#if defined(_WIN32)
#define FT_API __declspec(dllexport)
#else
#define FT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ft_status {
  FT_OK = 0,
  FT_ERR_INVALID_INPUT = 1,
  FT_ERR_PREMATURE_PRESS = 2,
  FT_ERR_PROTOCOL = 3,
  FT_ERR_INSUFFICIENT_DATA = 4,
  FT_ERR_DEGENERATE = 5,
  FT_ERR_PARSE = 6,
  FT_ERR_FORMAT = 7,
  FT_ERR_VERSION_MISMATCH = 8,
  FT_ERR_MISSING_FILE = 9,
  FT_ERR_IO = 10,
  FT_ERR_NOT_FOUND = 11,
  FT_ERR_CONFLICT = 12,
  FT_ERR_UNDEFINED = 13,
  FT_ERR_VALIDATION = 14,
  FT_ERR_INTERNAL = 99
} ft_status;

FT_API const char* ft_version(void);
FT_API const char* ft_status_name(ft_status status);
/* Message of the last failed call on this thread; "" if none. */
FT_API const char* ft_last_error(void);
FT_API void ft_string_free(char* s);

/* ---- trials ---------------------------------------------------------- */

typedef struct ft_trial_config {
  double target_force;
  double band_width;
  double trial_duration;
  double hold_duration;
  double rest_duration;
  double press_threshold;
} ft_trial_config;

FT_API void ft_trial_config_default(ft_trial_config* config);

/* Absent times are NaN. */
typedef struct ft_trial_result {
  int success;
  double press_onset;
  double band_entry;
  double success_latch;
} ft_trial_result;

#define FT_METRIC_COUNT 8

FT_API const char* ft_metric_name(int index);

FT_API ft_status ft_evaluate_trial(const ft_trial_config* config, const double* samples, size_t n,
                                   double dt, ft_trial_result* out);
/* Per-trial metrics in ft_metric_name order; the success rate is the
 * trial's own outcome. */
FT_API ft_status ft_trial_metrics(const ft_trial_config* config, const double* samples, size_t n,
                                  double dt, double out[FT_METRIC_COUNT]);

/* Reads a "t_s,force_n" CSV. Free *samples with ft_samples_free. */
FT_API ft_status ft_trace_read(const char* path, double** samples, size_t* n, double* dt);
FT_API void ft_samples_free(double* samples);

/* Evaluates a trace file; config_json overrides trial fields. */
FT_API ft_status ft_trace_metrics(const char* path, const char* config_json, char** result_json);

/* ---- staircase ------------------------------------------------------- */

typedef struct ft_staircase ft_staircase;

FT_API ft_status ft_staircase_new(double k1, double k2, double initial_band, ft_staircase** out);
FT_API void ft_staircase_free(ft_staircase* s);
FT_API ft_status ft_staircase_step(ft_staircase* s, int success, double completing_time,
                                   double* next_band);
FT_API double ft_staircase_band(const ft_staircase* s);
FT_API size_t ft_staircase_transitions(const ft_staircase* s);
FT_API ft_status ft_staircase_measured_skill(const ft_staircase* s, size_t count, double* out);

/* Skill measurement against the simulator. */
FT_API ft_status ft_staircase_simulate(const char* options_json, char** result_json);

/* ---- sessions -------------------------------------------------------- */

typedef struct ft_session ft_session;

FT_API ft_status ft_session_read(const char* path, ft_session** out);
/* referenced_traces != 0 writes traces as CSV files next to the session. */
FT_API ft_status ft_session_write(const ft_session* s, const char* path, int referenced_traces);
FT_API ft_status ft_session_summary(const ft_session* s, char** json);
FT_API void ft_session_free(ft_session* s);

/* Subject `index` (0-based) of a synthetic cohort. */
FT_API ft_status ft_session_simulate(const char* cohort_json, int index, ft_session** out);

/* Writes S01.json ... into out_dir using `jobs` threads. */
FT_API ft_status ft_simulate_cohort(const char* cohort_json, const char* out_dir,
                                    int referenced_traces, int jobs, char** summary_json);

/* ---- analysis -------------------------------------------------------- */

/* Full decoding report over the given session files, in order. */
FT_API ft_status ft_analyze(const char* const* session_paths, size_t n, const char* options_json,
                            char** report_json);
/* Decoded-flow PSD summary; when csv_dir is not NULL a frequency/power CSV
 * per subject is written there. */
FT_API ft_status ft_psd(const char* const* session_paths, size_t n, const char* options_json,
                        const char* csv_dir, char** summary_json);
/* Welch PSD and power timescale of a plain series. */
FT_API ft_status ft_series_timescale(const double* series, size_t n, double fs, double fraction,
                                     double* timescale);

/* ---- service --------------------------------------------------------- */

typedef struct ft_server ft_server;

/* Binds the port and resumes persisted sessions. */
FT_API ft_status ft_server_new(const char* options_json, ft_server** out);
FT_API unsigned short ft_server_port(const ft_server* s);
/* Blocks until ft_server_stop or SIGINT/SIGTERM; sessions are flushed. */
FT_API ft_status ft_server_run(ft_server* s);
FT_API void ft_server_stop(ft_server* s);
FT_API void ft_server_free(ft_server* s);

#ifdef __cplusplus
}
#endif

#endif /* FLOWTRACE_FLOWTRACE_H_ */
