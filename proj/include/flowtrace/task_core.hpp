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

// Force-control trial mechanics: trial evaluation (batch and streaming), the
// adaptive staircase used to measure force-control skill, and flow-probe
// scheduling.

#ifndef FLOWTRACE_TASK_CORE_HPP_
#define FLOWTRACE_TASK_CORE_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace flowtrace {

// Tolerance used for all time and band comparisons on sampled traces.
inline constexpr double kTimeEps = 1e-9;

struct TrialConfig {
  double target_force = 1.0;     // N
  double band_width = 0.055;     // N, full width of the target band
  double trial_duration = 3.0;   // s
  double hold_duration = 0.5;    // s
  double rest_duration = 2.0;    // s
  double press_threshold = 0.01; // N

  // Throws invalid_input when an invariant is violated.
  void validate() const;

  // |F - target| <= band_width / 2.
  bool in_band(double force) const;
};

// Traces are persisted with 9 significant digits. Producers round through
// this so that a write/read cycle is exact.
double round_sig9(double x);

struct ForceTrace {
  double dt = 0.001;
  std::vector<double> samples;

  double duration() const { return dt * static_cast<double>(samples.size()); }
  // Time stamp of sample i.
  double time_of(std::size_t i) const { return dt * static_cast<double>(i); }
};

struct TrialRecord {
  TrialConfig config;
  ForceTrace trace;
  bool evaluated = false;
  bool success = false;
  std::optional<double> press_onset;
  std::optional<double> band_entry;
  std::optional<double> success_latch;
};

// Evaluates one trial. Success means some contiguous in-band run lasting at
// least hold_duration. Throws invalid_input on an empty or over-long trace and
// premature_press when the first sample is already above press_threshold.
TrialRecord evaluate_trial(const ForceTrace& trace, const TrialConfig& config);

enum class TrialEventKind { trial_started, success_latched, trial_ended };

struct TrialEvent {
  TrialEventKind kind;
  double time;          // trial-relative seconds
  bool success = false; // meaningful for trial_ended
};

// Streaming form of evaluate_trial. Each push() is the next sample of the
// trial's uniformly sampled trace; `t` is the trial-relative time stamp of
// the sample. A sample with t >= trial_duration closes the trial without
// being recorded. record() after the trial ends equals evaluate_trial() on
// the accumulated trace.
class TrialStream {
 public:
  TrialStream(TrialConfig config, double dt);

  std::optional<TrialEvent> push(double t, double force);
  // Closes the trial explicitly (e.g. the caller ran out of samples).
  std::optional<TrialEvent> finish();

  bool started() const { return count_ > 0; }
  bool ended() const { return ended_; }
  std::size_t sample_count() const { return count_; }
  const TrialRecord& record() const { return record_; }

 private:
  TrialRecord record_;
  std::size_t count_ = 0;
  std::size_t hold_samples_;
  std::size_t run_ = 0;
  double last_t_ = 0.0;
  bool ended_ = false;
};

struct StaircaseParams {
  double k1 = 0.5;            // N * trials
  double k2 = 0.05;           // N * s
  double initial_band = 0.2;  // N
};

struct StaircaseEntry {
  double band;
  bool success;
  double completing_time;  // censored to trial_duration on failure
};

// Step magnitude after trial i: min{k1/i, k2/t_com, band/2}.
double staircase_step_size(const StaircaseParams& params, int trial_index, double completing_time,
                           double band);

// Adaptive difficulty procedure. The step is subtracted from the band on
// success and added on failure.
class Staircase {
 public:
  explicit Staircase(StaircaseParams params = {});

  // Advances with an evaluated trial and returns the next band width. Failed
  // trials use trial_duration as their completing time.
  double step(const TrialRecord& outcome);
  double step(bool success, double completing_time);

  int trial_index() const { return static_cast<int>(history_.size()) + 1; }
  double current_band() const { return band_; }
  const StaircaseParams& params() const { return params_; }
  const std::vector<StaircaseEntry>& history() const { return history_; }
  // 1-based trial indices at which the band sequence reversed direction.
  const std::vector<int>& transition_points() const { return transitions_; }

  // Mean band over the last `count` transition points.
  double measured_skill(std::size_t count = 10) const;

  // Rebuilds a staircase by replaying a recorded history.
  static Staircase replay(StaircaseParams params,
                          const std::vector<StaircaseEntry>& history);

 private:
  StaircaseParams params_;
  double band_;
  std::vector<StaircaseEntry> history_;
  std::vector<double> bands_;  // band_1 .. band_{i+1}
  std::vector<int> transitions_;
};

struct ProbeSchedule {
  int trials_per_session = 0;
  // Per session, ascending 1-based trial indices after which a probe fires.
  std::vector<std::vector<int>> sessions;

  std::size_t total() const;
  // Probe trial indices counted over the concatenated sessions (1-based).
  std::vector<int> global_indices() const;
};

// Places probes uniformly at random subject to: the first probe of a session
// comes after at least min_gap trials and adjacent probes are at least
// min_gap trials apart. Deterministic per seed.
ProbeSchedule schedule_probes(int sessions, int trials_per_session,
                              int probes_per_session, int min_gap,
                              std::uint64_t seed);

}  // namespace flowtrace

#endif  // FLOWTRACE_TASK_CORE_HPP_
