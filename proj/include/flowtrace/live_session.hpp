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


// Protocol state of one live participant: practice, skill measurement with the
// staircase, the main sessions with probes, and incremental decoding. Pure
// state; the server owns threading, sockets and persistence.

#ifndef FLOWTRACE_LIVE_SESSION_HPP_
#define FLOWTRACE_LIVE_SESSION_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flowtrace/dataio.hpp"
#include "flowtrace/decoder.hpp"
#include "flowtrace/session.hpp"

namespace flowtrace {

struct LiveOptions {
  TrialConfig config;  // band_width is the staircase output, not an input
  StaircaseParams staircase;
  int skill_trials = 50;
  int skill_max_trials = 150;
  int skill_transitions = 10;
  int sessions = 3;
  int trials_per_session = 100;
  int probes_per_session = 4;
  int min_gap = 12;
  double session_rest_s = 180.0;  // between main sessions, client clock
  double sample_dt = 0.001;       // metric grid
  int decoder_min_probes = 5;
  int window = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

Json live_options_to_json(const LiveOptions& o);
// Applies the keys present in `overrides` on top of `base`; unknown keys and
// wrong types are invalid_input.
LiveOptions live_options_from_json(const Json& overrides, LiveOptions base = {});

enum class Phase { practice, skill_measurement, main, rest, done };

class LiveSession {
 public:
  LiveSession(std::string id, LiveOptions options);

  const std::string& id() const { return id_; }
  const LiveOptions& options() const { return options_; }
  std::string phase_name() const;
  Phase phase() const { return phase_; }
  bool finalized() const { return finalized_; }
  bool done() const { return phase_ == Phase::done; }
  const SessionData& data() const { return data_; }
  const std::optional<DecoderModel>& model() const { return model_; }

  // Each call returns the server messages it produced, in order. Protocol and
  // validation problems throw Error and leave the state unchanged.
  std::vector<Json> ready();
  std::vector<Json> ingest_sample(double t, double force);
  std::vector<Json> answer_probe(std::array<int, 3> responses);
  std::vector<Json> finalize();

  // Incremental decoding. A job snapshots the answered probes; results are
  // installed only if no newer job has been installed already.
  struct RefitJob {
    std::uint64_t generation = 0;
    std::vector<double> intensity;
    std::vector<MetricsVector> metrics;
  };
  std::optional<RefitJob> take_refit_job();
  std::vector<Json> install_model(std::uint64_t generation, DecoderModel model);
  // The batch subset search the pipeline uses, on a job's rows.
  static DecoderModel run_refit(const RefitJob& job);

  // Set whenever the persisted form changed since the last call.
  bool take_dirty();

  Json summary() const;
  Json live_state() const;
  static LiveSession restore(std::string id, const SessionData& data, const Json& live_state);

 private:
  void start_trial(double t, double force, std::vector<Json>& out);
  void feed(double rel, double force, std::vector<Json>& out);
  void end_trial(std::vector<Json>& out);
  void enter_phase(Phase p, std::vector<Json>& out);
  void advance_session(std::vector<Json>& out);
  void notice(const char* message, std::vector<Json>& out);
  int main_index() const { return static_cast<int>(data_.trials.size()); }
  std::optional<Json> flow_update(int trial_index) const;
  Json phase_change() const;

  std::string id_;
  LiveOptions options_;
  ProbeSchedule schedule_;
  std::vector<int> probe_at_;  // global trial indices
  SessionData data_;
  Staircase staircase_;
  Phase phase_ = Phase::practice;
  int current_session_ = 1;
  bool finalized_ = false;
  bool dirty_ = true;

  // Client clock.
  std::optional<double> last_t_;
  std::optional<double> rest_until_;
  bool notified_ = false;  // one "ignored" notice per idle stretch

  // Current trial.
  std::optional<TrialStream> stream_;
  double trial_t0_ = 0;
  double prev_rel_ = 0;
  double prev_force_ = 0;
  std::size_t next_grid_ = 0;
  std::size_t grid_limit_ = 0;

  bool probe_pending_ = false;
  std::optional<DecoderModel> model_;
  std::uint64_t requested_generation_ = 0;
  std::uint64_t issued_generation_ = 0;
  std::uint64_t installed_generation_ = 0;
};

}  // namespace flowtrace

#endif  // FLOWTRACE_LIVE_SESSION_HPP_
