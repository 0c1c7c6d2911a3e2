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

#include "flowtrace/task_core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <string>

#include "flowtrace/error.hpp"
#include "flowtrace/rng.hpp"

namespace flowtrace {

namespace {

std::size_t samples_for(double duration, double dt) {
  return static_cast<std::size_t>(std::ceil(duration / dt - 1e-6));
}

void check_sample(double force, std::size_t index) {
  if (!(std::isfinite(force) && force >= 0.0))
    fail(ErrorCode::invalid_input,
         "force sample " + std::to_string(index) + " is negative or not finite");
}

}  // namespace

double round_sig9(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return std::strtod(buf, nullptr);
}

void TrialConfig::validate() const {
  require(trial_duration > 0 && hold_duration > 0 && rest_duration > 0,
          ErrorCode::invalid_input, "trial durations must be positive");
  require(hold_duration <= trial_duration, ErrorCode::invalid_input,
          "hold_duration exceeds trial_duration");
  require(band_width > 0, ErrorCode::invalid_input, "band_width must be positive");
  require(press_threshold < target_force, ErrorCode::invalid_input,
          "press_threshold must be below target_force");
}

bool TrialConfig::in_band(double force) const {
  return std::abs(force - target_force) <= band_width / 2 + 1e-12;
}

TrialRecord evaluate_trial(const ForceTrace& trace, const TrialConfig& config) {
  config.validate();
  require(trace.dt > 0, ErrorCode::invalid_input, "trace dt must be positive");
  require(!trace.samples.empty(), ErrorCode::invalid_input, "empty force trace");
  require(trace.duration() <= config.trial_duration + kTimeEps, ErrorCode::invalid_input,
          "trace is longer than the trial");
  for (std::size_t i = 0; i < trace.samples.size(); ++i) check_sample(trace.samples[i], i);
  require(trace.samples.front() <= config.press_threshold, ErrorCode::premature_press,
          "force above press threshold at trial onset");

  TrialRecord rec;
  rec.config = config;
  rec.trace = trace;
  rec.evaluated = true;

  const auto& f = trace.samples;
  const std::size_t n = f.size();
  const std::size_t hold = samples_for(config.hold_duration, trace.dt);

  std::size_t onset = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (f[i] > config.press_threshold) {
      onset = i;
      break;
    }
  }
  if (onset == n) return rec;
  rec.press_onset = trace.time_of(onset);

  for (std::size_t i = onset; i < n; ++i) {
    if (config.in_band(f[i])) {
      rec.band_entry = trace.time_of(i);
      break;
    }
  }

  // Longest-prefix scan for the first run reaching `hold` samples.
  std::size_t i = 0;
  while (i < n) {
    if (!config.in_band(f[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && config.in_band(f[j])) ++j;
    if (j - i >= hold) {
      rec.success = true;
      rec.success_latch = trace.time_of(i + hold);
      break;
    }
    i = j;
  }
  return rec;
}

TrialStream::TrialStream(TrialConfig config, double dt) {
  config.validate();
  require(dt > 0, ErrorCode::invalid_input, "trace dt must be positive");
  record_.config = config;
  record_.trace.dt = dt;
  hold_samples_ = samples_for(config.hold_duration, dt);
}

std::optional<TrialEvent> TrialStream::push(double t, double force) {
  require(!ended_, ErrorCode::protocol, "sample after trial end");
  require(count_ == 0 || t >= last_t_, ErrorCode::protocol, "sample timestamp went backwards");
  last_t_ = t;
  const TrialConfig& cfg = record_.config;
  if (t >= cfg.trial_duration - kTimeEps) return finish();

  check_sample(force, count_);
  if (count_ == 0) {
    require(force <= cfg.press_threshold, ErrorCode::premature_press,
            "force above press threshold at trial onset");
  }
  require(static_cast<double>(count_ + 1) * record_.trace.dt <= cfg.trial_duration + kTimeEps,
          ErrorCode::invalid_input, "trace is longer than the trial");

  const std::size_t i = count_++;
  record_.trace.samples.push_back(force);
  const double ti = record_.trace.time_of(i);
  const bool inside = cfg.in_band(force);

  if (!record_.press_onset && force > cfg.press_threshold) record_.press_onset = ti;
  if (record_.press_onset && !record_.band_entry && inside) record_.band_entry = ti;

  run_ = inside ? run_ + 1 : 0;
  if (!record_.success && run_ >= hold_samples_) {
    record_.success = true;
    record_.success_latch = record_.trace.time_of(i + 1);
    return TrialEvent{TrialEventKind::success_latched, *record_.success_latch, true};
  }
  if (i == 0) return TrialEvent{TrialEventKind::trial_started, 0.0, false};
  return std::nullopt;
}

std::optional<TrialEvent> TrialStream::finish() {
  if (ended_) return std::nullopt;
  require(count_ > 0, ErrorCode::invalid_input, "empty force trace");
  ended_ = true;
  record_.evaluated = true;
  return TrialEvent{TrialEventKind::trial_ended, record_.trace.duration(), record_.success};
}

Staircase::Staircase(StaircaseParams params) : params_(params), band_(params.initial_band) {
  require(params.k1 > 0 && params.k2 > 0 && params.initial_band > 0, ErrorCode::invalid_input,
          "staircase coefficients and initial band must be positive");
  bands_.push_back(band_);
}

double Staircase::step(const TrialRecord& outcome) {
  require(outcome.evaluated, ErrorCode::invalid_input, "trial record was not evaluated");
  const double t_com =
      outcome.success ? *outcome.success_latch : outcome.config.trial_duration;
  return step(outcome.success, t_com);
}

double staircase_step_size(const StaircaseParams& params, int trial_index, double completing_time,
                           double band) {
  return std::min({params.k1 / trial_index, params.k2 / completing_time, 0.5 * band});
}

double Staircase::step(bool success, double completing_time) {
  require(band_ > 0, ErrorCode::invalid_input, "staircase band is not positive");
  require(completing_time > 0 && std::isfinite(completing_time), ErrorCode::invalid_input,
          "completing time must be positive");
  const int i = trial_index();
  const double magnitude = staircase_step_size(params_, i, completing_time, band_);
  history_.push_back({band_, success, completing_time});
  band_ = success ? band_ - magnitude : band_ + magnitude;
  bands_.push_back(band_);

  const std::size_t m = bands_.size();
  if (m >= 3) {
    const double prev = bands_[m - 2] - bands_[m - 3];
    const double next = bands_[m - 1] - bands_[m - 2];
    if ((prev > 0) != (next > 0)) transitions_.push_back(i);
  }
  return band_;
}

double Staircase::measured_skill(std::size_t count) const {
  require(count > 0 && transitions_.size() >= count, ErrorCode::insufficient_data,
          "need " + std::to_string(count) + " transition points, have " +
              std::to_string(transitions_.size()));
  double sum = 0.0;
  for (auto it = transitions_.end() - static_cast<std::ptrdiff_t>(count); it != transitions_.end();
       ++it) {
    sum += history_[static_cast<std::size_t>(*it - 1)].band;
  }
  return sum / static_cast<double>(count);
}

Staircase Staircase::replay(StaircaseParams params, const std::vector<StaircaseEntry>& history) {
  Staircase s(params);
  for (const auto& e : history) s.step(e.success, e.completing_time);
  return s;
}

std::size_t ProbeSchedule::total() const {
  std::size_t n = 0;
  for (const auto& s : sessions) n += s.size();
  return n;
}

std::vector<int> ProbeSchedule::global_indices() const {
  std::vector<int> out;
  for (std::size_t s = 0; s < sessions.size(); ++s)
    for (int idx : sessions[s]) out.push_back(static_cast<int>(s) * trials_per_session + idx);
  return out;
}

ProbeSchedule schedule_probes(int sessions, int trials_per_session, int probes_per_session,
                              int min_gap, std::uint64_t seed) {
  require(sessions >= 1 && trials_per_session >= 1 && probes_per_session >= 1 && min_gap >= 1,
          ErrorCode::invalid_input, "probe schedule counts must be positive");
  require(static_cast<long>(probes_per_session) * min_gap <= trials_per_session,
          ErrorCode::invalid_input,
          "infeasible probe schedule: " + std::to_string(probes_per_session) + " probes x gap " +
              std::to_string(min_gap) + " exceeds " + std::to_string(trials_per_session) +
              " trials");

  // Uniform over all admissible placements: pick a sorted n-subset of
  // {0..slack+n-1} and spread it out by the gap.
  const int slack = trials_per_session - probes_per_session * min_gap;
  std::vector<int> pool(static_cast<std::size_t>(slack + probes_per_session));
  std::iota(pool.begin(), pool.end(), 0);

  ProbeSchedule out;
  out.trials_per_session = trials_per_session;
  for (int s = 0; s < sessions; ++s) {
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(s)});
    std::vector<int> picked;
    std::sample(pool.begin(), pool.end(), std::back_inserter(picked), probes_per_session, rng);
    for (int j = 0; j < probes_per_session; ++j) {
      auto& v = picked[static_cast<std::size_t>(j)];
      v = v - j + (j + 1) * min_gap;
    }
    out.sessions.push_back(std::move(picked));
  }
  return out;
}

}  // namespace flowtrace
