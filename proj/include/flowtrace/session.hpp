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

#ifndef FLOWTRACE_SESSION_HPP_
#define FLOWTRACE_SESSION_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flowtrace/task_core.hpp"

namespace flowtrace {

// One self-report: three 7-point answers (two fluency items, one absorption
// item) given after trial `trial_index`.
struct FlowProbe {
  int probe_index = 0;  // 1-based, in firing order
  int trial_index = 0;  // 1-based over the concatenated main sessions
  std::array<int, 3> responses{};
  double intensity = 0;  // mean of responses

  static FlowProbe from_responses(int probe_index, int trial_index, std::array<int, 3> r);
  bool operator==(const FlowProbe&) const = default;
};

inline const std::array<const char*, 3> kProbeQuestions = {
    "My thoughts/activities run fluidly and smoothly.",
    "I have no difficulty concentrating.",
    "I do not notice time passing.",
};

struct StaircaseRecord {
  StaircaseParams params;
  std::vector<StaircaseEntry> history;
  std::optional<double> measured_skill;
};

struct Provenance {
  std::uint64_t seed = 0;
  std::string tool_version;
  std::string source;  // "simulated" or "live"
};

struct SessionData {
  std::string subject_id;
  TrialConfig config;            // main-session configuration (fixed band)
  int sessions = 3;
  int trials_per_session = 100;
  StaircaseRecord staircase;
  std::vector<TrialRecord> trials;  // main-session trials, in order
  std::vector<FlowProbe> probes;
  std::vector<double> ground_truth_flow;  // simulated subjects only
  Provenance provenance;

  // Throws invalid_input when probes reference missing trials.
  void validate() const;
};

}  // namespace flowtrace

#endif  // FLOWTRACE_SESSION_HPP_
