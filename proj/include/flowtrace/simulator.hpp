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

// Synthetic subjects for the force-control task.
//
// A trial is a closed sampled loop. Every loop period the subject looks at
// the disk height H = k_H (F + w_M) + w_V, issues the command
// dF_C = k_F (H_0 - H) + w_C, and the hand realises the quantised step
// dF_M, so F <- max(0, F + dF_M + w_F). Between updates the force is held.
// Flow enters only through the loop period and the quantisation step.
//
// Noise standard deviations are quoted at reference_period. The look/command
// noises (w_C, w_M, w_V) grow linearly with the loop period and the output
// noise w_F with its 3/2 power, i.e. a force-rate random walk integrated over
// the hold. With period-independent noise a faster loop is *less* likely to
// hold the band for 0.5 s, which contradicts the observed in-flow advantage.

#ifndef FLOWTRACE_SIMULATOR_HPP_
#define FLOWTRACE_SIMULATOR_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "flowtrace/session.hpp"
#include "flowtrace/task_core.hpp"

namespace flowtrace {

struct LoopParams {
  double period;  // ΔT, s
  double step;    // δF, N
};

struct SimParams {
  double force_gain = 1.0;  // k_F; the height gain is 1/k_F
  // Calibrated by tools/calibrate_sim (see README).
  double sigma_force = 0.0200;       // w_F
  double sigma_command = 0.0250;     // w_C
  double sigma_measurement = 0.0002; // w_M
  double sigma_visual = 0.0175;      // w_V
  double reference_period = 0.15;
  double command_noise_exponent = 1.0;
  double force_noise_exponent = 1.5;
  LoopParams inflow{0.15, 0.015};   // intensity 7
  LoopParams outflow{0.30, 0.030};  // intensity 1
  double dt = 0.001;                // rendered trace sample period

  void validate() const;
};

// Linear interpolation between the out-flow (I = 1) and in-flow (I = 7)
// anchors.
LoopParams flow_to_loop_params(const SimParams& params, double intensity);

// Quantised motor step: commands larger than `step` are truncated toward zero
// to a multiple of it; smaller non-zero commands move one step in their own
// direction.
double quantize_command(double command, double step);

ForceTrace simulate_trial(const SimParams& params, LoopParams loop, const TrialConfig& config,
                          std::uint64_t seed);

enum class FlowKind { ou, sinusoid_mixture };

std::string flow_kind_name(FlowKind kind);
FlowKind flow_kind_from_name(const std::string& name);

struct SinusoidComponent {
  double period_s;
  double amplitude;
};

struct FlowProcessParams {
  double mean = 4.0;
  // Ornstein-Uhlenbeck
  double relaxation_trials = 40.0;
  double stationary_sd = 1.3;
  // Sinusoid mixture, sampled every trial_period_s
  double trial_period_s = 3.0;
  std::vector<SinusoidComponent> components{{20.0, 1.6}};
  double noise_sd = 0.25;
};

struct FlowProcess {
  FlowKind kind = FlowKind::ou;
  FlowProcessParams params;
  std::uint64_t seed = 0;
  std::vector<double> intensity;  // per trial, clamped to [1, 7]
};

FlowProcess gen_flow_process(FlowKind kind, int n_trials, std::uint64_t seed,
                             const FlowProcessParams& params = {});

// Three Likert answers around a true intensity; clamp(round(I + noise), 1, 7).
std::array<int, 3> synth_responses(double intensity, double noise_sd, std::uint64_t seed);

// Main sessions for a synthetic subject; trial k uses flow_to_loop_params(I_k).
SessionData simulate_subject(const SimParams& params, const TrialConfig& config,
                             const ProbeSchedule& schedule, const FlowProcess& flow,
                             double report_noise_sd, std::uint64_t seed);

// Skill measurement against the simulator at a fixed intensity. Runs
// min_trials trials, then keeps going until `transitions` reversals are
// recorded or max_trials is reached.
Staircase simulate_staircase(const SimParams& params, const TrialConfig& config,
                             StaircaseParams staircase, double intensity, int min_trials,
                             int max_trials, std::size_t transitions, std::uint64_t seed);

}  // namespace flowtrace

#endif  // FLOWTRACE_SIMULATOR_HPP_
