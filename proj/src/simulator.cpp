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


#include "flowtrace/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "flowtrace/error.hpp"
#include "flowtrace/rng.hpp"

namespace flowtrace {

namespace {

// Stream tags for derive_seed / make_rng.
constexpr std::uint64_t kTagTrial = 1;
constexpr std::uint64_t kTagProbe = 2;
constexpr std::uint64_t kTagFlow = 3;
constexpr std::uint64_t kTagPhase = 4;

double clamp_intensity(double x) { return std::clamp(x, 1.0, 7.0); }

}  // namespace

void SimParams::validate() const {
  require(force_gain > 0, ErrorCode::invalid_input, "force_gain must be positive");
  require(sigma_force >= 0 && sigma_command >= 0 && sigma_measurement >= 0 && sigma_visual >= 0,
          ErrorCode::invalid_input, "noise sigmas must be non-negative");
  require(reference_period > 0, ErrorCode::invalid_input, "reference_period must be positive");
  require(inflow.period > 0 && inflow.step > 0 && outflow.period > 0 && outflow.step > 0,
          ErrorCode::invalid_input, "loop anchors must be positive");
  require(dt > 0, ErrorCode::invalid_input, "dt must be positive");
  require(inflow.period >= dt - kTimeEps && outflow.period >= dt - kTimeEps,
          ErrorCode::invalid_input, "loop period shorter than the trace sample period");
}

LoopParams flow_to_loop_params(const SimParams& params, double intensity) {
  require(std::isfinite(intensity) && intensity >= 1.0 && intensity <= 7.0,
          ErrorCode::invalid_input, "flow intensity outside [1, 7]");
  const double a = (intensity - 1.0) / 6.0;
  return {params.outflow.period + a * (params.inflow.period - params.outflow.period),
          params.outflow.step + a * (params.inflow.step - params.outflow.step)};
}

double quantize_command(double command, double step) {
  if (std::abs(command) > step) return std::trunc(command / step) * step;
  if (command > 0) return step;
  if (command < 0) return -step;
  return 0.0;
}

ForceTrace simulate_trial(const SimParams& params, LoopParams loop, const TrialConfig& config,
                          std::uint64_t seed) {
  params.validate();
  config.validate();
  require(loop.period > 0 && loop.step > 0, ErrorCode::invalid_input,
          "loop period and step must be positive");
  require(loop.period >= params.dt - kTimeEps, ErrorCode::invalid_input,
          "loop period shorter than the trace sample period");

  const double dt = params.dt;
  const auto n = static_cast<std::size_t>(std::ceil(config.trial_duration / dt - 1e-6));
  const double k_f = params.force_gain;
  const double k_h = 1.0 / k_f;
  const double h0 = k_h * config.target_force;

  const double rel = loop.period / params.reference_period;
  const double cmd_scale = std::pow(rel, params.command_noise_exponent);
  const double force_scale = std::pow(rel, params.force_noise_exponent);
  const double s_m = params.sigma_measurement * cmd_scale;
  const double s_v = params.sigma_visual * cmd_scale;
  const double s_c = params.sigma_command * cmd_scale;
  const double s_f = params.sigma_force * force_scale;

  Rng rng = make_rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);

  ForceTrace trace;
  trace.dt = dt;
  trace.samples.assign(n, 0.0);
  double force = 0.0;
  std::size_t filled = 0;
  for (int m = 1;; ++m) {
    const double t = m * loop.period;
    const auto at = static_cast<std::size_t>(std::ceil(t / dt - 1e-6));
    if (at >= n) break;
    for (; filled < at; ++filled) trace.samples[filled] = force;

    const double w_m = s_m * z(rng);
    const double w_v = s_v * z(rng);
    const double w_c = s_c * z(rng);
    const double w_f = s_f * z(rng);
    const double height = k_h * (force + w_m) + w_v;
    const double command = k_f * (h0 - height) + w_c;
    force = round_sig9(std::max(0.0, force + quantize_command(command, loop.step) + w_f));
  }
  for (; filled < n; ++filled) trace.samples[filled] = force;
  return trace;
}

std::string flow_kind_name(FlowKind kind) {
  return kind == FlowKind::ou ? "ou" : "sinusoid_mixture";
}

FlowKind flow_kind_from_name(const std::string& name) {
  if (name == "ou") return FlowKind::ou;
  if (name == "sinusoid_mixture" || name == "sinusoid-mixture") return FlowKind::sinusoid_mixture;
  fail(ErrorCode::invalid_input, "unknown flow process kind '" + name + "'");
}

FlowProcess gen_flow_process(FlowKind kind, int n_trials, std::uint64_t seed,
                             const FlowProcessParams& params) {
  require(n_trials >= 1, ErrorCode::invalid_input, "flow process needs at least one trial");
  FlowProcess out;
  out.kind = kind;
  out.params = params;
  out.seed = seed;
  out.intensity.reserve(static_cast<std::size_t>(n_trials));
  Rng rng = make_rng(seed, {kTagFlow});
  std::normal_distribution<double> z(0.0, 1.0);

  if (kind == FlowKind::ou) {
    require(params.relaxation_trials > 0 && params.stationary_sd >= 0, ErrorCode::invalid_input,
            "OU relaxation must be positive and sd non-negative");
    const double a = std::exp(-1.0 / params.relaxation_trials);
    const double innov = params.stationary_sd * std::sqrt(1.0 - a * a);
    double x = params.mean + params.stationary_sd * z(rng);
    for (int k = 0; k < n_trials; ++k) {
      out.intensity.push_back(clamp_intensity(x));
      x = params.mean + a * (x - params.mean) + innov * z(rng);
    }
    return out;
  }

  require(params.trial_period_s > 0 && params.noise_sd >= 0, ErrorCode::invalid_input,
          "sinusoid mixture needs a positive trial period");
  Rng phase_rng = make_rng(seed, {kTagPhase});
  std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
  std::vector<double> phase;
  for (const auto& c : params.components) {
    require(c.period_s > 0, ErrorCode::invalid_input, "sinusoid period must be positive");
    phase.push_back(u(phase_rng));
  }
  for (int k = 0; k < n_trials; ++k) {
    const double t = k * params.trial_period_s;
    double x = params.mean;
    for (std::size_t c = 0; c < phase.size(); ++c) {
      const auto& comp = params.components[c];
      x += comp.amplitude * std::sin(2.0 * std::numbers::pi * t / comp.period_s + phase[c]);
    }
    x += params.noise_sd * z(rng);
    out.intensity.push_back(clamp_intensity(x));
  }
  return out;
}

std::array<int, 3> synth_responses(double intensity, double noise_sd, std::uint64_t seed) {
  require(noise_sd >= 0, ErrorCode::invalid_input, "report noise must be non-negative");
  Rng rng = make_rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::array<int, 3> r{};
  for (int& v : r) {
    const double x = intensity + noise_sd * z(rng);
    v = static_cast<int>(std::clamp<long>(std::lround(x), 1, 7));
  }
  return r;
}

SessionData simulate_subject(const SimParams& params, const TrialConfig& config,
                             const ProbeSchedule& schedule, const FlowProcess& flow,
                             double report_noise_sd, std::uint64_t seed) {
  const int sessions = static_cast<int>(schedule.sessions.size());
  require(sessions >= 1 && schedule.trials_per_session >= 1, ErrorCode::invalid_input,
          "empty probe schedule");
  const std::size_t total = static_cast<std::size_t>(sessions) *
                            static_cast<std::size_t>(schedule.trials_per_session);
  require(flow.intensity.size() >= total, ErrorCode::invalid_input,
          "flow process shorter than the session");
  for (const auto& s : schedule.sessions)
    for (int idx : s)
      require(idx >= 1 && idx <= schedule.trials_per_session, ErrorCode::invalid_input,
              "probe index " + std::to_string(idx) + " outside the session");

  SessionData out;
  out.config = config;
  out.sessions = sessions;
  out.trials_per_session = schedule.trials_per_session;
  out.provenance.seed = seed;
  out.provenance.source = "simulated";
  out.ground_truth_flow.assign(flow.intensity.begin(),
                               flow.intensity.begin() + static_cast<std::ptrdiff_t>(total));
  out.trials.reserve(total);
  for (std::size_t k = 0; k < total; ++k) {
    const LoopParams loop = flow_to_loop_params(params, flow.intensity[k]);
    ForceTrace tr = simulate_trial(params, loop, config, derive_seed(seed, {kTagTrial, k}));
    out.trials.push_back(evaluate_trial(tr, config));
  }
  const auto idx = schedule.global_indices();
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const double truth = flow.intensity[static_cast<std::size_t>(idx[j] - 1)];
    const auto r = synth_responses(truth, report_noise_sd, derive_seed(seed, {kTagProbe, j}));
    out.probes.push_back(FlowProbe::from_responses(static_cast<int>(j) + 1, idx[j], r));
  }
  return out;
}

Staircase simulate_staircase(const SimParams& params, const TrialConfig& config,
                             StaircaseParams staircase, double intensity, int min_trials,
                             int max_trials, std::size_t transitions, std::uint64_t seed) {
  require(min_trials >= 1 && max_trials >= min_trials, ErrorCode::invalid_input,
          "staircase trial limits are inconsistent");
  const LoopParams loop = flow_to_loop_params(params, intensity);
  Staircase sc(staircase);
  TrialConfig cfg = config;
  for (int i = 0; i < max_trials; ++i) {
    if (i >= min_trials && sc.transition_points().size() >= transitions) break;
    cfg.band_width = sc.current_band();
    ForceTrace tr = simulate_trial(params, loop, cfg, derive_seed(seed, {kTagTrial, static_cast<std::uint64_t>(i)}));
    sc.step(evaluate_trial(tr, cfg));
  }
  return sc;
}

}  // namespace flowtrace
