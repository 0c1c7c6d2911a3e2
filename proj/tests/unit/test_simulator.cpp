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


#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "fixtures.hpp"
#include "flowtrace/metrics.hpp"
#include "flowtrace/simulator.hpp"
#include "flowtrace/stats.hpp"

using namespace flowtrace;
using fixtures::error_of;

namespace {

SimParams noiseless() {
  SimParams p;
  p.sigma_force = p.sigma_command = p.sigma_measurement = p.sigma_visual = 0;
  return p;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST_CASE("flow to loop parameters") {
  const SimParams p;
  CHECK(flow_to_loop_params(p, 7).period == doctest::Approx(0.15));
  CHECK(flow_to_loop_params(p, 7).step == doctest::Approx(0.015));
  CHECK(flow_to_loop_params(p, 1).period == doctest::Approx(0.30));
  CHECK(flow_to_loop_params(p, 1).step == doctest::Approx(0.030));
  CHECK(flow_to_loop_params(p, 4).period == doctest::Approx(0.225));
  CHECK(flow_to_loop_params(p, 4).step == doctest::Approx(0.0225));
  CHECK(error_of([&] { flow_to_loop_params(p, 0.5); }) == ErrorCode::invalid_input);
  CHECK(error_of([&] { flow_to_loop_params(p, 7.5); }) == ErrorCode::invalid_input);
}

TEST_CASE("quantizer") {
  const double step = 0.015;
  for (double c = -0.2; c <= 0.2; c += 0.00137) {
    const double q = quantize_command(c, step);
    if (c == 0) continue;
    CHECK(std::abs(q) >= step - 1e-15);
    CHECK((q > 0) == (c > 0));
    if (std::abs(c) > step) {
      const double k = q / step;
      CHECK(std::abs(k - std::round(k)) < 1e-9);
      CHECK(std::abs(q) <= std::abs(c) + 1e-15);
    }
  }
  CHECK(quantize_command(0.0, step) == 0.0);
  CHECK(quantize_command(0.004, step) == step);
  CHECK(quantize_command(-0.004, step) == -step);
  CHECK(quantize_command(0.049, step) == doctest::Approx(0.045));
}

TEST_CASE("noise-free loop converges geometrically to the target") {
  TrialConfig cfg;
  cfg.band_width = 1e-4;
  const LoopParams loop{0.15, 1e-6};
  const ForceTrace t = simulate_trial(noiseless(), loop, cfg, 1);
  // Updates land every 150 samples; the first one after the reaction delay.
  double prev_err = 1.0;
  for (std::size_t i = 150; i < t.samples.size(); i += 150) {
    const double err = std::abs(t.samples[i] - 1.0);
    CHECK((err <= 0.5 * prev_err || err <= loop.step));
    prev_err = err;
  }
  CHECK(t.samples[149] == 0.0);
  CHECK(evaluate_trial(t, cfg).success);
}

TEST_CASE("simulation is a pure function of the seed") {
  const SimParams p;
  const TrialConfig cfg;
  const auto a = simulate_trial(p, p.inflow, cfg, 42);
  const auto b = simulate_trial(p, p.inflow, cfg, 42);
  const auto c = simulate_trial(p, p.inflow, cfg, 43);
  CHECK(a.samples == b.samples);
  CHECK(a.samples != c.samples);
  CHECK(a.samples.size() == 3000);
  CHECK(a.samples.front() == 0.0);
  for (double v : a.samples) CHECK(round_sig9(v) == v);
  CHECK(error_of([&] { simulate_trial(p, {0.0005, 0.01}, cfg, 1); }) == ErrorCode::invalid_input);
}

TEST_CASE("faster, finer loop improves in-range time and success") {
  const SimParams p;
  const TrialConfig cfg;
  for (std::uint64_t batch = 0; batch < 3; ++batch) {
    std::vector<double> in_t, out_t;
    int in_s = 0, out_s = 0;
    for (std::uint64_t k = 0; k < 100; ++k) {
      const TrialRecord a = evaluate_trial(simulate_trial(p, p.inflow, cfg, batch * 1000 + k), cfg);
      const TrialRecord b = evaluate_trial(simulate_trial(p, p.outflow, cfg, batch * 1000 + k + 500), cfg);
      in_t.push_back(trial_metrics(a, {&a, 1}).in_range_time);
      out_t.push_back(trial_metrics(b, {&b, 1}).in_range_time);
      in_s += a.success;
      out_s += b.success;
    }
    CHECK(median(in_t) > median(out_t));
    CHECK(in_s > out_s);
  }
}

TEST_CASE("flow processes") {
  SUBCASE("determinism and range") {
    for (FlowKind kind : {FlowKind::ou, FlowKind::sinusoid_mixture}) {
      const auto a = gen_flow_process(kind, 300, 5);
      const auto b = gen_flow_process(kind, 300, 5);
      CHECK(a.intensity == b.intensity);
      CHECK(a.intensity != gen_flow_process(kind, 300, 6).intensity);
      for (double v : a.intensity) CHECK((v >= 1 && v <= 7));
    }
    CHECK(error_of([] { flow_kind_from_name("pink"); }) == ErrorCode::invalid_input);
  }
  SUBCASE("OU long-run mean") {
    const auto f = gen_flow_process(FlowKind::ou, 20000, 3);
    const double m = std::accumulate(f.intensity.begin(), f.intensity.end(), 0.0) / 20000.0;
    CHECK(m == doctest::Approx(4.0).epsilon(0.05));
  }
  SUBCASE("single 20 s tone peaks at 0.05 Hz") {
    FlowProcessParams fp;
    fp.noise_sd = 0;
    fp.components = {{20.0, 1.5}};
    const auto f = gen_flow_process(FlowKind::sinusoid_mixture, 600, 2, fp);
    std::vector<double> x = f.intensity;
    const double m = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    for (double& v : x) v -= m;
    const PsdEstimate psd = welch_psd(x, 1.0 / 3.0);
    const auto peak = std::max_element(psd.density.begin(), psd.density.end()) - psd.density.begin();
    const double df = psd.frequency[1] - psd.frequency[0];
    CHECK(std::abs(psd.frequency[static_cast<std::size_t>(peak)] - 0.05) <= df / 2 + 1e-12);
  }
}

TEST_CASE("synthetic subject structure") {
  const SimParams p;
  TrialConfig cfg;
  const ProbeSchedule sched = schedule_probes(3, 100, 4, 12, 1);
  const FlowProcess flow = gen_flow_process(FlowKind::ou, 300, 2);
  const SessionData d = simulate_subject(p, cfg, sched, flow, 0.0, 9);
  CHECK(d.trials.size() == 300);
  CHECK(d.probes.size() == 12);
  CHECK(d.ground_truth_flow == flow.intensity);
  for (const auto& pr : d.probes) {
    const double truth = flow.intensity[static_cast<std::size_t>(pr.trial_index - 1)];
    CHECK(pr.intensity == std::round(truth));
  }
  CHECK_NOTHROW(d.validate());

  ProbeSchedule too_long = schedule_probes(4, 100, 4, 12, 1);
  CHECK(error_of([&] { simulate_subject(p, cfg, too_long, flow, 0.0, 9); }) == ErrorCode::invalid_input);
}

TEST_CASE("synthetic responses") {
  const auto r = synth_responses(4.4, 0.0, 1);
  CHECK(r == std::array<int, 3>{4, 4, 4});
  for (std::uint64_t s = 0; s < 200; ++s)
    for (int v : synth_responses(6.8, 2.0, s)) CHECK((v >= 1 && v <= 7));
  CHECK(error_of([] { FlowProbe::from_responses(1, 1, {1, 8, 3}); }) == ErrorCode::validation);
  CHECK(FlowProbe::from_responses(1, 1, {1, 2, 4}).intensity == doctest::Approx(7.0 / 3.0));
}
