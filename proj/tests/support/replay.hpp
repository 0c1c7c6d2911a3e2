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


// Drives a whole live session through the socket with simulated force
// traces, the way a scripted UI would. Test support only.

#ifndef FLOWTRACE_TESTS_REPLAY_HPP_
#define FLOWTRACE_TESTS_REPLAY_HPP_

#include <algorithm>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowtrace/rng.hpp"
#include "flowtrace/simulator.hpp"
#include "live_client.hpp"

namespace flowtrace::testing {

struct ReplayOptions {
  Json overrides = Json::object();  // POST /api/session body
  SimParams sim;
  TrialConfig config;               // must agree with overrides
  double skill_intensity = 4.0;
  std::vector<double> flow;         // per main trial
  double report_noise_sd = 0.5;
  int stride = 8;                   // 1 kHz simulator trace -> 125 Hz stream
  std::uint64_t seed = 1;
  double t0 = 1000.0;
  int stop_after_main = -1;         // stop feeding after this many main trials
};

struct ReplayLog {
  std::string id;
  std::vector<Json> messages;
  std::vector<Json> skill_trial_ends;
  std::vector<Json> main_trial_ends;
  std::vector<Json> flow_updates;
  int probes_answered = 0;
  std::string phase;
};

inline ReplayLog replay_session(LiveClient& client, const ReplayOptions& o) {
  ReplayLog log;
  const HttpResult created = client.post("/api/session", o.overrides.dump());
  if (created.status != 201) throw std::runtime_error("create failed: " + created.body);
  log.id = created.json().at("id").get<std::string>();
  client.connect(log.id);
  log.messages.push_back(client.read());

  double resume_at = 0;
  std::function<void(const std::vector<Json>&)> handle = [&](const std::vector<Json>& msgs) {
    for (const Json& m : msgs) {
      log.messages.push_back(m);
      const std::string type = m.at("type").get<std::string>();
      if (type == "error") throw std::runtime_error("server error: " + m.dump());
      if (type == "phase_change") {
        log.phase = m.at("phase").get<std::string>();
        if (log.phase == "rest") resume_at = m.at("resume_at").get<double>();
      } else if (type == "trial_end") {
        (log.phase == "skill_measurement" ? log.skill_trial_ends : log.main_trial_ends).push_back(m);
      } else if (type == "flow_update") {
        log.flow_updates.push_back(m);
      } else if (type == "probe_request") {
        const int g = m.at("trial_index").get<int>();
        const auto r = synth_responses(o.flow.at(static_cast<std::size_t>(g - 1)), o.report_noise_sd,
                                       derive_seed(o.seed, {3, static_cast<std::uint64_t>(g)}));
        client.send(Json{{"type", "probe_response"}, {"r1", r[0]}, {"r2", r[1]}, {"r3", r[2]}});
        ++log.probes_answered;
        handle(client.sync());
      }
    }
  };

  client.send(Json{{"type", "ready"}});
  handle(client.sync());

  double t = o.t0;
  std::uint64_t k_skill = 0;
  while (log.phase != "done") {
    const bool skill = log.phase == "skill_measurement";
    const std::size_t k_main = log.main_trial_ends.size();
    if (!skill && o.stop_after_main >= 0 && static_cast<int>(k_main) >= o.stop_after_main) break;
    if (log.phase == "rest") t = std::max(t, resume_at);
    const double intensity = skill ? o.skill_intensity : o.flow.at(k_main);
    const std::uint64_t seed = skill ? derive_seed(o.seed, {1, k_skill++}) : derive_seed(o.seed, {2, k_main});
    const ForceTrace trace = simulate_trial(o.sim, flow_to_loop_params(o.sim, intensity), o.config, seed);
    for (std::size_t j = 0; j < trace.samples.size(); j += static_cast<std::size_t>(o.stride))
      client.send(Json{{"type", "sample"}, {"t", t + trace.time_of(j)}, {"force", trace.samples[j]}});
    client.send(Json{{"type", "sample"}, {"t", t + o.config.trial_duration}, {"force", trace.samples.back()}});
    const std::size_t before = log.skill_trial_ends.size() + log.main_trial_ends.size();
    handle(client.sync());
    if (log.skill_trial_ends.size() + log.main_trial_ends.size() != before + 1)
      throw std::runtime_error("expected exactly one trial_end per streamed trial");
    t += o.config.trial_duration + o.config.rest_duration;
  }
  return log;
}

}  // namespace flowtrace::testing

#endif  // FLOWTRACE_TESTS_REPLAY_HPP_
