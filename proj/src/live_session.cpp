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


#include "flowtrace/live_session.hpp"

#include <algorithm>
#include <cmath>

#include "flowtrace/error.hpp"
#include "flowtrace/pipeline.hpp"
#include "flowtrace/rng.hpp"
#include "flowtrace/version.hpp"

namespace flowtrace {

namespace {

Json metrics_json(const MetricsVector& m) {
  Json j;
  for (Metric k : kAllMetrics) j[std::string(metric_name(k))] = m.at(k);
  return j;
}

const char* phase_word(Phase p) {
  switch (p) {
    case Phase::practice: return "practice";
    case Phase::skill_measurement: return "skill_measurement";
    case Phase::main: return "main";
    case Phase::rest: return "rest";
    case Phase::done: return "done";
  }
  return "done";
}

Phase phase_from_word(const std::string& s) {
  for (Phase p : {Phase::practice, Phase::skill_measurement, Phase::main, Phase::rest, Phase::done})
    if (s == phase_word(p)) return p;
  fail(ErrorCode::format, "unknown phase '" + s + "'");
}

template <typename T>
void take(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::invalid_input, std::string("override '") + key + "' has the wrong type");
  }
}

Json opt(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

void LiveOptions::validate() const {
  config.validate();
  require(staircase.k1 > 0 && staircase.k2 > 0 && staircase.initial_band > 0,
          ErrorCode::invalid_input, "staircase parameters must be positive");
  require(skill_trials >= 1 && skill_max_trials >= skill_trials && skill_transitions >= 1,
          ErrorCode::invalid_input, "inconsistent skill phase limits");
  require(sessions >= 1 && trials_per_session >= 1, ErrorCode::invalid_input,
          "session counts must be positive");
  require(probes_per_session >= 1 && min_gap >= 1 &&
              static_cast<long>(probes_per_session) * min_gap <= trials_per_session,
          ErrorCode::invalid_input, "infeasible probe schedule");
  require(session_rest_s >= 0, ErrorCode::invalid_input, "session_rest_s must be non-negative");
  require(sample_dt > 0 && sample_dt <= config.hold_duration, ErrorCode::invalid_input,
          "sample_dt must be positive and below hold_duration");
  require(decoder_min_probes >= 4, ErrorCode::invalid_input, "decoder_min_probes must be >= 4");
  require(window >= 1 && window <= min_gap, ErrorCode::invalid_input,
          "window must be within 1..min_gap");
}

Json live_options_to_json(const LiveOptions& o) {
  return Json{{"target_force", o.config.target_force},
              {"trial_duration", o.config.trial_duration},
              {"hold_duration", o.config.hold_duration},
              {"rest_duration", o.config.rest_duration},
              {"press_threshold", o.config.press_threshold},
              {"k1", o.staircase.k1},
              {"k2", o.staircase.k2},
              {"initial_band", o.staircase.initial_band},
              {"skill_trials", o.skill_trials},
              {"skill_max_trials", o.skill_max_trials},
              {"skill_transitions", o.skill_transitions},
              {"sessions", o.sessions},
              {"trials_per_session", o.trials_per_session},
              {"probes_per_session", o.probes_per_session},
              {"min_gap", o.min_gap},
              {"session_rest_s", o.session_rest_s},
              {"sample_dt", o.sample_dt},
              {"decoder_min_probes", o.decoder_min_probes},
              {"window", o.window},
              {"seed", o.seed}};
}

LiveOptions live_options_from_json(const Json& overrides, LiveOptions base) {
  require(overrides.is_object(), ErrorCode::invalid_input, "session overrides must be an object");
  const Json known = live_options_to_json(base);
  for (const auto& [k, v] : overrides.items())
    require(known.contains(k), ErrorCode::invalid_input, "unknown override '" + k + "'");
  LiveOptions o = base;
  take(overrides, "target_force", o.config.target_force);
  take(overrides, "trial_duration", o.config.trial_duration);
  take(overrides, "hold_duration", o.config.hold_duration);
  take(overrides, "rest_duration", o.config.rest_duration);
  take(overrides, "press_threshold", o.config.press_threshold);
  take(overrides, "k1", o.staircase.k1);
  take(overrides, "k2", o.staircase.k2);
  take(overrides, "initial_band", o.staircase.initial_band);
  take(overrides, "skill_trials", o.skill_trials);
  take(overrides, "skill_max_trials", o.skill_max_trials);
  take(overrides, "skill_transitions", o.skill_transitions);
  take(overrides, "sessions", o.sessions);
  take(overrides, "trials_per_session", o.trials_per_session);
  take(overrides, "probes_per_session", o.probes_per_session);
  take(overrides, "min_gap", o.min_gap);
  take(overrides, "session_rest_s", o.session_rest_s);
  take(overrides, "sample_dt", o.sample_dt);
  take(overrides, "decoder_min_probes", o.decoder_min_probes);
  take(overrides, "window", o.window);
  take(overrides, "seed", o.seed);
  o.validate();
  return o;
}

LiveSession::LiveSession(std::string id, LiveOptions options)
    : id_(std::move(id)), options_(options), staircase_(options.staircase) {
  options_.validate();
  schedule_ = schedule_probes(options_.sessions, options_.trials_per_session,
                              options_.probes_per_session, options_.min_gap,
                              derive_seed(options_.seed, {1}));
  probe_at_ = schedule_.global_indices();
  data_.subject_id = id_;
  data_.config = options_.config;
  data_.sessions = options_.sessions;
  data_.trials_per_session = options_.trials_per_session;
  data_.staircase.params = options_.staircase;
  data_.provenance.seed = options_.seed;
  data_.provenance.tool_version = kVersion;
  data_.provenance.source = "live";
}

std::string LiveSession::phase_name() const {
  if (phase_ == Phase::main) return "main_" + std::to_string(current_session_);
  return phase_word(phase_);
}

Json LiveSession::phase_change() const {
  Json j{{"type", "phase_change"}, {"phase", phase_name()}};
  if (phase_ == Phase::rest && rest_until_) j["resume_at"] = *rest_until_;
  if (phase_ == Phase::main) j["band_width"] = data_.config.band_width;
  return j;
}

void LiveSession::enter_phase(Phase p, std::vector<Json>& out) {
  phase_ = p;
  notified_ = false;
  dirty_ = true;
  out.push_back(phase_change());
}

void LiveSession::notice(const char* message, std::vector<Json>& out) {
  if (notified_) return;
  notified_ = true;
  out.push_back(Json{{"type", "notice"}, {"message", message}});
}

std::vector<Json> LiveSession::ready() {
  require(phase_ == Phase::practice, ErrorCode::protocol, "ready is only valid during practice");
  std::vector<Json> out;
  enter_phase(Phase::skill_measurement, out);
  return out;
}

std::vector<Json> LiveSession::ingest_sample(double t, double force) {
  if (!std::isfinite(t)) fail(ErrorCode::validation, "sample time is not finite");
  if (!(std::isfinite(force) && force >= 0))
    fail(ErrorCode::validation, "sample force must be finite and non-negative");
  if (last_t_ && t < *last_t_) fail(ErrorCode::protocol, "sample timestamp went backwards");
  last_t_ = t;

  std::vector<Json> out;
  switch (phase_) {
    case Phase::practice:
      return out;
    case Phase::done:
      notice("session is finished; sample ignored", out);
      return out;
    case Phase::rest:
      if (rest_until_ && t < *rest_until_) {
        notice("rest between sessions; samples ignored", out);
        return out;
      }
      ++current_session_;
      enter_phase(Phase::main, out);
      break;
    default:
      break;
  }

  if (stream_) {
    feed(t - trial_t0_, force, out);
  } else if (probe_pending_) {
    notice("probe pending; samples ignored", out);
  } else if (rest_until_ && t < *rest_until_) {
    notice("rest between trials; samples ignored", out);
  } else if (force > options_.config.press_threshold) {
    notice("release the force to start the next trial", out);
  } else {
    start_trial(t, force, out);
  }
  return out;
}

void LiveSession::start_trial(double t, double force, std::vector<Json>& out) {
  TrialConfig cfg = data_.config;
  int index = main_index() + 1;
  if (phase_ == Phase::skill_measurement) {
    cfg.band_width = staircase_.current_band();
    index = staircase_.trial_index();
  }
  stream_.emplace(cfg, options_.sample_dt);
  trial_t0_ = t;
  next_grid_ = 0;
  grid_limit_ = static_cast<std::size_t>(std::ceil(cfg.trial_duration / options_.sample_dt - 1e-6));
  notified_ = false;
  out.push_back(Json{{"type", "trial_start"},
                     {"index", index},
                     {"band_width", cfg.band_width},
                     {"target_force", cfg.target_force},
                     {"phase", phase_name()}});
  feed(0.0, force, out);
}

void LiveSession::feed(double rel, double force, std::vector<Json>& out) {
  const double dt = options_.sample_dt;
  if (next_grid_ == 0) {
    stream_->push(0.0, round_sig9(force));
    next_grid_ = 1;
  } else {
    while (next_grid_ < grid_limit_ && static_cast<double>(next_grid_) * dt <= rel + kTimeEps) {
      const double g = static_cast<double>(next_grid_) * dt;
      const double v = rel > prev_rel_
                           ? prev_force_ + (force - prev_force_) * (g - prev_rel_) / (rel - prev_rel_)
                           : force;
      stream_->push(g, round_sig9(std::max(0.0, v)));
      ++next_grid_;
    }
  }
  prev_rel_ = rel;
  prev_force_ = force;
  if (rel >= stream_->record().config.trial_duration - kTimeEps) {
    stream_->finish();
    end_trial(out);
  }
}

void LiveSession::end_trial(std::vector<Json>& out) {
  TrialRecord rec = stream_->record();
  stream_.reset();
  rest_until_ = trial_t0_ + rec.config.trial_duration + rec.config.rest_duration;
  notified_ = false;
  dirty_ = true;

  if (phase_ == Phase::skill_measurement) {
    const int index = staircase_.trial_index();
    staircase_.step(rec);
    data_.staircase.history = staircase_.history();
    out.push_back(Json{{"type", "trial_end"},
                       {"index", index},
                       {"success", rec.success},
                       {"metrics", metrics_json(trial_metrics(rec, {&rec, 1}))},
                       {"next_band_width", staircase_.current_band()}});
    const int n = static_cast<int>(staircase_.history().size());
    const auto found = staircase_.transition_points().size();
    const auto need = static_cast<std::size_t>(options_.skill_transitions);
    if ((n >= options_.skill_trials && found >= need) || n >= options_.skill_max_trials) {
      double skill = staircase_.current_band();
      if (found >= need)
        skill = staircase_.measured_skill(need);
      else if (found >= 1)
        skill = staircase_.measured_skill(found);
      data_.staircase.measured_skill = skill;
      data_.config.band_width = skill;
      current_session_ = 1;
      enter_phase(Phase::main, out);
    }
    return;
  }

  data_.trials.push_back(std::move(rec));
  const int g = main_index();
  const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(options_.window), data_.trials.size());
  const std::span<const TrialRecord> all(data_.trials);
  const TrialRecord& last = data_.trials.back();
  out.push_back(Json{{"type", "trial_end"},
                     {"index", g},
                     {"success", last.success},
                     {"metrics", metrics_json(trial_metrics(last, all.subspan(all.size() - w)))}});
  if (auto fu = flow_update(g)) out.push_back(std::move(*fu));
  if (std::find(probe_at_.begin(), probe_at_.end(), g) != probe_at_.end()) {
    probe_pending_ = true;
    Json q = Json::array();
    for (const char* s : kProbeQuestions) q.push_back(s);
    out.push_back(Json{{"type", "probe_request"},
                       {"probe_index", static_cast<int>(data_.probes.size()) + 1},
                       {"trial_index", g},
                       {"questions", std::move(q)}});
    return;
  }
  if (g % options_.trials_per_session == 0) advance_session(out);
}

void LiveSession::advance_session(std::vector<Json>& out) {
  if (main_index() >= options_.sessions * options_.trials_per_session) {
    enter_phase(Phase::done, out);
    return;
  }
  const double base = rest_until_.value_or(last_t_.value_or(0.0));
  rest_until_ = base + options_.session_rest_s;
  enter_phase(Phase::rest, out);
}

std::vector<Json> LiveSession::answer_probe(std::array<int, 3> responses) {
  require(probe_pending_, ErrorCode::protocol, "no probe is pending");
  const int g = main_index();
  FlowProbe p = FlowProbe::from_responses(static_cast<int>(data_.probes.size()) + 1, g, responses);
  std::vector<Json> out;
  data_.probes.push_back(p);
  probe_pending_ = false;
  notified_ = false;
  dirty_ = true;
  out.push_back(Json{{"type", "probe_ack"}, {"probe_index", p.probe_index}, {"intensity", p.intensity}});
  if (static_cast<int>(data_.probes.size()) >= options_.decoder_min_probes) ++requested_generation_;
  if (g % options_.trials_per_session == 0) advance_session(out);
  return out;
}

std::vector<Json> LiveSession::finalize() {
  std::vector<Json> out;
  finalized_ = true;
  dirty_ = true;
  if (phase_ == Phase::done) return out;
  stream_.reset();
  probe_pending_ = false;
  enter_phase(Phase::done, out);
  return out;
}

std::optional<LiveSession::RefitJob> LiveSession::take_refit_job() {
  if (requested_generation_ <= issued_generation_) return std::nullopt;
  issued_generation_ = requested_generation_;
  RefitJob job;
  job.generation = requested_generation_;
  std::vector<int> trials;
  collect_probe_rows(data_, options_.window, trials, job.intensity, job.metrics);
  return job;
}

DecoderModel LiveSession::run_refit(const RefitJob& job) {
  const int n = static_cast<int>(job.intensity.size());
  require(n >= 4, ErrorCode::insufficient_data, "decoder needs four usable probes");
  return select_subset(job.intensity, job.metrics, std::min(4, n - 3)).model;
}

std::vector<Json> LiveSession::install_model(std::uint64_t generation, DecoderModel model) {
  std::vector<Json> out;
  if (generation <= installed_generation_) return out;
  installed_generation_ = generation;
  model_ = std::move(model);
  if (auto fu = flow_update(main_index())) out.push_back(std::move(*fu));
  return out;
}

std::optional<Json> LiveSession::flow_update(int trial_index) const {
  if (!model_ || trial_index < options_.window) return std::nullopt;
  const double v = predict(*model_, probe_metrics(data_.trials, trial_index, options_.window));
  return Json{{"type", "flow_update"}, {"trial_index", trial_index}, {"intensity", v}};
}

bool LiveSession::take_dirty() {
  const bool d = dirty_;
  dirty_ = false;
  return d;
}

Json LiveSession::summary() const {
  Json j;
  j["id"] = id_;
  j["phase"] = phase_name();
  j["finalized"] = finalized_;
  j["trials_completed"] = main_index();
  j["skill_trials_completed"] = staircase_.history().size();
  if (phase_ == Phase::practice)
    j["band_width"] = nullptr;
  else if (phase_ == Phase::skill_measurement)
    j["band_width"] = staircase_.current_band();
  else
    j["band_width"] = data_.config.band_width;
  j["measured_skill"] = opt(data_.staircase.measured_skill);
  j["probes_answered"] = data_.probes.size();
  j["probe_pending"] = probe_pending_;
  j["in_trial"] = stream_.has_value();
  if (model_) {
    Json names = Json::array();
    for (Metric m : model_->subset) names.push_back(std::string(metric_name(m)));
    j["decoder"] = Json{{"subset", names}, {"weights", model_->weights}, {"intercept", model_->intercept}};
  } else {
    j["decoder"] = nullptr;
  }
  j["config"] = live_options_to_json(options_);
  return j;
}

Json LiveSession::live_state() const {
  return Json{{"phase", phase_word(phase_)},
              {"current_session", current_session_},
              {"finalized", finalized_},
              {"probe_pending", probe_pending_},
              {"last_t", opt(last_t_)},
              {"rest_until", opt(rest_until_)},
              {"options", live_options_to_json(options_)}};
}

LiveSession LiveSession::restore(std::string id, const SessionData& data, const Json& state) {
  try {
    LiveSession s(std::move(id), live_options_from_json(state.at("options")));
    s.data_ = data;
    s.data_.subject_id = s.id_;
    s.staircase_ = Staircase::replay(s.options_.staircase, data.staircase.history);
    s.phase_ = phase_from_word(state.at("phase").get<std::string>());
    s.current_session_ = state.at("current_session").get<int>();
    s.finalized_ = state.at("finalized").get<bool>();
    s.probe_pending_ = state.at("probe_pending").get<bool>();
    if (!state.at("last_t").is_null()) s.last_t_ = state.at("last_t").get<double>();
    if (!state.at("rest_until").is_null()) s.rest_until_ = state.at("rest_until").get<double>();
    if (static_cast<int>(data.probes.size()) >= s.options_.decoder_min_probes) s.requested_generation_ = 1;
    s.dirty_ = false;
    return s;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, "session " + id + ": bad live_state: " + e.what());
  }
}

}  // namespace flowtrace
