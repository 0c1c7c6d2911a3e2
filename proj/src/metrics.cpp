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

#include "flowtrace/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "flowtrace/error.hpp"

namespace flowtrace {

namespace {

constexpr std::array<std::string_view, kMetricCount> kNames = {
    "reaction_time",   "arriving_time",     "completing_time",     "in_range_time",
    "force_overshoot", "average_deviation", "average_adjust_rate", "success_rate"};

}  // namespace

std::string_view metric_name(Metric m) { return kNames[static_cast<std::size_t>(m)]; }

std::optional<Metric> metric_from_name(std::string_view name) {
  for (int i = 0; i < kMetricCount; ++i)
    if (kNames[static_cast<std::size_t>(i)] == name) return static_cast<Metric>(i);
  return std::nullopt;
}

double MetricsVector::at(Metric m) const { return const_cast<MetricsVector*>(this)->at(m); }

double& MetricsVector::at(Metric m) {
  switch (m) {
    case Metric::reaction_time: return reaction_time;
    case Metric::arriving_time: return arriving_time;
    case Metric::completing_time: return completing_time;
    case Metric::in_range_time: return in_range_time;
    case Metric::force_overshoot: return force_overshoot;
    case Metric::average_deviation: return average_deviation;
    case Metric::average_adjust_rate: return average_adjust_rate;
    case Metric::success_rate: return success_rate;
  }
  fail(ErrorCode::invalid_input, "unknown metric");
}

MetricsVector trial_metrics(const TrialRecord& record,
                            std::span<const TrialRecord> trailing_window) {
  require(record.evaluated, ErrorCode::invalid_input, "trial record was not evaluated");
  require(!trailing_window.empty(), ErrorCode::invalid_input,
          "success rate needs a non-empty trailing window");
  const TrialConfig& cfg = record.config;
  const ForceTrace& tr = record.trace;
  const double T = cfg.trial_duration;
  const double ft = cfg.target_force;

  MetricsVector m;
  m.reaction_time = record.press_onset.value_or(T);
  if (record.press_onset && record.band_entry)
    m.arriving_time = *record.band_entry - *record.press_onset;
  else if (record.press_onset)
    m.arriving_time = T - *record.press_onset;
  else
    m.arriving_time = T;
  m.completing_time = record.success_latch.value_or(T);

  std::size_t in_band = 0;
  for (double f : tr.samples)
    if (cfg.in_band(f)) ++in_band;
  m.in_range_time = static_cast<double>(in_band) * tr.dt;

  const double peak = *std::max_element(tr.samples.begin(), tr.samples.end());
  m.force_overshoot = std::abs(peak - ft) / ft;

  std::size_t start = 0;
  if (record.press_onset)
    start = static_cast<std::size_t>(std::llround(*record.press_onset / tr.dt));
  const std::size_t n = tr.samples.size() - start;
  double dev = 0.0;
  double var = 0.0;
  for (std::size_t i = start; i < tr.samples.size(); ++i) {
    dev += std::abs(tr.samples[i] - ft);
    if (i > start) var += std::abs(tr.samples[i] - tr.samples[i - 1]);
  }
  m.average_deviation = dev / static_cast<double>(n);
  m.average_adjust_rate = n > 1 ? var / (static_cast<double>(n - 1) * tr.dt) : 0.0;

  std::size_t wins = 0;
  for (const auto& r : trailing_window) wins += r.success ? 1 : 0;
  m.success_rate = static_cast<double>(wins) / static_cast<double>(trailing_window.size());
  return m;
}

MetricsVector probe_metrics(std::span<const TrialRecord> trials, int probe_trial_index,
                            int window) {
  require(window >= 1, ErrorCode::invalid_input, "probe window must be positive");
  require(probe_trial_index >= window &&
              probe_trial_index <= static_cast<int>(trials.size()),
          ErrorCode::insufficient_data,
          "probe at trial " + std::to_string(probe_trial_index) + " needs " +
              std::to_string(window) + " preceding trials");
  const auto first = static_cast<std::size_t>(probe_trial_index - window);
  auto span = trials.subspan(first, static_cast<std::size_t>(window));

  MetricsVector sum;
  std::size_t wins = 0;
  for (std::size_t k = 0; k < span.size(); ++k) {
    MetricsVector one = trial_metrics(span[k], span.subspan(k, 1));
    for (Metric m : kAllMetrics) sum.at(m) += one.at(m);
    wins += span[k].success ? 1 : 0;
  }
  const double w = static_cast<double>(window);
  for (Metric m : kAllMetrics) sum.at(m) /= w;
  sum.success_rate = static_cast<double>(wins) / w;
  return sum;
}

StandardizedMetrics zstandardize(std::span<const MetricsVector> vectors) {
  require(vectors.size() >= 2, ErrorCode::insufficient_data,
          "standardization needs at least two vectors");
  StandardizedMetrics out;
  out.values.assign(vectors.begin(), vectors.end());
  const double n = static_cast<double>(vectors.size());
  for (Metric m : kAllMetrics) {
    const auto k = static_cast<std::size_t>(m);
    double mean = 0.0;
    for (const auto& v : vectors) mean += v.at(m);
    mean /= n;
    double ss = 0.0;
    for (const auto& v : vectors) ss += (v.at(m) - mean) * (v.at(m) - mean);
    const double sd = std::sqrt(ss / (n - 1));
    out.params.mean[k] = mean;
    out.params.sd[k] = sd;
    const bool flat = !(sd > 1e-12 * std::max(1.0, std::abs(mean)));
    out.params.degenerate[k] = flat;
    if (flat) out.warnings.push_back(std::string(metric_name(m)) + ": zero variance");
    for (auto& v : out.values) v.at(m) = flat ? 0.0 : (v.at(m) - mean) / sd;
  }
  return out;
}

ForceTrace resample(const ForceTrace& trace, double dt_out) {
  require(trace.dt > 0 && dt_out > 0, ErrorCode::invalid_input, "sample periods must be positive");
  require(!trace.samples.empty(), ErrorCode::invalid_input, "empty force trace");
  ForceTrace out;
  out.dt = dt_out;
  const auto n_out = static_cast<std::size_t>(std::llround(trace.duration() / dt_out));
  out.samples.reserve(n_out);
  const std::size_t last = trace.samples.size() - 1;
  for (std::size_t j = 0; j < n_out; ++j) {
    const double pos = static_cast<double>(j) * dt_out / trace.dt;
    const auto i = static_cast<std::size_t>(std::floor(pos + 1e-9));
    if (i >= last) {
      out.samples.push_back(trace.samples[last]);
      continue;
    }
    const double frac = std::max(0.0, pos - static_cast<double>(i));
    out.samples.push_back(trace.samples[i] + frac * (trace.samples[i + 1] - trace.samples[i]));
  }
  return out;
}

}  // namespace flowtrace
