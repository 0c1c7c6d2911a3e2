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

#ifndef FLOWTRACE_METRICS_HPP_
#define FLOWTRACE_METRICS_HPP_

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flowtrace/task_core.hpp"

namespace flowtrace {

// Canonical metric order. Subset enumeration and tie-breaking follow it.
enum class Metric : int {
  reaction_time = 0,
  arriving_time,
  completing_time,
  in_range_time,
  force_overshoot,
  average_deviation,
  average_adjust_rate,
  success_rate,
};

inline constexpr int kMetricCount = 8;

inline constexpr std::array<Metric, kMetricCount> kAllMetrics = {
    Metric::reaction_time,   Metric::arriving_time,     Metric::completing_time,
    Metric::in_range_time,   Metric::force_overshoot,   Metric::average_deviation,
    Metric::average_adjust_rate, Metric::success_rate};

std::string_view metric_name(Metric m);
std::optional<Metric> metric_from_name(std::string_view name);

struct MetricsVector {
  double reaction_time = 0;        // s
  double arriving_time = 0;        // s
  double completing_time = 0;      // s
  double in_range_time = 0;        // s
  double force_overshoot = 0;      // dimensionless
  double average_deviation = 0;    // N
  double average_adjust_rate = 0;  // N/s
  double success_rate = 0;         // [0, 1]

  double at(Metric m) const;
  double& at(Metric m);

  bool operator==(const MetricsVector&) const = default;
};

// Per-trial metrics. Missing events are censored: no press gives
// reaction_time = trial_duration; arriving/completing times fall back to the
// remaining trial time. Deviation and adjust rate span press onset to trial
// end (the whole trace when there is no press). success_rate is taken over
// `trailing_window`, which should include `record` itself.
MetricsVector trial_metrics(const TrialRecord& record,
                            std::span<const TrialRecord> trailing_window);

// Mean of per-trial metrics over trials (probe_trial_index - window, ..
// probe_trial_index], 1-based; success_rate is successes / window.
MetricsVector probe_metrics(std::span<const TrialRecord> trials, int probe_trial_index,
                            int window = 5);

struct Standardization {
  std::array<double, kMetricCount> mean{};
  std::array<double, kMetricCount> sd{};
  std::array<bool, kMetricCount> degenerate{};
};

struct StandardizedMetrics {
  std::vector<MetricsVector> values;
  Standardization params;
  std::vector<std::string> warnings;
};

// Per-metric z-scores with the sample (n-1) standard deviation. A metric with
// zero variance becomes all zeros and is reported in `warnings`.
StandardizedMetrics zstandardize(std::span<const MetricsVector> vectors);

// Linear resampling onto a uniform grid with step dt_out, starting at t=0 and
// covering the input duration.
ForceTrace resample(const ForceTrace& trace, double dt_out);

}  // namespace flowtrace

#endif  // FLOWTRACE_METRICS_HPP_
