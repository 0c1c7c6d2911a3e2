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
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "flowtrace/metrics.hpp"

using namespace flowtrace;
using fixtures::error_of;

namespace {

TrialRecord eval(std::vector<double> samples, double dt = 0.001, TrialConfig cfg = {}) {
  ForceTrace t;
  t.dt = dt;
  t.samples = std::move(samples);
  return evaluate_trial(t, cfg);
}

// Direct transcription of the three force formulas over samples from the
// press onset on.
struct Hand {
  double overshoot, deviation, adjust_rate;
};

Hand hand(const TrialRecord& r) {
  const auto& f = r.trace.samples;
  const double ft = r.config.target_force;
  std::size_t start = 0;
  while (start < f.size() && f[start] <= r.config.press_threshold) ++start;
  if (start == f.size()) start = 0;
  double peak = 0, dev = 0, var = 0;
  for (double v : f) peak = std::max(peak, v);
  for (std::size_t i = start; i < f.size(); ++i) {
    dev += std::abs(f[i] - ft);
    if (i > start) var += std::abs(f[i] - f[i - 1]);
  }
  const double n = static_cast<double>(f.size() - start);
  return {std::abs(peak - ft) / ft, dev / n, n > 1 ? var / ((n - 1) * r.trace.dt) : 0.0};
}

}  // namespace

TEST_CASE("metrics of the 0.6 s step trial") {
  TrialConfig cfg;
  cfg.band_width = 0.04;
  const TrialRecord r = evaluate_trial(fixtures::step_trace(0.2, 0.6), cfg);
  const MetricsVector m = trial_metrics(r, {&r, 1});
  CHECK(m.reaction_time == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(m.arriving_time == doctest::Approx(0.0));
  CHECK(m.completing_time == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(m.in_range_time == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(m.success_rate == 1.0);
}

TEST_CASE("overshoot, deviation and adjust rate by hand") {
  const TrialRecord a = eval({0.0, 1.0, 1.2, 1.0});
  CHECK(std::abs(trial_metrics(a, {&a, 1}).force_overshoot - 0.2) < 1e-9);

  const TrialRecord b = eval({0.0, 1.0, 1.1, 0.9});
  const MetricsVector m = trial_metrics(b, {&b, 1});
  CHECK(std::abs(m.average_deviation - 0.2 / 3) < 1e-9);
  CHECK(std::abs(m.average_adjust_rate - 150.0) < 1e-9);
}

TEST_CASE("censoring of failed and press-less trials") {
  const TrialRecord none = eval(std::vector<double>(3000, 0.0));
  const MetricsVector m = trial_metrics(none, {&none, 1});
  CHECK(m.reaction_time == 3.0);
  CHECK(m.arriving_time == 3.0);
  CHECK(m.completing_time == 3.0);
  CHECK(m.in_range_time == 0.0);
  CHECK(m.success_rate == 0.0);

  // Pressed at 1 s but never in band.
  std::vector<double> s(3000, 0.0);
  for (std::size_t i = 1000; i < 3000; ++i) s[i] = 0.5;
  const TrialRecord miss = eval(s);
  const MetricsVector mm = trial_metrics(miss, {&miss, 1});
  CHECK(mm.arriving_time == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(mm.completing_time == 3.0);
}

TEST_CASE("force metrics match the formulas on random traces") {
  std::mt19937_64 rng(21);
  for (int rep = 0; rep < 50; ++rep) {
    const ForceTrace t = fixtures::random_trace(rng);
    const TrialRecord r = evaluate_trial(t, TrialConfig{});
    const MetricsVector m = trial_metrics(r, {&r, 1});
    const Hand h = hand(r);
    CHECK(std::abs(m.force_overshoot - h.overshoot) < 1e-9);
    CHECK(std::abs(m.average_deviation - h.deviation) < 1e-9);
    CHECK(std::abs(m.average_adjust_rate - h.adjust_rate) < 1e-6);
    std::size_t in = 0;
    for (double v : t.samples) in += r.config.in_band(v) ? 1 : 0;
    CHECK(std::abs(m.in_range_time - static_cast<double>(in) * t.dt) < 1e-12);
    CHECK(m.in_range_time <= r.config.trial_duration);
  }
}

TEST_CASE("time reversal and force scaling") {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 30; ++rep) {
    ForceTrace t = fixtures::random_trace(rng);
    const TrialRecord r = evaluate_trial(t, TrialConfig{});
    const MetricsVector m = trial_metrics(r, {&r, 1});

    ForceTrace rev = t;
    std::reverse(rev.samples.begin() + 1, rev.samples.end());
    const TrialRecord rr = evaluate_trial(rev, TrialConfig{});
    const MetricsVector mr = trial_metrics(rr, {&rr, 1});
    CHECK(mr.average_deviation == doctest::Approx(m.average_deviation).epsilon(1e-12));
    CHECK(mr.average_adjust_rate == doctest::Approx(m.average_adjust_rate).epsilon(1e-12));

    const double c = 2.5;
    ForceTrace scaled = t;
    for (double& v : scaled.samples) v *= c;
    TrialConfig sc;
    sc.target_force *= c;
    sc.band_width *= c;
    sc.press_threshold *= c;
    const TrialRecord rs = evaluate_trial(scaled, sc);
    const MetricsVector ms = trial_metrics(rs, {&rs, 1});
    CHECK(ms.average_deviation == doctest::Approx(c * m.average_deviation).epsilon(1e-12));
    CHECK(ms.average_adjust_rate == doctest::Approx(c * m.average_adjust_rate).epsilon(1e-12));
    CHECK(ms.force_overshoot == doctest::Approx(m.force_overshoot).epsilon(1e-12));
  }
}

TEST_CASE("probe window aggregation") {
  std::vector<TrialRecord> trials;
  const double onsets[] = {0.2, 0.3, 0.25, 0.2, 0.3};
  const bool succeed[] = {true, false, true, true, false};
  for (int k = 0; k < 5; ++k)
    trials.push_back(evaluate_trial(fixtures::step_trace(onsets[k], succeed[k] ? 0.6 : 0.3), TrialConfig{}));
  const MetricsVector p = probe_metrics(trials, 5, 5);
  CHECK(p.reaction_time == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(p.success_rate == doctest::Approx(0.6).epsilon(1e-12));

  // Exact mean of the per-trial values for the other seven metrics.
  for (Metric m : kAllMetrics) {
    if (m == Metric::success_rate) continue;
    double sum = 0;
    for (const auto& t : trials) sum += trial_metrics(t, {&t, 1}).at(m);
    CHECK(p.at(m) == doctest::Approx(sum / 5).epsilon(1e-12));
  }

  std::vector<TrialRecord> same(5, trials.front());
  const MetricsVector one = trial_metrics(same.front(), {&same.front(), 1});
  const MetricsVector agg = probe_metrics(same, 5, 5);
  for (Metric m : kAllMetrics) CHECK(agg.at(m) == doctest::Approx(one.at(m)).epsilon(1e-12));

  CHECK(error_of([&] { probe_metrics(trials, 4, 5); }) == ErrorCode::insufficient_data);
  const TrialRecord raw;
  CHECK(error_of([&] { trial_metrics(raw, {&raw, 1}); }) == ErrorCode::invalid_input);
}

TEST_CASE("z-standardization") {
  std::vector<MetricsVector> v(3);
  for (int i = 0; i < 3; ++i) {
    v[static_cast<std::size_t>(i)].reaction_time = i + 1;
    v[static_cast<std::size_t>(i)].force_overshoot = 2;
    v[static_cast<std::size_t>(i)].in_range_time = 0.1 * i * i;
  }
  const StandardizedMetrics z = zstandardize(v);
  CHECK(z.values[0].reaction_time == doctest::Approx(-1));
  CHECK(z.values[1].reaction_time == doctest::Approx(0));
  CHECK(z.values[2].reaction_time == doctest::Approx(1));
  for (const auto& x : z.values) CHECK(x.force_overshoot == 0.0);
  CHECK(z.params.degenerate[static_cast<std::size_t>(Metric::force_overshoot)]);
  CHECK(std::any_of(z.warnings.begin(), z.warnings.end(),
                    [](const std::string& w) { return w.find("force_overshoot") != std::string::npos; }));

  const StandardizedMetrics twice = zstandardize(z.values);
  for (std::size_t i = 0; i < 3; ++i)
    for (Metric m : kAllMetrics) CHECK(twice.values[i].at(m) == doctest::Approx(z.values[i].at(m)).epsilon(1e-12));

  CHECK(error_of([&] { zstandardize(std::span<const MetricsVector>(v).first(1)); }) ==
        ErrorCode::insufficient_data);
}

TEST_CASE("resampling keeps linear segments") {
  ForceTrace t;
  t.dt = 0.008;
  for (int i = 0; i < 375; ++i) t.samples.push_back(0.001 * i);
  const ForceTrace r = resample(t, 0.001);
  CHECK(r.samples.size() == 3000);
  for (std::size_t j = 0; j < 2990; ++j) CHECK(r.samples[j] == doctest::Approx(0.001 * (j / 8.0)).epsilon(1e-9));
}

TEST_CASE("metric names round trip") {
  for (Metric m : kAllMetrics) CHECK(metric_from_name(metric_name(m)) == m);
  CHECK_FALSE(metric_from_name("nope").has_value());
}
