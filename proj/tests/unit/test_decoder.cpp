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
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "flowtrace/decoder.hpp"
#include "flowtrace/simulator.hpp"

using namespace flowtrace;
using fixtures::error_of;

namespace {

// Rows with independent standard-normal metrics.
std::vector<MetricsVector> random_rows(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> z;
  std::vector<MetricsVector> out(n);
  for (auto& v : out)
    for (Metric m : kAllMetrics) v.at(m) = z(rng);
  return out;
}

// Independent least squares: normal equations on raw columns, Gauss-Jordan.
std::vector<double> ols_raw(const std::vector<double>& y, const std::vector<MetricsVector>& x,
                            const Subset& s) {
  const std::size_t p = s.size() + 1;
  std::vector<std::vector<double>> a(p, std::vector<double>(p + 1, 0.0));
  for (std::size_t i = 0; i < y.size(); ++i) {
    std::vector<double> row{1.0};
    for (Metric m : s) row.push_back(x[i].at(m));
    for (std::size_t r = 0; r < p; ++r) {
      for (std::size_t c = 0; c < p; ++c) a[r][c] += row[r] * row[c];
      a[r][p] += row[r] * y[i];
    }
  }
  for (std::size_t c = 0; c < p; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < p; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    for (std::size_t r = 0; r < p; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k <= p; ++k) a[r][k] -= f * a[c][k];
    }
  }
  std::vector<double> beta;
  for (std::size_t r = 0; r < p; ++r) beta.push_back(a[r][p] / a[r][r]);
  return beta;
}

}  // namespace

TEST_CASE("exact linear relation is recovered") {
  std::mt19937_64 rng(1);
  auto x = random_rows(rng, 12);
  std::vector<double> y;
  for (const auto& v : x) y.push_back(1.0 + 2.0 * v.in_range_time);
  const DecoderModel m = fit(y, x, {Metric::in_range_time});
  // Back to raw units: slope w/sd, intercept b - w*mean/sd.
  CHECK(m.weights[0] / m.sd[0] == doctest::Approx(2.0));
  CHECK(m.intercept - m.weights[0] * m.mean[0] / m.sd[0] == doctest::Approx(1.0));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(predict(m, x[i]) == doctest::Approx(y[i]));
  CHECK(loocv(y, x, {Metric::in_range_time}).nrmse < 1e-10);
}

TEST_CASE("fit errors") {
  std::mt19937_64 rng(2);
  auto x = random_rows(rng, 6);
  std::vector<double> y(6, 3.0);
  y[0] = 4.0;
  CHECK(error_of([&] { fit(std::span(y).first(4), std::span(x).first(4),
                           {Metric::reaction_time, Metric::arriving_time, Metric::in_range_time}); }) ==
        ErrorCode::insufficient_data);
  auto flat = x;
  for (auto& v : flat) v.success_rate = 0.6;
  CHECK(error_of([&] { fit(y, flat, {Metric::success_rate}); }) == ErrorCode::degenerate);
  auto twin = x;
  for (auto& v : twin) v.arriving_time = 3.0 * v.reaction_time - 1.0;
  CHECK(error_of([&] { fit(y, twin, {Metric::reaction_time, Metric::arriving_time}); }) ==
        ErrorCode::degenerate);
  CHECK(error_of([&] { fit(y, x, {}); }) == ErrorCode::invalid_input);
  CHECK(error_of([&] { fit(std::span(y).first(5), x, {Metric::reaction_time}); }) ==
        ErrorCode::invalid_input);
}

TEST_CASE("fit agrees with the normal equations") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(0.0, 0.5);
  const Subset s{Metric::arriving_time, Metric::force_overshoot, Metric::success_rate};
  for (int rep = 0; rep < 20; ++rep) {
    auto x = random_rows(rng, 15);
    for (auto& v : x) v.force_overshoot = 10 * v.force_overshoot + 3;  // scale should not matter
    std::vector<double> y;
    for (const auto& v : x) y.push_back(4 + v.arriving_time - 0.05 * v.force_overshoot + noise(rng));
    const DecoderModel m = fit(y, x, s);
    const auto beta = ols_raw(y, x, s);
    for (const auto& v : x) {
      const double oracle =
          beta[0] + beta[1] * v.arriving_time + beta[2] * v.force_overshoot + beta[3] * v.success_rate;
      CHECK(predict(m, v) == doctest::Approx(oracle).epsilon(1e-9));
    }
  }
}

TEST_CASE("predict example") {
  DecoderModel m;
  m.subset = {Metric::reaction_time, Metric::in_range_time};
  m.weights = {0.5, -1.0};
  m.intercept = 4.0;
  m.mean = {0.3, 1.0};
  m.sd = {0.1, 0.5};
  MetricsVector v;
  v.reaction_time = 0.4;  // z = 1
  v.in_range_time = 2.0;  // z = 2
  CHECK(predict(m, v) == doctest::Approx(4.0 + 0.5 - 2.0));
}

TEST_CASE("nrmse") {
  const std::vector<double> a{3, 4}, b{4, 3};
  CHECK(nrmse(a, b) == doctest::Approx(std::sqrt(2.0 / 25.0)));
  CHECK(nrmse(a, a) == 0.0);
  const std::vector<double> z{0, 0};
  CHECK(error_of([&] { nrmse(z, a); }) == ErrorCode::undefined);
  CHECK(error_of([&] { nrmse(a, std::vector<double>{1}); }) == ErrorCode::invalid_input);
}

TEST_CASE("leave-one-out predictions use held-out fits") {
  std::mt19937_64 rng(4);
  auto x = random_rows(rng, 10);
  std::vector<double> y;
  std::normal_distribution<double> noise(0.0, 0.3);
  for (const auto& v : x) y.push_back(4 + v.completing_time + noise(rng));
  const Subset s{Metric::completing_time};
  const LoocvResult r = loocv(y, x, s);
  for (std::size_t k = 0; k < y.size(); ++k) {
    std::vector<double> yy;
    std::vector<MetricsVector> xx;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (i != k) yy.push_back(y[i]), xx.push_back(x[i]);
    const auto beta = ols_raw(yy, xx, s);
    CHECK(r.predictions[k] == doctest::Approx(beta[0] + beta[1] * x[k].completing_time));
  }
  CHECK(r.nrmse == doctest::Approx(nrmse(y, r.predictions)));
}

TEST_CASE("subset enumeration") {
  const auto all = enumerate_subsets(4);
  CHECK(all.size() == 162);
  CHECK(all.front() == Subset{Metric::reaction_time});
  CHECK(all[8] == Subset{Metric::reaction_time, Metric::arriving_time});
  CHECK(all.back() == Subset{Metric::force_overshoot, Metric::average_deviation,
                             Metric::average_adjust_rate, Metric::success_rate});
  for (std::size_t i = 1; i < all.size(); ++i) CHECK(all[i - 1].size() <= all[i].size());
  CHECK(enumerate_subsets(8).size() == 255);
  CHECK(error_of([] { enumerate_subsets(0); }) == ErrorCode::invalid_input);
}

TEST_CASE("selection is the brute-force minimum") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0.0, 0.4);
  for (int rep = 0; rep < 5; ++rep) {
    auto x = random_rows(rng, 12);
    std::vector<double> y;
    for (const auto& v : x) y.push_back(4 + 0.8 * v.average_deviation - 0.5 * v.success_rate + noise(rng));
    const Selection sel = select_subset(y, x, 2);
    CHECK(sel.candidates == 36);
    double best = 1e300;
    Subset arg;
    for (const auto& s : enumerate_subsets(2)) {
      const double e = loocv(y, x, s).nrmse;
      if (e < best) best = e, arg = s;
    }
    CHECK(sel.subset == arg);
    CHECK(sel.loocv.nrmse == best);
    const DecoderModel refit = fit(y, x, sel.subset);
    CHECK(sel.model.weights == refit.weights);
  }
}

TEST_CASE("informative metric is selected") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> noise(0.0, 0.25);
  int hits = 0;
  const int reps = 60;
  for (int rep = 0; rep < reps; ++rep) {
    auto x = random_rows(rng, 12);
    std::vector<double> y;
    for (const auto& v : x) y.push_back(4 + 1.5 * v.in_range_time + noise(rng));
    const Selection sel = select_subset(y, x, 4);
    hits += std::count(sel.subset.begin(), sel.subset.end(), Metric::in_range_time) > 0;
  }
  CHECK(hits >= 0.95 * reps);
}

TEST_CASE("degenerate candidates are skipped") {
  std::mt19937_64 rng(7);
  auto x = random_rows(rng, 10);
  for (auto& v : x) v.success_rate = 1.0;
  std::vector<double> y;
  for (const auto& v : x) y.push_back(4 + v.reaction_time);
  const Selection sel = select_subset(y, x, 1);
  CHECK(sel.degenerate_candidates == 1);
  CHECK(sel.subset == Subset{Metric::reaction_time});
  for (auto& v : x)
    for (Metric m : kAllMetrics) v.at(m) = 1.0;
  CHECK(error_of([&] { select_subset(y, x, 2); }) == ErrorCode::degenerate);
}

TEST_CASE("relative contributions") {
  DecoderModel m;
  m.weights = {2, -1, 1};
  const auto c = relative_contributions(m);
  CHECK(c[0] == doctest::Approx(0.5));
  CHECK(c[1] == doctest::Approx(0.25));
  CHECK(c[2] == doctest::Approx(0.25));
  m.weights = {0, 0};
  CHECK(error_of([&] { relative_contributions(m); }) == ErrorCode::undefined);
}

TEST_CASE("decoded time series") {
  const SimParams p;
  const TrialConfig cfg;
  const ProbeSchedule sched = schedule_probes(1, 60, 4, 12, 3);
  const FlowProcess flow = gen_flow_process(FlowKind::ou, 60, 4);
  const SessionData d = simulate_subject(p, cfg, sched, flow, 0.5, 5);

  std::vector<double> y;
  std::vector<MetricsVector> x;
  for (const auto& pr : d.probes) {
    y.push_back(pr.intensity);
    x.push_back(probe_metrics(d.trials, pr.trial_index, 5));
  }
  const DecoderModel m = fit(y, x, {Metric::in_range_time});
  const DecodedSeries s = decode_timeseries(m, d.trials, 5);
  CHECK(s.first_trial == 5);
  CHECK(s.values.size() == 56);
  for (std::size_t i = 0; i < d.probes.size(); ++i)
    CHECK(s.values[static_cast<std::size_t>(d.probes[i].trial_index - 5)] == predict(m, x[i]));

  SUBCASE("affine relabelling maps through the series") {
    std::vector<double> y2;
    for (double v : y) y2.push_back(2.0 * v - 1.0);
    const DecodedSeries s2 = decode_timeseries(fit(y2, x, {Metric::in_range_time}), d.trials, 5);
    for (std::size_t j = 0; j < s.values.size(); ++j)
      CHECK(s2.values[j] == doctest::Approx(2.0 * s.values[j] - 1.0));
  }
  SUBCASE("linear in the weights") {
    DecoderModel a = m, b = m;
    a.intercept = 0;
    b.intercept = 0;
    b.weights[0] *= 3.0;
    const auto sa = decode_timeseries(a, d.trials, 5);
    const auto sb = decode_timeseries(b, d.trials, 5);
    for (std::size_t j = 0; j < sa.values.size(); ++j)
      CHECK(sb.values[j] == doctest::Approx(3.0 * sa.values[j]));
  }
  CHECK(error_of([&] { decode_timeseries(m, std::span(d.trials).first(4), 5); }) ==
        ErrorCode::insufficient_data);
}

TEST_CASE("structured labels decode better than shuffled labels") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> noise(0.0, 0.4);
  int wins = 0;
  const int reps = 40;
  for (int rep = 0; rep < reps; ++rep) {
    auto x = random_rows(rng, 12);
    std::vector<double> y;
    for (const auto& v : x) y.push_back(4 + v.average_adjust_rate - 0.7 * v.arriving_time + noise(rng));
    auto shuffled = y;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    wins += select_subset(y, x, 2).loocv.nrmse < select_subset(shuffled, x, 2).loocv.nrmse;
  }
  CHECK(wins >= 0.95 * reps);
}
