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


#ifndef FLOWTRACE_STATS_HPP_
#define FLOWTRACE_STATS_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "flowtrace/decoder.hpp"
#include "flowtrace/session.hpp"

namespace flowtrace {

struct TestResult {
  double statistic = 0;
  double p_value = 1;
  double effect_size = 0;  // Cohen's d or Pearson r
  double df = 0;
};

struct MedianSplit {
  double median = 0;
  std::vector<bool> in_flow;  // strictly above the median
  bool degenerate = false;    // every value equal
};

MedianSplit median_split(std::span<const double> intensity);

// Two-tailed paired t-test on x - y; effect size mean(diff) / sd(diff).
TestResult paired_t(std::span<const double> x, std::span<const double> y);

TestResult pearson(std::span<const double> x, std::span<const double> y);

// Benjamini-Hochberg step-up adjustment, in input order.
std::vector<double> bh_fdr(std::span<const double> p_values);

enum class LabelDraw { continuous, likert_grid };

struct SignificanceResult {
  double p_value = 1;
  double true_nrmse = 0;
  std::vector<double> null_nrmse;  // surviving replicates, replicate order
  int requested = 0;
  int dropped = 0;                 // degenerate replicates
  std::vector<std::string> warnings;
};

// Replicates draw labels uniformly on [min, max] of the true intensities (or
// on the 1/3-step response grid) and rerun LOOCV on `subset`. p is the share
// of surviving replicates with NRMSE strictly below the true NRMSE.
SignificanceResult random_test(std::span<const double> intensity,
                               std::span<const MetricsVector> metrics, const Subset& subset,
                               int replicates, std::uint64_t seed,
                               LabelDraw draw = LabelDraw::continuous);

// As random_test, with replicate labels a permutation of the true ones.
SignificanceResult permutation_test(std::span<const double> intensity,
                                    std::span<const MetricsVector> metrics, const Subset& subset,
                                    int replicates, std::uint64_t seed);

struct QcResult {
  bool pass = true;
  std::vector<std::string> reasons;
  double success_rate = 0;
  double intensity_range = 0;
};

// Rejects subjects whose success rate exceeds 0.9 or whose self-reports span
// less than one scale point.
QcResult qc_subject(const SessionData& data);

enum class Window { hann, rectangular };
enum class Detrend { none, mean };

struct WelchOptions {
  int segment_length = 0;  // 0 picks the largest power of two <= N/4 (>= 8)
  double overlap = 0.5;
  Window window = Window::hann;
  Detrend detrend = Detrend::none;  // applied per segment
};

struct PsdEstimate {
  std::vector<double> frequency;  // Hz, 0 .. fs/2
  std::vector<double> density;    // one-sided, units^2 / Hz
  int segment_length = 0;
  double overlap = 0;
  Window window = Window::hann;
  int segments = 0;
};

PsdEstimate welch_psd(std::span<const double> series, double fs, WelchOptions options = {});

// Period 1/f* of the highest frequency f* such that the non-DC power above f*
// is at least `fraction` of the non-DC total. Each bin's power is spread
// uniformly over the interval ending at its frequency.
double power_timescale(const PsdEstimate& psd, double fraction = 0.7);

std::string window_name(Window w);

}  // namespace flowtrace

#endif  // FLOWTRACE_STATS_HPP_
