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


// End-to-end analysis shared by the CLI and the live service: synthetic
// cohorts, per-subject decoding with significance tests, and the JSON report.

#ifndef FLOWTRACE_PIPELINE_HPP_
#define FLOWTRACE_PIPELINE_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowtrace/dataio.hpp"
#include "flowtrace/decoder.hpp"
#include "flowtrace/simulator.hpp"
#include "flowtrace/stats.hpp"

namespace flowtrace {

struct CohortOptions {
  int subjects = 24;
  std::uint64_t seed = 7;
  TrialConfig config;
  SimParams sim;
  FlowKind flow_kind = FlowKind::ou;
  FlowProcessParams flow;
  int sessions = 3;
  int trials_per_session = 100;
  int probes_per_session = 4;
  int min_gap = 12;
  double report_noise_sd = 0.5;
  // Skill phase: the staircase runs at skill_intensity and its measured skill
  // becomes the main-session band width.
  bool measure_skill = true;
  double skill_intensity = 4.0;
  int skill_trials = 50;
  int skill_max_trials = 200;
  StaircaseParams staircase;
};

std::string subject_name(int index);  // "S01", "S02", ...

// Subject `index` (0-based) of the cohort; independent of other subjects.
SessionData simulate_cohort_subject(const CohortOptions& options, int index);

struct AnalysisOptions {
  int random_replicates = 1000;
  int permutation_replicates = 1000;
  std::uint64_t seed = 0;
  bool qc = true;
  int max_subset = 4;
  int window = 5;
  double fs = 1.0 / 3.0;  // decoded series sample rate, one value per trial
  double power_fraction = 0.7;
  LabelDraw label_draw = LabelDraw::continuous;
  int jobs = 1;  // subject-level threads; never changes results
  bool significance = true;  // false skips the random and permutation tests
};

inline constexpr int kDefaultReplicates = 1000;

struct SubjectAnalysis {
  std::string subject_id;
  QcResult qc;
  bool included = true;
  bool partial = false;
  int trials = 0;
  std::optional<std::string> error;
  std::vector<int> probe_trials;
  std::vector<double> reported;
  std::vector<MetricsVector> probe_metrics;
  Selection selection;
  std::vector<double> contributions;
  std::optional<TestResult> fit_correlation;
  SignificanceResult random;
  SignificanceResult permutation;
  DecodedSeries decoded;
  std::optional<PsdEstimate> psd;
  std::optional<double> timescale;
  std::optional<double> truth_correlation;
  std::vector<std::string> warnings;
};

// Probe-window metrics and intensities for every probe whose window fits.
void collect_probe_rows(const SessionData& data, int window, std::vector<int>& trials,
                        std::vector<double>& intensity, std::vector<MetricsVector>& metrics);

SubjectAnalysis analyze_subject(const SessionData& data, const AnalysisOptions& options);

std::vector<SubjectAnalysis> analyze_cohort(std::span<const SessionData> data,
                                            const AnalysisOptions& options);

Json build_report(std::span<const SubjectAnalysis> subjects, const AnalysisOptions& options);

// Convenience: analyze_cohort followed by build_report.
Json run_pipeline(std::span<const SessionData> data, const AnalysisOptions& options);

// Cohort block of per-subject 70%-power timescales.
Json psd_summary(std::span<const SubjectAnalysis> subjects);

}  // namespace flowtrace

#endif  // FLOWTRACE_PIPELINE_HPP_
