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


// Linear flow decoder: z-standardised metric subset -> intensity, with
// leave-one-out cross-validation and exhaustive subset selection.

#ifndef FLOWTRACE_DECODER_HPP_
#define FLOWTRACE_DECODER_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "flowtrace/metrics.hpp"
#include "flowtrace/task_core.hpp"

namespace flowtrace {

using Subset = std::vector<Metric>;

struct DecoderModel {
  Subset subset;                // canonical metric order
  std::vector<double> weights;  // one per subset member, standardised units
  double intercept = 0;
  std::vector<double> mean;     // fit-time standardisation of each member
  std::vector<double> sd;
};

// Ordinary least squares on the standardised subset plus an intercept.
// Throws insufficient_data with fewer than |subset| + 2 rows and degenerate on
// a constant column or a rank-deficient design.
DecoderModel fit(std::span<const double> intensity, std::span<const MetricsVector> metrics,
                 const Subset& subset);

double predict(const DecoderModel& model, const MetricsVector& metrics);

// sqrt(sum (pred - truth)^2 / sum truth^2). Throws undefined on all-zero truth.
double nrmse(std::span<const double> truth, std::span<const double> predicted);

struct LoocvResult {
  std::vector<double> predictions;
  double nrmse = 0;
};

LoocvResult loocv(std::span<const double> intensity, std::span<const MetricsVector> metrics,
                  const Subset& subset);

// Every non-empty subset of the eight metrics with at most max_size members,
// smaller subsets first, lexicographic in canonical order within a size.
std::vector<Subset> enumerate_subsets(int max_size);

struct Selection {
  Subset subset;
  DecoderModel model;  // refit on all rows
  LoocvResult loocv;
  int candidates = 0;
  int degenerate_candidates = 0;
};

// Minimum LOOCV NRMSE; ties go to the earlier candidate of enumerate_subsets.
Selection select_subset(std::span<const double> intensity, std::span<const MetricsVector> metrics,
                        int max_size = 4);

// |w_i| / sum |w_j|. Throws undefined when every weight is zero.
std::vector<double> relative_contributions(const DecoderModel& model);

struct DecodedSeries {
  int first_trial = 0;         // 1-based trial index of values[0]
  std::vector<double> values;  // one per trial from first_trial on
};

// Sliding probe window over all trials; values[j] decodes the window ending
// at trial first_trial + j.
DecodedSeries decode_timeseries(const DecoderModel& model, std::span<const TrialRecord> trials,
                                int window = 5);

}  // namespace flowtrace

#endif  // FLOWTRACE_DECODER_HPP_
