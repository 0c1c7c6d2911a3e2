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


#include "flowtrace/decoder.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "flowtrace/error.hpp"

namespace flowtrace {

namespace {

std::string subset_label(const Subset& subset) {
  std::string s;
  for (Metric m : subset) {
    if (!s.empty()) s += '+';
    s += metric_name(m);
  }
  return s;
}

void check_rows(std::span<const double> intensity, std::span<const MetricsVector> metrics,
                const Subset& subset) {
  require(intensity.size() == metrics.size(), ErrorCode::invalid_input,
          "intensity and metrics lengths differ");
  require(!subset.empty() && subset.size() <= static_cast<std::size_t>(kMetricCount),
          ErrorCode::invalid_input, "decoder subset must hold 1 to 8 metrics");
}

}  // namespace

DecoderModel fit(std::span<const double> intensity, std::span<const MetricsVector> metrics,
                 const Subset& subset) {
  check_rows(intensity, metrics, subset);
  const std::size_t n = intensity.size();
  const std::size_t p = subset.size();
  if (n < p + 2)
    fail(ErrorCode::insufficient_data, "fit of " + std::to_string(p) + " metrics needs " +
                                           std::to_string(p + 2) + " probes, have " +
                                           std::to_string(n));

  DecoderModel model;
  model.subset = subset;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p + 1));
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < p; ++j) {
    double mean = 0;
    for (const auto& v : metrics) mean += v.at(subset[j]);
    mean /= static_cast<double>(n);
    double ss = 0;
    for (const auto& v : metrics) ss += (v.at(subset[j]) - mean) * (v.at(subset[j]) - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean))))
      fail(ErrorCode::degenerate, "constant column " + std::string(metric_name(subset[j])));
    model.mean.push_back(mean);
    model.sd.push_back(sd);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    x(r, 0) = 1.0;
    for (std::size_t j = 0; j < p; ++j)
      x(r, static_cast<Eigen::Index>(j + 1)) = (metrics[i].at(subset[j]) - model.mean[j]) / model.sd[j];
    y(r) = intensity[i];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() != static_cast<Eigen::Index>(p + 1))
    fail(ErrorCode::degenerate, "rank-deficient design for " + subset_label(subset));
  const Eigen::VectorXd beta = qr.solve(y);
  model.intercept = beta(0);
  for (std::size_t j = 0; j < p; ++j) {
    const double w = beta(static_cast<Eigen::Index>(j + 1));
    require(std::isfinite(w), ErrorCode::degenerate, "non-finite weight");
    model.weights.push_back(w);
  }
  return model;
}

double predict(const DecoderModel& model, const MetricsVector& metrics) {
  double out = model.intercept;
  for (std::size_t j = 0; j < model.subset.size(); ++j)
    out += model.weights[j] * (metrics.at(model.subset[j]) - model.mean[j]) / model.sd[j];
  return out;
}

double nrmse(std::span<const double> truth, std::span<const double> predicted) {
  require(!truth.empty() && truth.size() == predicted.size(), ErrorCode::invalid_input,
          "nrmse needs equal non-empty lengths");
  double num = 0;
  double den = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    num += (predicted[i] - truth[i]) * (predicted[i] - truth[i]);
    den += truth[i] * truth[i];
  }
  require(den > 0, ErrorCode::undefined, "nrmse of an all-zero truth vector");
  return std::sqrt(num / den);
}

LoocvResult loocv(std::span<const double> intensity, std::span<const MetricsVector> metrics,
                  const Subset& subset) {
  check_rows(intensity, metrics, subset);
  const std::size_t n = intensity.size();
  LoocvResult out;
  out.predictions.resize(n);
  std::vector<double> y;
  std::vector<MetricsVector> x;
  y.reserve(n);
  x.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    y.clear();
    x.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (i == k) continue;
      y.push_back(intensity[i]);
      x.push_back(metrics[i]);
    }
    try {
      out.predictions[k] = predict(fit(y, x, subset), metrics[k]);
    } catch (const Error& e) {
      throw Error(e.code(), "fold " + std::to_string(k + 1) + ": " + e.what());
    }
  }
  out.nrmse = nrmse(intensity, out.predictions);
  return out;
}

std::vector<Subset> enumerate_subsets(int max_size) {
  require(max_size >= 1 && max_size <= kMetricCount, ErrorCode::invalid_input,
          "max subset size must be within 1..8");
  std::vector<Subset> out;
  for (int size = 1; size <= max_size; ++size) {
    // Lexicographic combinations of {0..7} taken `size` at a time.
    std::vector<int> idx(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i) idx[static_cast<std::size_t>(i)] = i;
    while (true) {
      Subset s;
      for (int i : idx) s.push_back(static_cast<Metric>(i));
      out.push_back(std::move(s));
      int i = size - 1;
      while (i >= 0 && idx[static_cast<std::size_t>(i)] == kMetricCount - size + i) --i;
      if (i < 0) break;
      ++idx[static_cast<std::size_t>(i)];
      for (int j = i + 1; j < size; ++j)
        idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
    }
  }
  return out;
}

Selection select_subset(std::span<const double> intensity, std::span<const MetricsVector> metrics,
                        int max_size) {
  Selection best;
  bool found = false;
  for (const Subset& s : enumerate_subsets(max_size)) {
    ++best.candidates;
    LoocvResult r;
    try {
      r = loocv(intensity, metrics, s);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::degenerate && e.code() != ErrorCode::insufficient_data) throw;
      ++best.degenerate_candidates;
      continue;
    }
    if (!found || r.nrmse < best.loocv.nrmse) {
      best.subset = s;
      best.loocv = std::move(r);
      found = true;
    }
  }
  require(found, ErrorCode::degenerate, "every candidate subset is degenerate");
  best.model = fit(intensity, metrics, best.subset);
  return best;
}

std::vector<double> relative_contributions(const DecoderModel& model) {
  double total = 0;
  for (double w : model.weights) total += std::abs(w);
  require(total > 0, ErrorCode::undefined, "all decoder weights are zero");
  std::vector<double> out;
  for (double w : model.weights) out.push_back(std::abs(w) / total);
  return out;
}

DecodedSeries decode_timeseries(const DecoderModel& model, std::span<const TrialRecord> trials,
                                int window) {
  require(window >= 1, ErrorCode::invalid_input, "decode window must be positive");
  require(static_cast<int>(trials.size()) >= window, ErrorCode::insufficient_data,
          "decoding needs at least " + std::to_string(window) + " trials");
  DecodedSeries out;
  out.first_trial = window;
  for (int k = window; k <= static_cast<int>(trials.size()); ++k)
    out.values.push_back(predict(model, probe_metrics(trials, k, window)));
  return out;
}

}  // namespace flowtrace
