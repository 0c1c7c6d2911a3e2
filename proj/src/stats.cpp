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


#include "flowtrace/stats.hpp"

#include <fftw3.h>

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <mutex>
#include <numbers>
#include <numeric>
#include <random>

#include "flowtrace/error.hpp"
#include "flowtrace/rng.hpp"

namespace flowtrace {

namespace {

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_sd(std::span<const double> v, double mean) {
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double two_tailed_p(double t, double df) {
  if (!std::isfinite(t)) return 0.0;
  boost::math::students_t dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

// Plans are not thread-safe to create; execution on fresh arrays is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

template <typename Draw>
SignificanceResult run_replicates(std::span<const double> intensity,
                                  std::span<const MetricsVector> metrics, const Subset& subset,
                                  int replicates, std::uint64_t seed, Draw draw) {
  require(replicates >= 1, ErrorCode::invalid_input, "replicate count must be positive");
  SignificanceResult out;
  out.requested = replicates;
  out.true_nrmse = loocv(intensity, metrics, subset).nrmse;
  std::vector<double> labels(intensity.size());
  int below = 0;
  for (int r = 0; r < replicates; ++r) {
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(r)});
    draw(rng, labels);
    double e = 0;
    try {
      e = loocv(labels, metrics, subset).nrmse;
    } catch (const Error& err) {
      if (err.code() != ErrorCode::degenerate && err.code() != ErrorCode::undefined) throw;
      ++out.dropped;
      continue;
    }
    out.null_nrmse.push_back(e);
    if (e < out.true_nrmse) ++below;
  }
  require(!out.null_nrmse.empty(), ErrorCode::degenerate, "every replicate was degenerate");
  out.p_value = static_cast<double>(below) / static_cast<double>(out.null_nrmse.size());
  if (out.dropped > 0)
    out.warnings.push_back(std::to_string(out.dropped) + " degenerate replicates dropped");
  return out;
}

}  // namespace

MedianSplit median_split(std::span<const double> intensity) {
  require(intensity.size() >= 2, ErrorCode::insufficient_data, "median split needs two values");
  std::vector<double> s(intensity.begin(), intensity.end());
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  MedianSplit out;
  out.median = n % 2 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
  out.degenerate = s.front() == s.back();
  for (double v : intensity) out.in_flow.push_back(v > out.median);
  return out;
}

TestResult paired_t(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 2, ErrorCode::invalid_input,
          "paired t-test needs two equal samples of length >= 2");
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] - y[i];
  const double m = mean_of(d);
  const double sd = sample_sd(d, m);
  require(sd > 1e-15 * std::max(1.0, std::abs(m)), ErrorCode::degenerate,
          "paired differences have zero variance");
  TestResult r;
  r.df = static_cast<double>(d.size() - 1);
  r.statistic = m / (sd / std::sqrt(static_cast<double>(d.size())));
  r.p_value = two_tailed_p(r.statistic, r.df);
  r.effect_size = m / sd;
  return r;
}

TestResult pearson(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 3, ErrorCode::invalid_input,
          "pearson needs two equal samples of length >= 3");
  const double mx = mean_of(x);
  const double my = mean_of(y);
  double sxy = 0;
  double sxx = 0;
  double syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  require(sxx > 0 && syy > 0, ErrorCode::degenerate, "pearson input has zero variance");
  TestResult res;
  const double r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  res.effect_size = r;
  res.df = static_cast<double>(x.size() - 2);
  res.statistic = std::abs(r) < 1 ? r * std::sqrt(res.df / (1 - r * r))
                                  : std::copysign(HUGE_VAL, r);
  res.p_value = two_tailed_p(res.statistic, res.df);
  return res;
}

std::vector<double> bh_fdr(std::span<const double> p_values) {
  const std::size_t m = p_values.size();
  for (double p : p_values)
    require(p >= 0 && p <= 1, ErrorCode::invalid_input, "p-value outside [0, 1]");
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
  std::vector<double> out(m);
  double running = 1.0;
  for (std::size_t r = m; r-- > 0;) {
    const std::size_t i = order[r];
    running = std::min(running, p_values[i] * (static_cast<double>(m) / static_cast<double>(r + 1)));
    out[i] = running;
  }
  return out;
}

SignificanceResult random_test(std::span<const double> intensity,
                               std::span<const MetricsVector> metrics, const Subset& subset,
                               int replicates, std::uint64_t seed, LabelDraw draw) {
  require(!intensity.empty(), ErrorCode::insufficient_data, "no probes");
  const auto [lo_it, hi_it] = std::minmax_element(intensity.begin(), intensity.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (draw == LabelDraw::continuous) {
    return run_replicates(intensity, metrics, subset, replicates, seed,
                          [lo, hi](Rng& rng, std::vector<double>& labels) {
                            std::uniform_real_distribution<double> u(lo, hi);
                            for (double& v : labels) v = lo == hi ? lo : u(rng);
                          });
  }
  const auto k_lo = static_cast<int>(std::ceil(lo * 3 - 1e-9));
  const auto k_hi = static_cast<int>(std::floor(hi * 3 + 1e-9));
  return run_replicates(intensity, metrics, subset, replicates, seed,
                        [k_lo, k_hi](Rng& rng, std::vector<double>& labels) {
                          std::uniform_int_distribution<int> u(k_lo, k_hi);
                          for (double& v : labels) v = u(rng) / 3.0;
                        });
}

SignificanceResult permutation_test(std::span<const double> intensity,
                                    std::span<const MetricsVector> metrics, const Subset& subset,
                                    int replicates, std::uint64_t seed) {
  require(!intensity.empty(), ErrorCode::insufficient_data, "no probes");
  const bool constant = std::all_of(intensity.begin(), intensity.end(),
                                    [&](double v) { return v == intensity.front(); });
  if (constant) {
    SignificanceResult out;
    out.requested = replicates;
    out.p_value = 1.0;
    out.true_nrmse = loocv(intensity, metrics, subset).nrmse;
    out.null_nrmse.assign(static_cast<std::size_t>(replicates), out.true_nrmse);
    out.warnings.push_back("constant intensities: every permutation is identical");
    return out;
  }
  std::vector<double> base(intensity.begin(), intensity.end());
  return run_replicates(intensity, metrics, subset, replicates, seed,
                        [&base](Rng& rng, std::vector<double>& labels) {
                          labels = base;
                          std::shuffle(labels.begin(), labels.end(), rng);
                        });
}

QcResult qc_subject(const SessionData& data) {
  QcResult out;
  std::size_t wins = 0;
  for (const auto& t : data.trials) wins += t.success ? 1 : 0;
  out.success_rate =
      data.trials.empty() ? 0.0 : static_cast<double>(wins) / static_cast<double>(data.trials.size());
  if (!data.probes.empty()) {
    const auto [lo, hi] = std::minmax_element(
        data.probes.begin(), data.probes.end(),
        [](const FlowProbe& a, const FlowProbe& b) { return a.intensity < b.intensity; });
    out.intensity_range = hi->intensity - lo->intensity;
  }
  if (out.success_rate > 0.9) {
    out.pass = false;
    out.reasons.push_back("success-too-high");
  }
  if (out.intensity_range < 1.0 - 1e-9) {
    out.pass = false;
    out.reasons.push_back("range<1");
  }
  return out;
}

std::string window_name(Window w) { return w == Window::hann ? "hann" : "rectangular"; }

PsdEstimate welch_psd(std::span<const double> series, double fs, WelchOptions options) {
  require(fs > 0, ErrorCode::invalid_input, "sampling frequency must be positive");
  require(options.overlap >= 0 && options.overlap < 1, ErrorCode::invalid_input,
          "overlap must be within [0, 1)");
  const int n = static_cast<int>(series.size());
  int len = options.segment_length;
  if (len == 0) {
    len = 8;
    while (len * 2 <= n / 4) len *= 2;
  }
  require(len >= 8, ErrorCode::invalid_input, "segment length must be at least 8");
  require(n >= len, ErrorCode::insufficient_data,
          "series of " + std::to_string(n) + " samples shorter than segment length " +
              std::to_string(len));
  for (double v : series) require(std::isfinite(v), ErrorCode::invalid_input, "non-finite sample");

  std::vector<double> w(static_cast<std::size_t>(len), 1.0);
  if (options.window == Window::hann)
    for (int i = 0; i < len; ++i)
      w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / len);
  double wss = 0;
  for (double v : w) wss += v * v;

  const int step = std::max(1, len - static_cast<int>(std::floor(options.overlap * len)));
  const int segments = 1 + (n - len) / step;
  const int bins = len / 2 + 1;

  double* in = fftw_alloc_real(static_cast<std::size_t>(len));
  fftw_complex* spec = fftw_alloc_complex(static_cast<std::size_t>(bins));
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_1d(len, in, spec, FFTW_ESTIMATE);
  }

  PsdEstimate out;
  out.segment_length = len;
  out.overlap = options.overlap;
  out.window = options.window;
  out.segments = segments;
  out.density.assign(static_cast<std::size_t>(bins), 0.0);
  for (int s = 0; s < segments; ++s) {
    const auto seg = series.subspan(static_cast<std::size_t>(s * step), static_cast<std::size_t>(len));
    const double mu = options.detrend == Detrend::mean ? mean_of(seg) : 0.0;
    for (int i = 0; i < len; ++i)
      in[i] = (seg[static_cast<std::size_t>(i)] - mu) * w[static_cast<std::size_t>(i)];
    fftw_execute(plan);
    for (int k = 0; k < bins; ++k) {
      double p = (spec[k][0] * spec[k][0] + spec[k][1] * spec[k][1]) / (fs * wss);
      if (k > 0 && !(len % 2 == 0 && k == len / 2)) p *= 2.0;
      out.density[static_cast<std::size_t>(k)] += p / segments;
    }
  }
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(spec);
  for (int k = 0; k < bins; ++k) out.frequency.push_back(k * fs / len);
  return out;
}

double power_timescale(const PsdEstimate& psd, double fraction) {
  require(fraction > 0 && fraction < 1, ErrorCode::invalid_input,
          "power fraction must be within (0, 1)");
  const std::size_t bins = psd.density.size();
  require(bins >= 2 && psd.frequency.size() == bins, ErrorCode::invalid_input,
          "PSD needs at least two bins");
  double total = 0;
  for (std::size_t k = 1; k < bins; ++k) total += psd.density[k];
  require(total > 1e-300 && total > 1e-12 * psd.density[0], ErrorCode::undefined,
          "no power outside the DC bin");
  const double target = fraction * total;
  double above = 0;  // power above frequency[k]
  for (std::size_t k = bins - 1; k >= 1; --k) {
    const double p = psd.density[k];
    if (above + p >= target) {
      const double width = psd.frequency[k] - psd.frequency[k - 1];
      const double f = psd.frequency[k] - width * (target - above) / p;
      return 1.0 / f;
    }
    above += p;
  }
  fail(ErrorCode::undefined, "power fraction not reached");
}

}  // namespace flowtrace
