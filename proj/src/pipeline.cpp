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


#include "flowtrace/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <thread>

#include "flowtrace/error.hpp"
#include "flowtrace/rng.hpp"
#include "flowtrace/version.hpp"

namespace flowtrace {

namespace {

std::string describe(const Error& e) { return std::string(error_code_name(e.code())) + ": " + e.what(); }

Json names_of(const Subset& s) {
  Json out = Json::array();
  for (Metric m : s) out.push_back(std::string(metric_name(m)));
  return out;
}

Json nullable(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

Json significance_json(const SignificanceResult& r) {
  Json j;
  j["p_value"] = r.p_value;
  j["true_nrmse"] = r.true_nrmse;
  j["replicates"] = r.requested;
  j["dropped"] = r.dropped;
  j["null_mean_nrmse"] = r.null_nrmse.empty() ? Json(nullptr) : Json(mean_of(r.null_nrmse));
  j["warnings"] = r.warnings;
  return j;
}

bool usable(const SubjectAnalysis& s) { return s.included && !s.error; }

// In-flow vs out-flow comparison of z-standardised probe metrics, paired
// across subjects, and pooled metric-intensity correlations.
Json metric_tests(std::span<const SubjectAnalysis> subjects) {
  std::array<std::vector<double>, kMetricCount> in_mean;
  std::array<std::vector<double>, kMetricCount> out_mean;
  std::array<std::vector<double>, kMetricCount> pooled_metric;
  std::vector<double> pooled_intensity;
  for (const auto& s : subjects) {
    if (!usable(s) || s.probe_metrics.size() < 2) continue;
    const StandardizedMetrics z = zstandardize(s.probe_metrics);
    const MedianSplit split = median_split(s.reported);
    pooled_intensity.insert(pooled_intensity.end(), s.reported.begin(), s.reported.end());
    for (Metric m : kAllMetrics) {
      const auto k = static_cast<std::size_t>(m);
      double si = 0, so = 0;
      int ni = 0, no = 0;
      for (std::size_t j = 0; j < z.values.size(); ++j) {
        const double v = z.values[j].at(m);
        pooled_metric[k].push_back(v);
        if (split.in_flow[j]) {
          si += v;
          ++ni;
        } else {
          so += v;
          ++no;
        }
      }
      if (ni > 0 && no > 0) {
        in_mean[k].push_back(si / ni);
        out_mean[k].push_back(so / no);
      }
    }
  }
  std::vector<double> t_p;
  std::vector<double> r_p;
  std::vector<Json> rows;
  for (Metric m : kAllMetrics) {
    const auto k = static_cast<std::size_t>(m);
    Json row;
    row["metric"] = std::string(metric_name(m));
    row["subjects"] = in_mean[k].size();
    row["in_flow_mean_z"] = in_mean[k].empty() ? Json(nullptr) : Json(mean_of(in_mean[k]));
    row["out_flow_mean_z"] = out_mean[k].empty() ? Json(nullptr) : Json(mean_of(out_mean[k]));
    try {
      const TestResult t = paired_t(in_mean[k], out_mean[k]);
      row["t"] = t.statistic;
      row["df"] = t.df;
      row["p"] = t.p_value;
      row["cohen_d"] = t.effect_size;
      t_p.push_back(t.p_value);
    } catch (const Error&) {
      row["t"] = nullptr;
      row["df"] = nullptr;
      row["p"] = nullptr;
      row["cohen_d"] = nullptr;
    }
    try {
      const TestResult r = pearson(pooled_intensity, pooled_metric[k]);
      row["r"] = r.effect_size;
      row["r_p"] = r.p_value;
      r_p.push_back(r.p_value);
    } catch (const Error&) {
      row["r"] = nullptr;
      row["r_p"] = nullptr;
    }
    rows.push_back(std::move(row));
  }
  const auto t_adj = bh_fdr(t_p);
  const auto r_adj = bh_fdr(r_p);
  std::size_t ti = 0, ri = 0;
  Json out = Json::array();
  for (auto& row : rows) {
    row["p_fdr"] = row["p"].is_null() ? Json(nullptr) : Json(t_adj[ti++]);
    row["r_p_fdr"] = row["r_p"].is_null() ? Json(nullptr) : Json(r_adj[ri++]);
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace

std::string subject_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "S%02d", index + 1);
  return buf;
}

SessionData simulate_cohort_subject(const CohortOptions& o, int index) {
  require(index >= 0, ErrorCode::invalid_input, "subject index must be non-negative");
  const std::uint64_t s = derive_seed(o.seed, {static_cast<std::uint64_t>(index)});
  const ProbeSchedule schedule = schedule_probes(o.sessions, o.trials_per_session,
                                                 o.probes_per_session, o.min_gap, derive_seed(s, {1}));
  const FlowProcess flow =
      gen_flow_process(o.flow_kind, o.sessions * o.trials_per_session, derive_seed(s, {2}), o.flow);

  TrialConfig config = o.config;
  StaircaseRecord stair;
  stair.params = o.staircase;
  if (o.measure_skill) {
    const Staircase sc = simulate_staircase(o.sim, config, o.staircase, o.skill_intensity,
                                            o.skill_trials, o.skill_max_trials, 10, derive_seed(s, {3}));
    stair.history = sc.history();
    if (sc.transition_points().size() >= 10) {
      stair.measured_skill = sc.measured_skill();
      config.band_width = *stair.measured_skill;
    }
  }
  SessionData d = simulate_subject(o.sim, config, schedule, flow, o.report_noise_sd, derive_seed(s, {4}));
  d.subject_id = subject_name(index);
  d.staircase = std::move(stair);
  d.provenance.seed = s;
  d.provenance.tool_version = kVersion;
  d.provenance.source = "simulated";
  return d;
}

void collect_probe_rows(const SessionData& data, int window, std::vector<int>& trials,
                        std::vector<double>& intensity, std::vector<MetricsVector>& metrics) {
  trials.clear();
  intensity.clear();
  metrics.clear();
  for (const auto& p : data.probes) {
    if (p.trial_index < window || p.trial_index > static_cast<int>(data.trials.size())) continue;
    trials.push_back(p.trial_index);
    intensity.push_back(p.intensity);
    metrics.push_back(probe_metrics(data.trials, p.trial_index, window));
  }
}

SubjectAnalysis analyze_subject(const SessionData& data, const AnalysisOptions& options) {
  SubjectAnalysis a;
  a.subject_id = data.subject_id;
  a.trials = static_cast<int>(data.trials.size());
  a.partial = data.trials.size() <
              static_cast<std::size_t>(data.sessions) * static_cast<std::size_t>(data.trials_per_session);
  a.qc = qc_subject(data);
  a.included = !options.qc || a.qc.pass;
  if (!a.included) return a;

  const std::uint64_t seed = derive_seed(options.seed, {data.provenance.seed});
  try {
    collect_probe_rows(data, options.window, a.probe_trials, a.reported, a.probe_metrics);
    const int n = static_cast<int>(a.reported.size());
    require(n >= 4, ErrorCode::insufficient_data,
            "decoding needs 4 usable probes, have " + std::to_string(n));
    if (n < static_cast<int>(data.probes.size()))
      a.warnings.push_back(std::to_string(data.probes.size() - a.reported.size()) +
                           " probes precede a full metric window");
    const int max_size = std::min(options.max_subset, n - 3);
    a.selection = select_subset(a.reported, a.probe_metrics, max_size);
    a.contributions = relative_contributions(a.selection.model);
    try {
      a.fit_correlation = pearson(a.reported, a.selection.loocv.predictions);
    } catch (const Error& e) {
      a.warnings.push_back("fit correlation " + describe(e));
    }
    if (options.significance) {
      a.random = random_test(a.reported, a.probe_metrics, a.selection.subset,
                             options.random_replicates, derive_seed(seed, {1}), options.label_draw);
      a.permutation = permutation_test(a.reported, a.probe_metrics, a.selection.subset,
                                       options.permutation_replicates, derive_seed(seed, {2}));
    }
    a.decoded = decode_timeseries(a.selection.model, data.trials, options.window);
    try {
      std::vector<double> centred = a.decoded.values;
      const double m = mean_of(centred);
      for (double& v : centred) v -= m;
      a.psd = welch_psd(centred, options.fs);
      a.timescale = power_timescale(*a.psd, options.power_fraction);
    } catch (const Error& e) {
      a.warnings.push_back("timescale " + describe(e));
    }
    if (data.ground_truth_flow.size() >= data.trials.size()) {
      std::vector<double> truth(data.ground_truth_flow.begin() + (a.decoded.first_trial - 1),
                                data.ground_truth_flow.begin() + static_cast<std::ptrdiff_t>(data.trials.size()));
      try {
        a.truth_correlation = pearson(a.decoded.values, truth).effect_size;
      } catch (const Error&) {
      }
    }
  } catch (const Error& e) {
    a.error = describe(e);
  }
  return a;
}

std::vector<SubjectAnalysis> analyze_cohort(std::span<const SessionData> data,
                                            const AnalysisOptions& options) {
  std::vector<SubjectAnalysis> out(data.size());
  const int jobs = std::max(1, std::min<int>(options.jobs, static_cast<int>(data.size())));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < data.size(); i = next++) out[i] = analyze_subject(data[i], options);
  };
  if (jobs == 1) {
    worker();
    return out;
  }
  std::vector<std::thread> pool;
  for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return out;
}

Json psd_summary(std::span<const SubjectAnalysis> subjects) {
  std::vector<double> ts;
  Json per = Json::array();
  for (const auto& s : subjects) {
    if (!usable(s)) continue;
    per.push_back(Json{{"subject_id", s.subject_id}, {"timescale_s", nullable(s.timescale)}});
    if (s.timescale) ts.push_back(*s.timescale);
  }
  Json out;
  out["subjects"] = ts.size();
  out["mean_timescale_s"] = ts.empty() ? Json(nullptr) : Json(mean_of(ts));
  out["sd_timescale_s"] = ts.size() < 2 ? Json(nullptr) : Json(sd_of(ts));
  out["per_subject"] = std::move(per);
  return out;
}

Json build_report(std::span<const SubjectAnalysis> subjects, const AnalysisOptions& options) {
  Json report;
  report["report"] = "flowtrace.report";
  report["tool_version"] = kVersion;
  report["options"] = Json{{"random_replicates", options.random_replicates},
                           {"permutation_replicates", options.permutation_replicates},
                           {"seed", options.seed},
                           {"qc", options.qc},
                           {"max_subset", options.max_subset},
                           {"window", options.window},
                           {"fs", options.fs},
                           {"power_fraction", options.power_fraction},
                           {"label_draw", options.label_draw == LabelDraw::continuous ? "continuous"
                                                                                      : "likert_grid"}};

  Json notes = Json::array();
  if (options.random_replicates < kDefaultReplicates || options.permutation_replicates < kDefaultReplicates)
    notes.push_back("reduced replicate count: random " + std::to_string(options.random_replicates) +
                    ", permutation " + std::to_string(options.permutation_replicates) + " (default " +
                    std::to_string(kDefaultReplicates) + ")");
  if (!options.qc) notes.push_back("quality control disabled");

  Json rows = Json::array();
  std::vector<double> pooled_true, pooled_pred, nrmses, p_random, p_perm;
  Json excluded = Json::array();
  Json failed = Json::array();
  int random_pass = 0, perm_pass = 0;
  for (const auto& s : subjects) {
    Json j;
    j["subject_id"] = s.subject_id;
    j["included"] = s.included;
    j["partial"] = s.partial;
    j["trials"] = s.trials;
    j["qc"] = Json{{"pass", s.qc.pass},
                   {"reasons", s.qc.reasons},
                   {"success_rate", s.qc.success_rate},
                   {"intensity_range", s.qc.intensity_range}};
    if (!s.included) {
      excluded.push_back(s.subject_id);
      notes.push_back(s.subject_id + " excluded by quality control");
    }
    if (s.error) {
      j["error"] = *s.error;
      failed.push_back(s.subject_id);
    }
    if (usable(s)) {
      const Selection& sel = s.selection;
      j["selected_subset"] = names_of(sel.subset);
      j["weights"] = sel.model.weights;
      j["intercept"] = sel.model.intercept;
      Json contrib;
      for (std::size_t i = 0; i < sel.subset.size(); ++i)
        contrib[std::string(metric_name(sel.subset[i]))] = s.contributions[i];
      j["contributions"] = std::move(contrib);
      j["candidates"] = sel.candidates;
      j["degenerate_candidates"] = sel.degenerate_candidates;
      j["loocv_nrmse"] = sel.loocv.nrmse;
      Json probes = Json::array();
      for (std::size_t i = 0; i < s.reported.size(); ++i)
        probes.push_back(Json{{"trial_index", s.probe_trials[i]},
                              {"reported", s.reported[i]},
                              {"predicted", sel.loocv.predictions[i]}});
      j["probes"] = std::move(probes);
      j["pearson_r"] = s.fit_correlation ? Json(s.fit_correlation->effect_size) : Json(nullptr);
      j["pearson_p"] = s.fit_correlation ? Json(s.fit_correlation->p_value) : Json(nullptr);
      j["random_test"] = significance_json(s.random);
      j["permutation_test"] = significance_json(s.permutation);
      j["decoded_first_trial"] = s.decoded.first_trial;
      j["timescale_s"] = nullable(s.timescale);
      if (s.psd) j["psd"] = Json{{"segment_length", s.psd->segment_length}, {"segments", s.psd->segments},
                                 {"window", window_name(s.psd->window)}, {"overlap", s.psd->overlap}};
      j["truth_correlation"] = nullable(s.truth_correlation);

      pooled_true.insert(pooled_true.end(), s.reported.begin(), s.reported.end());
      pooled_pred.insert(pooled_pred.end(), sel.loocv.predictions.begin(), sel.loocv.predictions.end());
      nrmses.push_back(sel.loocv.nrmse);
      p_random.push_back(s.random.p_value);
      p_perm.push_back(s.permutation.p_value);
      if (s.random.p_value < 0.05) ++random_pass;
      if (s.permutation.p_value < 0.05) ++perm_pass;
    }
    j["warnings"] = s.warnings;
    rows.push_back(std::move(j));
  }

  Json cohort;
  cohort["subjects"] = subjects.size();
  cohort["analysed"] = nrmses.size();
  cohort["excluded"] = std::move(excluded);
  cohort["failed"] = std::move(failed);
  try {
    const TestResult r = pearson(pooled_true, pooled_pred);
    cohort["pooled_r"] = r.effect_size;
    cohort["pooled_p"] = r.p_value;
  } catch (const Error&) {
    cohort["pooled_r"] = nullptr;
    cohort["pooled_p"] = nullptr;
  }
  cohort["mean_nrmse"] = nrmses.empty() ? Json(nullptr) : Json(mean_of(nrmses));
  cohort["sd_nrmse"] = nrmses.size() < 2 ? Json(nullptr) : Json(sd_of(nrmses));
  cohort["random_test_pass"] = random_pass;
  cohort["permutation_test_pass"] = perm_pass;
  cohort["random_test_p_fdr"] = bh_fdr(p_random);
  cohort["permutation_test_p_fdr"] = bh_fdr(p_perm);
  cohort["metric_tests"] = metric_tests(subjects);
  cohort["psd"] = psd_summary(subjects);

  report["subjects"] = std::move(rows);
  report["cohort"] = std::move(cohort);
  report["notes"] = std::move(notes);
  return report;
}

Json run_pipeline(std::span<const SessionData> data, const AnalysisOptions& options) {
  const auto subjects = analyze_cohort(data, options);
  return build_report(subjects, options);
}

}  // namespace flowtrace
