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


// flowtrace command line. Talks to the library only through flowtrace.h.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "flowtrace/flowtrace.h"

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

struct Failure {
  ft_status status;
  std::string message;
};

void check(ft_status st) {
  if (st != FT_OK) throw Failure{st, ft_last_error()};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  ft_string_free(s);
  return out;
}

// Adds `value` to `j` under `key` only if the flag was given.
template <typename T>
void put_if(Json& j, const CLI::App* app, const char* flag, const char* key, const T& value) {
  const CLI::Option* opt = app->get_option_no_throw(std::string("--") + flag);
  if (opt && opt->count() > 0) j[key] = value;
}

struct TrialFlags {
  double target_force = 1.0, band_width = 0.055, trial_duration = 3.0, hold_duration = 0.5,
         rest_duration = 2.0, press_threshold = 0.01;

  void add(CLI::App* app, bool with_band = true) {
    app->add_option("--target_force", target_force, "Target force (N)");
    if (with_band) app->add_option("--band_width", band_width, "Full target band width (N)");
    app->add_option("--trial_duration", trial_duration, "Trial length (s)");
    app->add_option("--hold_duration", hold_duration, "Required in-band hold (s)");
    app->add_option("--rest_duration", rest_duration, "Rest between trials (s)");
    app->add_option("--press_threshold", press_threshold, "Force counted as a press (N)");
  }

  void put(Json& j, const CLI::App* app) const {
    put_if(j, app, "target_force", "target_force", target_force);
    put_if(j, app, "band_width", "band_width", band_width);
    put_if(j, app, "trial_duration", "trial_duration", trial_duration);
    put_if(j, app, "hold_duration", "hold_duration", hold_duration);
    put_if(j, app, "rest_duration", "rest_duration", rest_duration);
    put_if(j, app, "press_threshold", "press_threshold", press_threshold);
  }
};

struct AnalysisFlags {
  int perms = 1000, random_replicates = 1000, permutation_replicates = 1000, window = 5, max_subset = 4;
  unsigned long long seed = 0;
  bool no_qc = false;
  std::string label_draw = "continuous";
  double power_fraction = 0.7;

  void add(CLI::App* app, bool with_tests = true) {
    if (with_tests) {
      app->add_option("--perms", perms, "Replicates for both significance tests")->check(CLI::Range(1, 1 << 30));
      app->add_option("--random_replicates", random_replicates)->check(CLI::Range(1, 1 << 30));
      app->add_option("--permutation_replicates", permutation_replicates)->check(CLI::Range(1, 1 << 30));
      app->add_option("--label_draw", label_draw)->check(CLI::IsMember({"continuous", "likert_grid"}));
    }
    app->add_option("--seed", seed, "Analysis seed");
    app->add_flag("--no-qc", no_qc, "Keep subjects that fail quality control");
    app->add_option("--window", window, "Trials per probe window")->check(CLI::Range(1, 1 << 30));
    app->add_option("--max_subset", max_subset)->check(CLI::Range(1, 1 << 30));
    app->add_option("--power_fraction", power_fraction)->check(CLI::Range(0.0, 1.0));
  }

  Json json(const CLI::App* app, int jobs) const {
    Json j;
    const CLI::Option* p = app->get_option_no_throw("--perms");
    if (p && p->count() > 0) {
      j["random_replicates"] = perms;
      j["permutation_replicates"] = perms;
    }
    put_if(j, app, "random_replicates", "random_replicates", random_replicates);
    put_if(j, app, "permutation_replicates", "permutation_replicates", permutation_replicates);
    put_if(j, app, "label_draw", "label_draw", label_draw);
    j["seed"] = seed;
    if (no_qc) j["qc"] = false;
    put_if(j, app, "window", "window", window);
    put_if(j, app, "max_subset", "max_subset", max_subset);
    put_if(j, app, "power_fraction", "power_fraction", power_fraction);
    j["jobs"] = jobs;
    return j;
  }
};

bool is_session_file(const fs::path& p) {
  std::ifstream in(p);
  char head[256] = {};
  in.read(head, sizeof head - 1);
  return std::string(head).find("\"flowtrace.session\"") != std::string::npos;
}

// Files are taken as given; directories contribute their session files in
// name order.
std::vector<std::string> expand_inputs(const std::vector<std::string>& inputs) {
  std::vector<std::string> out;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<std::string> found;
      for (const auto& e : fs::directory_iterator(in))
        if (e.is_regular_file() && e.path().extension() == ".json" && is_session_file(e.path()))
          found.push_back(e.path().string());
      std::sort(found.begin(), found.end());
      if (found.empty()) throw Failure{FT_ERR_NOT_FOUND, "no session files in '" + in + "'"};
      out.insert(out.end(), found.begin(), found.end());
    } else if (fs::exists(in)) {
      out.push_back(in);
    } else {
      throw Failure{FT_ERR_MISSING_FILE, "no such file or directory: '" + in + "'"};
    }
  }
  return out;
}

std::vector<const char*> c_strings(const std::vector<std::string>& v) {
  std::vector<const char*> out;
  for (const auto& s : v) out.push_back(s.c_str());
  return out;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Failure{FT_ERR_IO, "cannot write '" + path + "'"};
}

std::string fmt(const Json& v, const char* f = "%.3f") {
  if (v.is_null()) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v.get<double>());
  return buf;
}

std::vector<double> read_series(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Failure{FT_ERR_MISSING_FILE, "cannot open '" + path + "'"};
  std::vector<double> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string last = line.substr(line.find_last_of(',') == std::string::npos ? 0 : line.find_last_of(',') + 1);
    try {
      std::size_t used = 0;
      const double v = std::stod(last, &used);
      out.push_back(v);
    } catch (const std::exception&) {
      if (lineno == 1) continue;  // header
      throw Failure{FT_ERR_PARSE, path + ":" + std::to_string(lineno) + ": not a number"};
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flowtrace: force-control task simulation, flow decoding and live sessions"};
  app.set_version_flag("--version", std::string(ft_version()));
  app.require_subcommand(1);
  bool json_out = false;
  int jobs = 1;
  app.add_flag("--json", json_out, "Machine-readable summary on stdout");
  app.add_option("--jobs", jobs, "Subject-level worker threads")->check(CLI::Range(1, 1 << 30));

  // simulate
  auto* sim = app.add_subcommand("simulate", "Simulate a synthetic cohort");
  int subjects = 24;
  unsigned long long sim_seed = 7;
  std::string out_dir;
  std::string flow = "ou";
  double flow_period_s = 20, flow_amplitude = 1.6, relaxation_trials = 40, report_noise_sd = 0.5;
  double skill_intensity = 4, k1 = 0.5, k2 = 0.05, initial_band = 0.2;
  int sessions = 3, trials_per_session = 100, probes_per_session = 4, min_gap = 12;
  bool referenced = false;
  TrialFlags sim_trial;
  sim->add_option("--subjects", subjects, "Number of subjects")->check(CLI::Range(1, 1 << 30));
  sim->add_option("--seed", sim_seed, "Cohort seed");
  sim->add_option("--out", out_dir, "Output directory")->required();
  sim->add_option("--flow", flow, "Ground-truth flow process")->check(CLI::IsMember({"ou", "sinusoid_mixture"}));
  sim->add_option("--flow_period_s", flow_period_s, "Dominant period of the sinusoid flow (s)");
  sim->add_option("--flow_amplitude", flow_amplitude);
  sim->add_option("--relaxation_trials", relaxation_trials, "OU relaxation time (trials)");
  sim->add_option("--report_noise_sd", report_noise_sd, "Probe answer noise (Likert units)");
  sim->add_option("--sessions", sessions)->check(CLI::Range(1, 1 << 30));
  sim->add_option("--trials_per_session", trials_per_session)->check(CLI::Range(1, 1 << 30));
  sim->add_option("--probes_per_session", probes_per_session)->check(CLI::Range(1, 1 << 30));
  sim->add_option("--min_gap", min_gap)->check(CLI::Range(1, 1 << 30));
  sim->add_option("--skill_intensity", skill_intensity, "Flow intensity during skill measurement");
  sim->add_option("--k1", k1);
  sim->add_option("--k2", k2);
  sim->add_option("--initial_band", initial_band);
  sim->add_flag("--referenced", referenced, "Store traces as CSV files beside each session");
  sim_trial.add(sim);
  sim->footer("Giving --band_width skips the skill measurement and fixes the band.");

  // decode
  auto* dec = app.add_subcommand("decode", "Decode flow and write the report");
  std::vector<std::string> dec_inputs;
  std::string report_path = "report.json";
  AnalysisFlags dec_flags;
  dec->add_option("--input,input", dec_inputs, "Session files or directories")->required();
  dec->add_option("--out", report_path, "Report path");
  dec_flags.add(dec);

  // psd
  auto* psd = app.add_subcommand("psd", "70%-power timescale of decoded flow");
  std::vector<std::string> psd_inputs;
  std::string csv_dir, series_path;
  double fs = 1.0 / 3.0;
  AnalysisFlags psd_flags;
  psd->add_option("--input,input", psd_inputs, "Session files or directories");
  psd->add_option("--csv_dir", csv_dir, "Write per-subject frequency/power CSVs here");
  psd->add_option("--series", series_path, "Analyse a plain series (one value per line) instead");
  psd->add_option("--fs", fs, "Sample rate of --series (Hz)")->check(CLI::PositiveNumber);
  psd_flags.add(psd, false);

  // serve
  auto* srv = app.add_subcommand("serve", "Run the live session service");
  std::string host = "127.0.0.1", data_dir = "flowtrace-sessions", static_dir;
  int port = 8080, analysis_threads = 2;
  AnalysisFlags srv_flags;
  srv->add_option("--host", host);
  srv->add_option("--port", port)->check(CLI::Range(0, 65535));
  srv->add_option("--data_dir", data_dir, "Where sessions are persisted");
  srv->add_option("--static_dir", static_dir, "Task UI bundle to serve");
  srv->add_option("--analysis_threads", analysis_threads)->check(CLI::Range(1, 1 << 30));
  srv_flags.add(srv);

  // metrics
  auto* met = app.add_subcommand("metrics", "Evaluate one force trace");
  std::string trace_path;
  TrialFlags met_trial;
  met->add_option("--trace,trace", trace_path, "t_s,force_n CSV")->required();
  met_trial.add(met);

  // staircase
  auto* stc = app.add_subcommand("staircase", "Simulated skill measurement");
  double intensity = 4;
  unsigned long long stc_seed = 0;
  int skill_trials = 50, skill_max_trials = 200, transitions = 10;
  TrialFlags stc_trial;
  double sk1 = 0.5, sk2 = 0.05, sband = 0.2;
  stc->add_option("--intensity", intensity, "Simulated flow intensity (1-7)");
  stc->add_option("--seed", stc_seed);
  stc->add_option("--skill_trials", skill_trials)->check(CLI::Range(1, 1 << 30));
  stc->add_option("--skill_max_trials", skill_max_trials)->check(CLI::Range(1, 1 << 30));
  stc->add_option("--transitions", transitions)->check(CLI::Range(1, 1 << 30));
  stc->add_option("--k1", sk1);
  stc->add_option("--k2", sk2);
  stc->add_option("--initial_band", sband);
  stc_trial.add(stc, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    // Usage errors exit 2; --help and --version exit 0.
    return e.get_exit_code() == 0 ? 0 : 2;
  }

  try {
    if (*sim) {
      Json o{{"subjects", subjects}, {"seed", sim_seed}, {"flow", flow}};
      put_if(o, sim, "flow_period_s", "flow_period_s", flow_period_s);
      put_if(o, sim, "flow_amplitude", "flow_amplitude", flow_amplitude);
      put_if(o, sim, "relaxation_trials", "relaxation_trials", relaxation_trials);
      put_if(o, sim, "report_noise_sd", "report_noise_sd", report_noise_sd);
      put_if(o, sim, "sessions", "sessions", sessions);
      put_if(o, sim, "trials_per_session", "trials_per_session", trials_per_session);
      put_if(o, sim, "probes_per_session", "probes_per_session", probes_per_session);
      put_if(o, sim, "min_gap", "min_gap", min_gap);
      put_if(o, sim, "skill_intensity", "skill_intensity", skill_intensity);
      put_if(o, sim, "k1", "k1", k1);
      put_if(o, sim, "k2", "k2", k2);
      put_if(o, sim, "initial_band", "initial_band", initial_band);
      sim_trial.put(o, sim);
      if (sim->count("--band_width")) o["measure_skill"] = false;
      char* summary = nullptr;
      check(ft_simulate_cohort(o.dump().c_str(), out_dir.c_str(), referenced ? 1 : 0, jobs, &summary));
      const Json s = Json::parse(take(summary));
      if (json_out) {
        std::cout << s.dump(2) << "\n";
      } else {
        std::cout << "wrote " << s["subjects"] << " subjects to " << out_dir << "\n";
        for (const auto& row : s["sessions"])
          std::cout << "  " << row["subject_id"].get<std::string>() << "  band "
                    << fmt(row["band_width"], "%.4f") << " N  success " << fmt(row["success_rate"]) << "\n";
      }
    } else if (*dec) {
      const auto files = expand_inputs(dec_inputs);
      const auto ptrs = c_strings(files);
      const Json opts = dec_flags.json(dec, jobs);
      char* report = nullptr;
      check(ft_analyze(ptrs.data(), ptrs.size(), opts.dump().c_str(), &report));
      const std::string text = take(report);
      write_file(report_path, text);
      const Json r = Json::parse(text);
      const Json& c = r["cohort"];
      for (const auto& n : r["notes"]) std::cerr << "note: " << n.get<std::string>() << "\n";
      if (json_out) {
        Json s{{"report", report_path}, {"cohort", c}, {"notes", r["notes"]}};
        std::cout << s.dump(2) << "\n";
      } else {
        std::cout << "analysed " << c["analysed"] << " of " << c["subjects"] << " subjects\n"
                  << "pooled r = " << fmt(c["pooled_r"]) << " (p = " << fmt(c["pooled_p"], "%.3g") << ")\n"
                  << "mean NRMSE = " << fmt(c["mean_nrmse"]) << "\n"
                  << "random test passed: " << c["random_test_pass"] << ", permutation test passed: "
                  << c["permutation_test_pass"] << "\n"
                  << "report: " << report_path << "\n";
      }
    } else if (*psd) {
      if (!series_path.empty()) {
        const auto x = read_series(series_path);
        double ts = 0;
        const ft_status st =
            ft_series_timescale(x.data(), x.size(), fs, psd_flags.power_fraction, &ts);
        Json s{{"series", series_path}, {"samples", x.size()}, {"fs", fs}};
        if (st == FT_ERR_UNDEFINED) {
          s["timescale_s"] = nullptr;
          s["warnings"] = Json::array({std::string("undefined timescale: ") + ft_last_error()});
          std::cerr << "warning: undefined timescale: " << ft_last_error() << "\n";
        } else {
          check(st);
          s["timescale_s"] = ts;
        }
        if (json_out)
          std::cout << s.dump(2) << "\n";
        else
          std::cout << "timescale " << fmt(s["timescale_s"], "%.2f") << " s\n";
      } else {
        if (psd_inputs.empty()) throw Failure{FT_ERR_INVALID_INPUT, "psd needs --input or --series"};
        const auto files = expand_inputs(psd_inputs);
        const auto ptrs = c_strings(files);
        const Json opts = psd_flags.json(psd, jobs);
        char* summary = nullptr;
        check(ft_psd(ptrs.data(), ptrs.size(), opts.dump().c_str(), csv_dir.empty() ? nullptr : csv_dir.c_str(),
                     &summary));
        const Json s = Json::parse(take(summary));
        for (const auto& w : s["warnings"]) std::cerr << "warning: " << w.get<std::string>() << "\n";
        if (json_out) {
          std::cout << s.dump(2) << "\n";
        } else {
          for (const auto& row : s["per_subject"])
            std::cout << "  " << row["subject_id"].get<std::string>() << "  " << fmt(row["timescale_s"], "%.2f")
                      << " s\n";
          std::cout << "cohort timescale " << fmt(s["mean_timescale_s"], "%.2f") << " +/- "
                    << fmt(s["sd_timescale_s"], "%.2f") << " s\n";
        }
      }
    } else if (*srv) {
      Json o{{"host", host},
             {"port", port},
             {"data_dir", data_dir},
             {"analysis_threads", analysis_threads},
             {"analysis", srv_flags.json(srv, 1)}};
      if (!static_dir.empty()) o["static_dir"] = static_dir;
      ft_server* server = nullptr;
      check(ft_server_new(o.dump().c_str(), &server));
      if (json_out)
        std::cout << Json{{"listening", host}, {"port", ft_server_port(server)}}.dump() << std::endl;
      else
        std::cout << "listening on http://" << host << ":" << ft_server_port(server) << std::endl;
      const ft_status st = ft_server_run(server);
      ft_server_free(server);
      check(st);
    } else if (*met) {
      Json o = Json::object();
      met_trial.put(o, met);
      char* result = nullptr;
      check(ft_trace_metrics(trace_path.c_str(), o.dump().c_str(), &result));
      const Json r = Json::parse(take(result));
      if (json_out) {
        std::cout << r.dump(2) << "\n";
      } else {
        std::cout << (r["success"].get<bool>() ? "success" : "failure") << "\n";
        for (const auto& [k, v] : r["metrics"].items()) std::cout << "  " << k << " = " << fmt(v, "%.9g") << "\n";
      }
    } else if (*stc) {
      Json o{{"intensity", intensity},
             {"seed", stc_seed},
             {"skill_trials", skill_trials},
             {"skill_max_trials", skill_max_trials},
             {"transitions", transitions},
             {"k1", sk1},
             {"k2", sk2},
             {"initial_band", sband}};
      stc_trial.put(o, stc);
      char* result = nullptr;
      check(ft_staircase_simulate(o.dump().c_str(), &result));
      const Json r = Json::parse(take(result));
      if (json_out) {
        std::cout << r.dump(2) << "\n";
      } else {
        std::cout << r["trials"] << " trials, " << r["transitions"] << " transitions, measured skill "
                  << fmt(r["measured_skill"], "%.4f") << " N\n";
      }
    }
  } catch (const Failure& f) {
    std::cerr << "error (" << ft_status_name(f.status) << "): " << f.message << "\n";
    if (json_out)
      std::cout << Json{{"error", Json{{"code", ft_status_name(f.status)}, {"message", f.message}}}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
