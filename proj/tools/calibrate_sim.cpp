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


// Grid search for the simulator noise levels over (w_C, w_V, w_F); w_M stays
// at the transducer error. Each point is scored by the distance of the
// in-flow and out-flow success rates from their targets. Points where the
// in-flow adjust rate is not clearly lower than the out-flow one are
// rejected: since the loop step scales with the loop period, only the output
// noise separates the two conditions on that metric.

#include <cmath>
#include <cstdio>
#include <vector>

#include "CLI11.hpp"
#include "flowtrace/metrics.hpp"
#include "flowtrace/rng.hpp"
#include "flowtrace/simulator.hpp"
#include "flowtrace/stats.hpp"

using namespace flowtrace;

namespace {

struct Point {
  double success_in = 0, success_out = 0;
  double adjust_t = 0;  // paired t of in-flow minus out-flow adjust rate
};

Point measure(const SimParams& p, const TrialConfig& cfg, int trials, std::uint64_t seed) {
  Point out;
  std::vector<double> a, b;
  for (int k = 0; k < trials; ++k) {
    const std::uint64_t s = derive_seed(seed, {static_cast<std::uint64_t>(k)});
    const TrialRecord in = evaluate_trial(simulate_trial(p, p.inflow, cfg, s), cfg);
    const TrialRecord ou = evaluate_trial(simulate_trial(p, p.outflow, cfg, s), cfg);
    out.success_in += in.success;
    out.success_out += ou.success;
    a.push_back(trial_metrics(in, {&in, 1}).average_adjust_rate);
    b.push_back(trial_metrics(ou, {&ou, 1}).average_adjust_rate);
  }
  out.success_in /= trials;
  out.success_out /= trials;
  out.adjust_t = paired_t(a, b).statistic;
  return out;
}

std::vector<double> grid(double lo, double hi, double step) {
  std::vector<double> v;
  for (double x = lo; x <= hi + 1e-12; x += step) v.push_back(x);
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Calibrate simulator noise against target success rates"};
  int trials = 2000;
  std::uint64_t seed = 1;
  double target_in = 0.61, target_out = 0.47, band = 0.055;
  double max_t100 = -3.0;
  double c_lo = 0.0, c_hi = 0.030, v_lo = 0.015, v_hi = 0.040, f_lo = 0.010, f_hi = 0.030, step = 0.0025;
  bool table = false;
  app.add_option("--trials", trials, "trials per condition and grid point");
  app.add_option("--seed", seed);
  app.add_option("--target_in", target_in);
  app.add_option("--target_out", target_out);
  app.add_option("--band_width", band);
  app.add_option("--max_t100", max_t100, "largest admissible adjust-rate t, rescaled to 100 trials");
  app.add_option("--command_min", c_lo);
  app.add_option("--command_max", c_hi);
  app.add_option("--visual_min", v_lo);
  app.add_option("--visual_max", v_hi);
  app.add_option("--force_min", f_lo);
  app.add_option("--force_max", f_hi);
  app.add_option("--step", step);
  app.add_flag("--table", table, "print every grid point");
  CLI11_PARSE(app, argc, argv);

  TrialConfig cfg;
  cfg.band_width = band;
  const double to100 = std::sqrt(100.0 / trials);

  double best = INFINITY;
  SimParams best_p;
  Point best_pt;
  if (table) std::printf("command,visual,force,success_in,success_out,adjust_t100\n");
  for (double c : grid(c_lo, c_hi, step)) {
    for (double v : grid(v_lo, v_hi, step)) {
      for (double f : grid(f_lo, f_hi, step)) {
        SimParams p;
        p.sigma_command = c;
        p.sigma_visual = v;
        p.sigma_force = f;
        const Point pt = measure(p, cfg, trials, seed);
        if (table)
          std::printf("%.4f,%.4f,%.4f,%.4f,%.4f,%.2f\n", c, v, f, pt.success_in, pt.success_out, pt.adjust_t * to100);
        if (pt.adjust_t * to100 > max_t100) continue;
        const double loss = std::max(std::abs(pt.success_in - target_in), std::abs(pt.success_out - target_out));
        if (loss < best) {
          best = loss;
          best_p = p;
          best_pt = pt;
        }
      }
    }
  }
  if (!std::isfinite(best)) {
    std::printf("no admissible grid point\n");
    return 1;
  }
  std::printf("best sigma_command=%.4f sigma_visual=%.4f sigma_force=%.4f -> in %.3f out %.3f, adjust t(100) %.2f\n",
              best_p.sigma_command, best_p.sigma_visual, best_p.sigma_force, best_pt.success_in,
              best_pt.success_out, best_pt.adjust_t * to100);
  return 0;
}
