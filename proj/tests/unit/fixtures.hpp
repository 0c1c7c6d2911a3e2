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


// Shared fixtures for the unit tests.

#ifndef FLOWTRACE_TESTS_FIXTURES_HPP_
#define FLOWTRACE_TESTS_FIXTURES_HPP_

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <random>
#include <vector>

#include "doctest.h"
#include "flowtrace/error.hpp"
#include "flowtrace/task_core.hpp"

namespace fixtures {

// `pre` seconds at 0 N, `high` seconds at `level`, then 0 N up to `total`.
inline flowtrace::ForceTrace step_trace(double pre, double high, double level = 1.0,
                                        double total = 3.0, double dt = 0.001) {
  flowtrace::ForceTrace t;
  t.dt = dt;
  const auto n = static_cast<std::size_t>(std::llround(total / dt));
  const auto a = static_cast<std::size_t>(std::llround(pre / dt));
  const auto b = static_cast<std::size_t>(std::llround((pre + high) / dt));
  for (std::size_t i = 0; i < n; ++i) t.samples.push_back(i >= a && i < b ? level : 0.0);
  return t;
}

// Random piecewise-constant trace around the target that starts at zero.
inline flowtrace::ForceTrace random_trace(std::mt19937_64& rng, std::size_t n = 3000, double dt = 0.001) {
  std::uniform_real_distribution<double> level(0.9, 1.1);
  std::uniform_int_distribution<int> run(1, 700);
  flowtrace::ForceTrace t;
  t.dt = dt;
  t.samples.push_back(0.0);
  while (t.samples.size() < n) {
    const double v = level(rng);
    for (int k = run(rng); k > 0 && t.samples.size() < n; --k) t.samples.push_back(v);
  }
  return t;
}

// Fresh directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("flowtrace-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

template <typename F>
flowtrace::ErrorCode error_of(F&& f) {
  try {
    f();
  } catch (const flowtrace::Error& e) {
    return e.code();
  }
  FAIL("expected a flowtrace::Error");
  return flowtrace::ErrorCode::invalid_input;
}

}  // namespace fixtures

#endif  // FLOWTRACE_TESTS_FIXTURES_HPP_
