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


#include <filesystem>
#include <string>

#include "doctest.h"
#include "fixtures.hpp"
#include "flowtrace/dataio.hpp"
#include "flowtrace/pipeline.hpp"

#include <unistd.h>

using namespace flowtrace;
using fixtures::error_of;
using fixtures::slurp;
using fixtures::spit;
namespace fs = std::filesystem;

namespace {

SessionData small_subject(std::uint64_t seed = 3) {
  CohortOptions o;
  o.subjects = 1;
  o.seed = seed;
  o.sessions = 1;
  o.trials_per_session = 30;
  o.probes_per_session = 2;
  o.min_gap = 12;
  return simulate_cohort_subject(o, 0);
}

bool same_session(const SessionData& a, const SessionData& b) {
  if (a.trials.size() != b.trials.size()) return false;
  for (std::size_t k = 0; k < a.trials.size(); ++k) {
    const auto& x = a.trials[k];
    const auto& y = b.trials[k];
    if (x.trace.samples != y.trace.samples || x.trace.dt != y.trace.dt || x.success != y.success ||
        x.success_latch != y.success_latch || x.press_onset != y.press_onset ||
        x.band_entry != y.band_entry)
      return false;
  }
  return a.subject_id == b.subject_id && a.probes == b.probes &&
         a.ground_truth_flow == b.ground_truth_flow && a.config.band_width == b.config.band_width &&
         a.staircase.measured_skill == b.staircase.measured_skill &&
         a.staircase.history.size() == b.staircase.history.size() &&
         a.provenance.seed == b.provenance.seed && a.provenance.source == b.provenance.source;
}

}  // namespace

TEST_CASE("trace CSV") {
  ForceTrace t;
  t.dt = 0.001;
  for (int i = 0; i < 3000; ++i) t.samples.push_back(round_sig9(0.5 + 0.123456789123 * std::sin(i * 0.01)));
  const std::string csv = trace_to_csv(t);
  CHECK(csv.rfind("t_s,force_n\n0,", 0) == 0);
  const ForceTrace back = trace_from_csv(csv);
  CHECK(back.samples == t.samples);
  CHECK(back.dt == doctest::Approx(0.001));
  CHECK(back.samples.size() == 3000);
  CHECK(trace_to_csv(back) == csv);

  CHECK(error_of([] { trace_from_csv(""); }) == ErrorCode::parse);
  CHECK(error_of([] { trace_from_csv("time,force\n0,0\n"); }) == ErrorCode::parse);
  CHECK(error_of([] { trace_from_csv("t_s,force_n\n0,0\n0.001,abc\n"); }) == ErrorCode::parse);
  CHECK(error_of([] { trace_from_csv("t_s,force_n\n0,0\n"); }) == ErrorCode::format);
  CHECK(error_of([] { trace_from_csv("t_s,force_n\n0,0\n0.001,0\n0.001,0\n"); }) == ErrorCode::format);
  CHECK(error_of([] { trace_from_csv("t_s,force_n\n0,0\n0.001,0\n0.003,0\n"); }) == ErrorCode::format);
  try {
    trace_from_csv("t_s,force_n\n0,0\n0.001,x\n", "trial_0001.csv");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("trial_0001.csv:3") != std::string::npos);
  }
}

TEST_CASE("trace files") {
  fixtures::TempDir dir;
  ForceTrace t;
  t.samples = {0, 0.25, 0.5};
  write_trace(t, dir / "a/b/t.csv");
  CHECK(read_trace(dir / "a/b/t.csv").samples == t.samples);
  CHECK(error_of([&] { read_trace(dir / "missing.csv"); }) == ErrorCode::missing_file);
}

TEST_CASE("session round trip") {
  fixtures::TempDir dir;
  const SessionData d = small_subject();
  REQUIRE(d.trials.size() == 30);
  REQUIRE(d.staircase.measured_skill.has_value());

  SUBCASE("inline") {
    write_session(d, dir / "s.json");
    CHECK(same_session(read_session(dir / "s.json"), d));
    CHECK_FALSE(fs::exists(dir / "s.traces"));
  }
  SUBCASE("referenced") {
    write_session(d, dir / "s.json", {TraceMode::referenced});
    CHECK(fs::exists(dir / "s.traces/trial_0001.csv"));
    CHECK(fs::exists(dir / "s.traces/trial_0030.csv"));
    CHECK(same_session(read_session(dir / "s.json"), d));
    const Json doc = read_json(dir / "s.json");
    CHECK(doc["trials"][0]["trace_file"] == "s.traces/trial_0001.csv");

    // Paths resolve against the session file, not the working directory.
    fs::create_directories(dir / "moved");
    fs::rename(dir / "s.json", dir / "moved/s.json");
    fs::rename(dir / "s.traces", dir / "moved/s.traces");
    CHECK(same_session(read_session(dir / "moved/s.json"), d));

    fs::remove(dir / "moved/s.traces/trial_0007.csv");
    try {
      read_session(dir / "moved/s.json");
      FAIL("expected missing_file");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::missing_file);
      CHECK(std::string(e.what()).find("trial_0007.csv") != std::string::npos);
    }
  }
  SUBCASE("byte-stable rewrite") {
    write_session(d, dir / "a.json");
    write_session(read_session(dir / "a.json"), dir / "b.json");
    CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));
    const std::string text = slurp(dir / "a.json");
    CHECK(text.back() == '\n');
    CHECK(text.substr(0, 33) == "{\n  \"schema\": \"flowtrace.session\"");
  }
  SUBCASE("extra keys ride along and are ignored on read") {
    write_session(d, dir / "s.json", {}, Json{{"live_state", {{"phase", "main"}}}});
    CHECK(read_json(dir / "s.json")["live_state"]["phase"] == "main");
    CHECK(same_session(read_session(dir / "s.json"), d));
  }
}

TEST_CASE("session read errors") {
  fixtures::TempDir dir;
  const SessionData d = small_subject();
  write_session(d, dir / "s.json");
  Json doc = read_json(dir / "s.json");

  auto write_and_read = [&](const Json& j) {
    spit(dir / "x.json", dump_json(j));
    return error_of([&] { read_session(dir / "x.json"); });
  };

  SUBCASE("schema version") {
    Json j = doc;
    j["schema_version"] = 2;
    spit(dir / "x.json", dump_json(j));
    try {
      read_session(dir / "x.json");
      FAIL("expected version_mismatch");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::version_mismatch);
      CHECK(std::string(e.what()).find("expected 1, found 2") != std::string::npos);
    }
  }
  SUBCASE("missing field") {
    Json j = doc;
    j.erase("probes");
    CHECK(write_and_read(j) == ErrorCode::format);
  }
  SUBCASE("wrong type") {
    Json j = doc;
    j["sessions"] = "three";
    CHECK(write_and_read(j) == ErrorCode::format);
  }
  SUBCASE("tampered outcome") {
    Json j = doc;
    j["trials"][0]["success"] = !j["trials"][0]["success"].get<bool>();
    CHECK(write_and_read(j) == ErrorCode::validation);
  }
  SUBCASE("probe beyond the last trial") {
    Json j = doc;
    j["probes"][0]["trial_index"] = 99;
    CHECK(write_and_read(j) == ErrorCode::invalid_input);
  }
  SUBCASE("not JSON") {
    spit(dir / "x.json", "{ nope");
    CHECK(error_of([&] { read_session(dir / "x.json"); }) == ErrorCode::parse);
  }
  CHECK(error_of([&] { read_session(dir / "none.json"); }) == ErrorCode::missing_file);
}

TEST_CASE("atomic writes") {
  fixtures::TempDir dir;
  write_text_atomic(dir / "f.txt", "one");
  write_text_atomic(dir / "f.txt", "two");
  CHECK(slurp(dir / "f.txt") == "two");
  int entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.path())) ++entries;
  CHECK(entries == 1);  // no temp files left behind
  fs::create_directories(dir / "ro");
  fs::permissions(dir / "ro", fs::perms::owner_read | fs::perms::owner_exec);
  if (::geteuid() != 0) CHECK(error_of([&] { write_text_atomic(dir / "ro/f.txt", "x"); }) == ErrorCode::io);
  fs::permissions(dir / "ro", fs::perms::owner_all);
}

TEST_CASE("canonical JSON dump") {
  Json j;
  j["b"] = 1;
  j["a"] = Json::array({1.5, nullptr});
  CHECK(dump_json(j) == "{\n  \"b\": 1,\n  \"a\": [\n    1.5,\n    null\n  ]\n}\n");
}
