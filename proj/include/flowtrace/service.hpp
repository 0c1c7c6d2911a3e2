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


// HTTP + WebSocket backend for live sessions. All session state is confined
// to the single I/O thread; decoder refits and reports run on a worker pool
// and post their results back.

#ifndef FLOWTRACE_SERVICE_HPP_
#define FLOWTRACE_SERVICE_HPP_

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "flowtrace/live_session.hpp"
#include "flowtrace/pipeline.hpp"

namespace flowtrace {

struct ServiceOptions {
  std::string host = "127.0.0.1";
  unsigned short port = 8080;  // 0 picks a free port
  std::filesystem::path data_dir = "flowtrace-sessions";
  std::optional<std::filesystem::path> static_dir;
  LiveOptions session_defaults;
  // Reports use these, so they match `flowtrace decode` run with the same
  // flags on the persisted session files.
  AnalysisOptions analysis;
  int analysis_threads = 2;
  bool handle_signals = true;  // SIGINT/SIGTERM flush and stop run()
};

class Service {
 public:
  // Validates the static directory, resumes persisted sessions from
  // data_dir and binds the port. Throws Error(io) when the port is busy and
  // Error(invalid_input) for a bad static directory.
  explicit Service(ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  unsigned short port() const;
  std::size_t resumed_sessions() const;

  // Serves until stop() or a handled signal. Sessions are flushed to disk
  // before it returns.
  void run();
  // Thread-safe.
  void stop();

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace flowtrace

#endif  // FLOWTRACE_SERVICE_HPP_
