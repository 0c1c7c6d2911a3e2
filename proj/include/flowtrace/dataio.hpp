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


// On-disk formats: per-trial CSV traces and the session JSON document.

#ifndef FLOWTRACE_DATAIO_HPP_
#define FLOWTRACE_DATAIO_HPP_

#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"
#include "flowtrace/session.hpp"

namespace flowtrace {

using Json = nlohmann::ordered_json;

inline constexpr int kSessionSchemaVersion = 1;
inline constexpr const char* kTraceHeader = "t_s,force_n";

std::string trace_to_csv(const ForceTrace& trace);
// `source` names the input in error messages.
ForceTrace trace_from_csv(std::string_view text, const std::string& source = "<memory>");

void write_trace(const ForceTrace& trace, const std::filesystem::path& path);
ForceTrace read_trace(const std::filesystem::path& path);

enum class TraceMode { inline_samples, referenced };

struct SessionWriteOptions {
  TraceMode mode = TraceMode::inline_samples;
  // Directory for referenced traces, relative to the session file. Empty
  // means "<stem>.traces".
  std::string trace_dir;
  // Leave trace files that already exist untouched (traces never change once
  // a trial has ended).
  bool keep_existing_traces = false;
};

// `extra` keys are appended after the session fields (used by the live
// service for its resume state); readers ignore unknown keys.
Json session_to_json(const SessionData& data, const std::filesystem::path& session_path,
                     const SessionWriteOptions& options, const Json& extra = Json::object());
SessionData session_from_json(const Json& doc, const std::filesystem::path& session_path);

void write_session(const SessionData& data, const std::filesystem::path& path,
                   const SessionWriteOptions& options = {}, const Json& extra = Json::object());
SessionData read_session(const std::filesystem::path& path);
Json read_json(const std::filesystem::path& path);

// Temp file + rename in the destination directory.
void write_text_atomic(const std::filesystem::path& path, std::string_view text);
void write_json_atomic(const Json& doc, const std::filesystem::path& path);

// 2-space indented dump with a trailing newline; the canonical byte form of
// every JSON file this library writes.
std::string dump_json(const Json& doc);

}  // namespace flowtrace

#endif  // FLOWTRACE_DATAIO_HPP_
