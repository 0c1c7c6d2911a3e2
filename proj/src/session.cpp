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


#include <algorithm>
#include <string>

#include "flowtrace/error.hpp"
#include "flowtrace/session.hpp"

namespace flowtrace {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_input: return "invalid_input";
    case ErrorCode::premature_press: return "premature_press";
    case ErrorCode::protocol: return "protocol";
    case ErrorCode::insufficient_data: return "insufficient_data";
    case ErrorCode::degenerate: return "degenerate";
    case ErrorCode::parse: return "parse";
    case ErrorCode::format: return "format";
    case ErrorCode::version_mismatch: return "version_mismatch";
    case ErrorCode::missing_file: return "missing_file";
    case ErrorCode::io: return "io";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::conflict: return "conflict";
    case ErrorCode::undefined: return "undefined";
    case ErrorCode::validation: return "validation";
  }
  return "unknown";
}

FlowProbe FlowProbe::from_responses(int probe_index, int trial_index, std::array<int, 3> r) {
  for (int v : r)
    require(v >= 1 && v <= 7, ErrorCode::validation,
            "probe response " + std::to_string(v) + " outside 1..7");
  FlowProbe p;
  p.probe_index = probe_index;
  p.trial_index = trial_index;
  p.responses = r;
  p.intensity = (r[0] + r[1] + r[2]) / 3.0;
  return p;
}

void SessionData::validate() const {
  require(sessions >= 1 && trials_per_session >= 1, ErrorCode::invalid_input,
          "session counts must be positive");
  config.validate();
  const auto cap = static_cast<std::size_t>(sessions) * static_cast<std::size_t>(trials_per_session);
  require(trials.size() <= cap, ErrorCode::invalid_input,
          "more trials than sessions x trials_per_session");
  int last = 0;
  for (std::size_t j = 0; j < probes.size(); ++j) {
    const FlowProbe& p = probes[j];
    require(p.trial_index >= 1 && p.trial_index <= static_cast<int>(trials.size()),
            ErrorCode::invalid_input,
            "probe " + std::to_string(p.probe_index) + " references missing trial " +
                std::to_string(p.trial_index));
    require(p.trial_index > last, ErrorCode::invalid_input, "probe trial indices not ascending");
    last = p.trial_index;
    for (int v : p.responses)
      require(v >= 1 && v <= 7, ErrorCode::validation, "probe response outside 1..7");
  }
}

}  // namespace flowtrace
