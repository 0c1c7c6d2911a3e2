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

#ifndef FLOWTRACE_ERROR_HPP_
#define FLOWTRACE_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace flowtrace {

// Numeric values match ft_status in flowtrace.h.
enum class ErrorCode : int {
  invalid_input = 1,
  premature_press = 2,
  protocol = 3,
  insufficient_data = 4,
  degenerate = 5,
  parse = 6,
  format = 7,
  version_mismatch = 8,
  missing_file = 9,
  io = 10,
  not_found = 11,
  conflict = 12,
  undefined = 13,
  validation = 14,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool ok, ErrorCode code, const char* what) {
  if (!ok) throw Error(code, what);
}

// Prefer `if (!ok) fail(...)` on hot paths: the message here is built eagerly.
inline void require(bool ok, ErrorCode code, const std::string& what) {
  if (!ok) throw Error(code, what);
}

}  // namespace flowtrace

#endif  // FLOWTRACE_ERROR_HPP_
