// Copyright 2026 The ppml-audit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PPML_AUDIT_ERROR_HPP_
#define PPML_AUDIT_ERROR_HPP_

#include <functional>
#include <iostream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ppml_audit {

enum class ErrorCode {
  kConfig,
  kShape,
  kInput,
  kNumeric,
  kFormat,
  kCalibration,
  kCodec,
  kEvaluation,
  kIo,
};

inline std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig: return "configuration error";
    case ErrorCode::kShape: return "shape error";
    case ErrorCode::kInput: return "input error";
    case ErrorCode::kNumeric: return "numeric error";
    case ErrorCode::kFormat: return "format error";
    case ErrorCode::kCalibration: return "calibration error";
    case ErrorCode::kCodec: return "codec error";
    case ErrorCode::kEvaluation: return "evaluation error";
    case ErrorCode::kIo: return "io error";
  }
  return "error";
}

// Every failure raised by the library carries one of the codes above so that
// callers (and the CLI) can branch on the category rather than the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// A format error that also records where in the byte stream parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& message, std::size_t offset)
      : Error(ErrorCode::kFormat,
              message + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

namespace detail {

inline std::function<void(std::string_view)>& WarningSink() {
  static std::function<void(std::string_view)> sink =
      [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
  return sink;
}

}  // namespace detail

inline void SetWarningSink(std::function<void(std::string_view)> sink) {
  detail::WarningSink() = std::move(sink);
}

inline void Warn(std::string_view message) {
  if (detail::WarningSink()) detail::WarningSink()(message);
}

inline void Require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

}  // namespace ppml_audit

#endif  // PPML_AUDIT_ERROR_HPP_
