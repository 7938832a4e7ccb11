/* Copyright 2026 The OodSeg Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef OODSEG_ERROR_H_
#define OODSEG_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace oodseg {

enum class ErrorCode {
  kInvalidArgument,
  kShapeMismatch,
  kMalformedFile,
  kNonFinite,
  kUnknownLabel,
  kOutOfBounds,
  kConfig,
  kIo,
  kInfeasible,
  kDivergence,
};

std::string_view ErrorCodeName(ErrorCode code);

// Every failure raised by the library carries one of the codes above so that
// callers (the CLI, foreign bindings) can map it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  // Input/config problems as opposed to failures while doing the work.
  bool is_validation() const noexcept {
    return code_ != ErrorCode::kIo && code_ != ErrorCode::kInfeasible &&
           code_ != ErrorCode::kDivergence;
  }

 private:
  ErrorCode code_;
};

inline std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kShapeMismatch: return "shape_mismatch";
    case ErrorCode::kMalformedFile: return "malformed_file";
    case ErrorCode::kNonFinite: return "non_finite";
    case ErrorCode::kUnknownLabel: return "unknown_label";
    case ErrorCode::kOutOfBounds: return "out_of_bounds";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kInfeasible: return "infeasible";
    case ErrorCode::kDivergence: return "divergence";
  }
  return "unknown";
}

}  // namespace oodseg

#endif  // OODSEG_ERROR_H_
