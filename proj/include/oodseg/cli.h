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

#ifndef OODSEG_CLI_H_
#define OODSEG_CLI_H_

#include <iosfwd>
#include <span>
#include <string>

namespace oodseg::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

/// Runs one command line (args[0] is the program name). Returns 0 on success,
/// 1 on validation errors and 2 on runtime errors. Files written before a
/// failure are removed.
int run_cli(std::span<const std::string> args, std::ostream& out,
            std::ostream& err);

int run_cli(int argc, const char* const* argv);

}  // namespace oodseg::cli

#endif  // OODSEG_CLI_H_
