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

#include "oodseg/logging.h"

#include <cstdlib>
#include <memory>
#include <string>

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

namespace oodseg::logging {
namespace {

spdlog::logger& Logger() {
  static const std::shared_ptr<spdlog::logger> logger = [] {
    auto sink = std::make_shared<spdlog::sinks::stderr_sink_mt>();
    auto made = std::make_shared<spdlog::logger>("oodseg", sink);
    made->set_pattern("[%l] %v");
    spdlog::level::level_enum level = spdlog::level::warn;
    if (const char* env = std::getenv("OODSEG_LOG")) {
      const std::string name(env);
      if (name == "error") level = spdlog::level::err;
      else if (name == "warn") level = spdlog::level::warn;
      else if (name == "info") level = spdlog::level::info;
      else if (name == "debug") level = spdlog::level::debug;
    }
    made->set_level(level);
    return made;
  }();
  return *logger;
}

}  // namespace

void Error(std::string_view message) { Logger().error("{}", message); }
void Warn(std::string_view message) { Logger().warn("{}", message); }
void Info(std::string_view message) { Logger().info("{}", message); }
void Debug(std::string_view message) { Logger().debug("{}", message); }

}  // namespace oodseg::logging
