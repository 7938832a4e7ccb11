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

#ifndef OODSEG_LOGGING_H_
#define OODSEG_LOGGING_H_

#include <string_view>

namespace oodseg::logging {

// Level comes from OODSEG_LOG (error|warn|info|debug), default warn. All
// output goes to stderr.
void Error(std::string_view message);
void Warn(std::string_view message);
void Info(std::string_view message);
void Debug(std::string_view message);

}  // namespace oodseg::logging

#endif  // OODSEG_LOGGING_H_
