/*
 * Copyright 2026 The seqdefer Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// "trace/v1" serialization. A dataset is newline-delimited JSON, one
// document per instance.

#ifndef SEQDEFER_TRACE_IO_HPP_
#define SEQDEFER_TRACE_IO_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "seqdefer/core.hpp"

namespace seqdefer {

inline constexpr const char* kTraceVersion = "trace/v1";

nlohmann::json LabelToJson(const Label& label);
Label LabelFromJson(const nlohmann::json& j);

nlohmann::json TraceToJson(const Trace& trace);
Trace TraceFromJson(const nlohmann::json& j);

nlohmann::json BoundsToJson(const TaskBounds& bounds);
TaskBounds BoundsFromJson(const nlohmann::json& j);

// One compact JSON document per line.
std::string TracesToNdjson(const std::vector<Trace>& traces);
std::vector<Trace> TracesFromNdjson(const std::string& text);

void WriteTraces(const std::filesystem::path& path,
                 const std::vector<Trace>& traces);
std::vector<Trace> ReadTraces(const std::filesystem::path& path);

std::string ReadFile(const std::filesystem::path& path);
void WriteFile(const std::filesystem::path& path, const std::string& content);

}  // namespace seqdefer

#endif  // SEQDEFER_TRACE_IO_HPP_
