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

// "model/v1" checkpoints: architecture spec, flattened row-major weights,
// feature scaler, training config and seed. Doubles are written in their
// shortest round-trip form, so a reload reproduces forward outputs bit for
// bit.

#ifndef SEQDEFER_CHECKPOINT_HPP_
#define SEQDEFER_CHECKPOINT_HPP_

#include <filesystem>
#include <string>

#include "json.hpp"
#include "seqdefer/baselines.hpp"
#include "seqdefer/rejectors.hpp"

namespace seqdefer {

inline constexpr const char* kModelVersion = "model/v1";

nlohmann::json TrainConfigToJson(const TrainConfig& config);
TrainConfig TrainConfigFromJson(const nlohmann::json& j);

nlohmann::json ScalerToJson(const FeatureScaler& scaler);
FeatureScaler ScalerFromJson(const nlohmann::json& j);

// kind "token"
nlohmann::json TokenModelToJson(const TokenRejectorModel& model,
                                const TrainConfig& config);
TokenRejectorModel TokenModelFromJson(const nlohmann::json& j);

// kind "onetime"
nlohmann::json OnetimeModelToJson(const OneTimeModel& model,
                                  const TrainConfig& config);
OneTimeModel OnetimeModelFromJson(const nlohmann::json& j);

// kind "whole"
nlohmann::json WholeModelToJson(const WholeEmbedModel& model,
                                const TrainConfig& config);
WholeEmbedModel WholeModelFromJson(const nlohmann::json& j);

// The "kind" field of a checkpoint document; data error unless the
// version tag is "model/v1".
std::string CheckpointKind(const nlohmann::json& j);

// Missing file: io error naming the path.
nlohmann::json ReadCheckpoint(const std::filesystem::path& path);
void WriteCheckpoint(const std::filesystem::path& path,
                     const nlohmann::json& doc);

}  // namespace seqdefer

#endif  // SEQDEFER_CHECKPOINT_HPP_
