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

// Experiment configuration: a flat `key = value` file.
//
//   # comment
//   schema = 1
//   task = mwp
//   seeds = 0,1,2,3,4
//   train.token.lr = 0.0005
//
// `schema` is required. Unknown or repeated keys are config errors that
// name the line. Serialize() writes every key in a fixed order with
// canonical values. ConfigHash() is the SHA-1 of that text with `out` and
// `seeds` blanked: outputs live in per-seed directories, so neither the
// output root nor the seed list changes what a stage computes.

#ifndef SEQDEFER_CONFIG_HPP_
#define SEQDEFER_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "seqdefer/experiments.hpp"

namespace seqdefer {

inline constexpr int kConfigSchema = 1;

enum class DeferralMode { kToken, kOnetime, kWhole };
std::string ToString(DeferralMode mode);
DeferralMode ParseDeferralMode(const std::string& name);

enum class SweepKind { kMethods, kJ, kAlpha, kRollout, kMatrix };
std::string ToString(SweepKind kind);
SweepKind ParseSweepKind(const std::string& name);

struct ExperimentConfig {
  TaskSetup setup;
  DeferralMode mode = DeferralMode::kToken;
  std::string method;  // empty: the mode's learned method
  MethodOptions options;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::string out = "runs";
  SweepKind sweep = SweepKind::kMethods;
  std::vector<int> sweep_sizes = {5, 10, 25, 51};
  std::vector<double> sweep_alphas = {0.0, 0.25, 0.5, 1.0, 2.0, 8.0};
  std::string sweep_matrix;  // config-matrix file for SweepKind::kMatrix
  int verify_samples = 10000;

  // The primary method: `method` or the one implied by `mode`.
  std::string Method() const;
};

// Parse errors and invalid values: config error naming the line.
ExperimentConfig ParseConfig(const std::string& text);
ExperimentConfig ReadConfig(const std::filesystem::path& path);
std::string SerializeConfig(const ExperimentConfig& config);
std::string ConfigHash(const ExperimentConfig& config);

// Cross-field checks: the method fits the task and mode, the CSV file
// exists, exact TSP completion has n <= 12.
void ValidateConfig(const ExperimentConfig& config);

// A config matrix is a base config path followed by `[name]` sections of
// overriding keys:
//
//   base = mwp.conf
//   [teacher]
//   train.token.rollout = teacher_forced
//
// Relative base paths resolve against the matrix file's directory.
struct MatrixEntry {
  std::string name;
  ExperimentConfig config;
};
std::vector<MatrixEntry> ReadConfigMatrix(const std::filesystem::path& path);

}  // namespace seqdefer

#endif  // SEQDEFER_CONFIG_HPP_
