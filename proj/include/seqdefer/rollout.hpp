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

// Token-level collaboration between predictor and expert. A RolloutEnv
// re-runs the predictor on a prefix that may mix predictor and expert
// tokens; the stored Trace steps are the special case of a prefix made of
// predictor tokens only.

#ifndef SEQDEFER_ROLLOUT_HPP_
#define SEQDEFER_ROLLOUT_HPP_

#include <span>
#include <string>

#include "seqdefer/core.hpp"

namespace seqdefer {

class RolloutEnv {
 public:
  virtual ~RolloutEnv() = default;

  // Whether Step() depends on the prefix at all.
  virtual bool autoregressive() const = 0;

  // Record for position context.size() + 1. `context` holds the labels
  // chosen at steps 1..j-1.
  virtual StepRecord Step(const Trace& trace,
                          std::span<const Label> context) const = 0;
};

// Replays the stored steps regardless of the prefix.
class StaticEnv final : public RolloutEnv {
 public:
  bool autoregressive() const override { return false; }
  StepRecord Step(const Trace& trace,
                  std::span<const Label> context) const override;
};

enum class RolloutKind { kTeacherForced, kFreeRunning, kScheduled };

// How the next-step context is formed while training a token rejector.
struct RolloutMode {
  RolloutKind kind = RolloutKind::kFreeRunning;
  double decay = 0.95;
  double floor = 0.5;
  int warmup_epochs = 5;

  // Probability of using the oracle decision 1[l >= c] at a token.
  double TeacherProbability(int epoch) const;

  static RolloutMode TeacherForced() { return {RolloutKind::kTeacherForced}; }
  static RolloutMode FreeRunning() { return {RolloutKind::kFreeRunning}; }
  static RolloutMode Scheduled() { return {RolloutKind::kScheduled}; }
};

std::string ToString(RolloutKind kind);
RolloutKind ParseRolloutKind(const std::string& name);

}  // namespace seqdefer

#endif  // SEQDEFER_ROLLOUT_HPP_
