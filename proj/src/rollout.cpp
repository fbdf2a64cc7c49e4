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

#include "seqdefer/rollout.hpp"

#include <algorithm>
#include <cmath>

namespace seqdefer {

StepRecord StaticEnv::Step(const Trace& trace,
                           std::span<const Label> context) const {
  if (context.size() >= trace.steps.size()) {
    Fail(ErrorKind::kPosition, "rollout ran past the sequence length");
  }
  return trace.steps[context.size()];
}

double RolloutMode::TeacherProbability(int epoch) const {
  switch (kind) {
    case RolloutKind::kTeacherForced: return 1.0;
    case RolloutKind::kFreeRunning: return 0.0;
    case RolloutKind::kScheduled:
      if (epoch < warmup_epochs) return 1.0;
      return std::max(floor, std::pow(decay, epoch - warmup_epochs + 1));
  }
  return 0.0;
}

std::string ToString(RolloutKind kind) {
  switch (kind) {
    case RolloutKind::kTeacherForced: return "teacher_forced";
    case RolloutKind::kFreeRunning: return "free_running";
    case RolloutKind::kScheduled: return "scheduled_sampling";
  }
  return "free_running";
}

RolloutKind ParseRolloutKind(const std::string& name) {
  if (name == "teacher_forced") return RolloutKind::kTeacherForced;
  if (name == "free_running") return RolloutKind::kFreeRunning;
  if (name == "scheduled_sampling" || name == "scheduled") {
    return RolloutKind::kScheduled;
  }
  Fail(ErrorKind::kConfig, "unknown rollout mode '" + name + "'");
}

}  // namespace seqdefer
