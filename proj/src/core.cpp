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

#include "seqdefer/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace seqdefer {

const char* ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kPosition: return "position error";
    case ErrorKind::kShape: return "shape error";
    case ErrorKind::kParameter: return "parameter error";
    case ErrorKind::kNumeric: return "numeric error";
    case ErrorKind::kData: return "data error";
    case ErrorKind::kCapability: return "capability error";
    case ErrorKind::kValidity: return "validity error";
    case ErrorKind::kEmptyInput: return "empty-input error";
    case ErrorKind::kConfig: return "config error";
    case ErrorKind::kStaleness: return "staleness error";
    case ErrorKind::kDegenerateCurve: return "degenerate-curve error";
    case ErrorKind::kDivision: return "division error";
    case ErrorKind::kFit: return "fit error";
    case ErrorKind::kIo: return "io error";
  }
  return "error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(ErrorKindName(kind)) + ": " + message),
      kind_(kind) {}

void Fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

CostSchedule::CostSchedule(double alpha1, int length)
    : alpha1_(alpha1), length_(length) {
  if (!std::isfinite(alpha1) || alpha1 < 0.0) {
    Fail(ErrorKind::kParameter, "alpha1 must be finite and nonnegative");
  }
  if (length < 1) Fail(ErrorKind::kParameter, "sequence length must be >= 1");
}

double CostSchedule::AlphaAt(int j) const {
  if (j < 1 || j > length_ + 1) {
    std::ostringstream os;
    os << "position " << j << " outside [1, " << length_ + 1 << "]";
    Fail(ErrorKind::kPosition, os.str());
  }
  return static_cast<double>(length_ - j + 1) / length_ * alpha1_;
}

double AlphaAt(const CostSchedule& schedule, int j) {
  if (j > schedule.length()) {
    Fail(ErrorKind::kPosition, "token position beyond sequence length");
  }
  return schedule.AlphaAt(j);
}

CandidateSet::CandidateSet(std::vector<int> positions, int length)
    : positions_(std::move(positions)), length_(length) {
  if (length < 1) Fail(ErrorKind::kParameter, "sequence length must be >= 1");
  if (positions_.size() < 2) {
    Fail(ErrorKind::kParameter, "candidate set needs at least two positions");
  }
  for (std::size_t i = 0; i < positions_.size(); ++i) {
    if (positions_[i] < 1 || positions_[i] > length + 1) {
      Fail(ErrorKind::kPosition, "candidate position out of range");
    }
    if (i > 0 && positions_[i] <= positions_[i - 1]) {
      Fail(ErrorKind::kParameter, "candidate positions must strictly increase");
    }
  }
  if (positions_.back() != length + 1) {
    Fail(ErrorKind::kParameter, "candidate set must contain L + 1");
  }
}

CandidateSet CandidateSet::Full(int length) {
  std::vector<int> all(static_cast<std::size_t>(length) + 1);
  for (int j = 1; j <= length + 1; ++j) all[j - 1] = j;
  return CandidateSet(std::move(all), length);
}

CandidateSet CandidateSet::UniformGrid(int length, int size) {
  if (size < 2) Fail(ErrorKind::kParameter, "grid size must be >= 2");
  if (size > length + 1) {
    Fail(ErrorKind::kParameter, "grid size exceeds L + 1 positions");
  }
  std::vector<int> grid;
  grid.reserve(size);
  for (int k = 0; k < size; ++k) {
    // Rounded affine map of k onto [1, L + 1]; distinct because the step
    // L / (size - 1) is at least 1.
    const double t = 1.0 + static_cast<double>(k) * length / (size - 1);
    grid.push_back(static_cast<int>(std::lround(t)));
  }
  return CandidateSet(std::move(grid), length);
}

std::optional<std::size_t> CandidateSet::IndexOf(int j) const {
  auto it = std::lower_bound(positions_.begin(), positions_.end(), j);
  if (it == positions_.end() || *it != j) return std::nullopt;
  return static_cast<std::size_t>(it - positions_.begin());
}

bool CandidateSet::IsSubsetOf(const CandidateSet& other) const {
  if (length_ != other.length_) return false;
  return std::all_of(positions_.begin(), positions_.end(),
                     [&](int j) { return other.Contains(j); });
}

std::size_t Trace::CandidateIndex(int j) const {
  auto it = std::lower_bound(candidates.begin(), candidates.end(), j);
  if (it == candidates.end() || *it != j) {
    std::ostringstream os;
    os << "position " << j << " is not a stored candidate of trace "
       << instance_id;
    Fail(ErrorKind::kPosition, os.str());
  }
  return static_cast<std::size_t>(it - candidates.begin());
}

namespace {

std::string StepPath(std::size_t i, const char* field) {
  std::ostringstream os;
  os << "steps[" << i << "]." << field;
  return os.str();
}

std::string IndexPath(const char* field, std::size_t i) {
  std::ostringstream os;
  os << field << "[" << i << "]";
  return os.str();
}

std::optional<Violation> CheckLabel(const Label& label,
                                    const TaskBounds& bounds,
                                    const std::string& path) {
  if (bounds.label_kind == LabelKind::kDiscrete) {
    if (!IsDiscrete(label)) return Violation{path, "expected a discrete label"};
    const auto id = LabelId(label);
    if (id < 0 || id >= bounds.vocab_size) {
      return Violation{path, "label id outside vocabulary"};
    }
  } else {
    if (IsDiscrete(label)) return Violation{path, "expected a scalar label"};
    if (!std::isfinite(LabelValue(label))) {
      return Violation{path, "non-finite label"};
    }
  }
  return std::nullopt;
}

bool AllFinite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(),
                     [](double x) { return std::isfinite(x); });
}

}  // namespace

std::optional<Violation> ValidateTrace(const Trace& trace,
                                       const TaskBounds& bounds) {
  const int length = bounds.length;
  if (trace.length() != length) {
    return Violation{"steps", "expected exactly L step records"};
  }
  if (trace.target.size() != static_cast<std::size_t>(length)) {
    return Violation{"target", "target length must equal L"};
  }
  for (std::size_t i = 0; i < trace.target.size(); ++i) {
    if (auto v = CheckLabel(trace.target[i], bounds, IndexPath("target", i))) {
      return v;
    }
  }
  if (trace.x_summary.size() != bounds.summary_dim) {
    return Violation{"x_summary", "summary dimension mismatch"};
  }
  if (!AllFinite(trace.x_summary)) {
    return Violation{"x_summary", "non-finite summary feature"};
  }
  if (!AllFinite(trace.inputs)) {
    return Violation{"inputs", "non-finite input"};
  }
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const StepRecord& s = trace.steps[i];
    if (s.j != static_cast<int>(i) + 1) {
      return Violation{StepPath(i, "j"), "step positions must be 1..L"};
    }
    if (auto v = CheckLabel(s.model_pred, bounds, StepPath(i, "model_pred"))) {
      return v;
    }
    if (auto v =
            CheckLabel(s.expert_pred, bounds, StepPath(i, "expert_pred"))) {
      return v;
    }
    if (!std::isfinite(s.model_loss)) {
      return Violation{StepPath(i, "model_loss"), "non-finite loss"};
    }
    if (s.model_loss < 0.0 || s.model_loss > bounds.loss_max) {
      return Violation{StepPath(i, "model_loss"), "loss outside [0, l-bar]"};
    }
    if (!std::isfinite(s.expert_loss) || !std::isfinite(s.expert_cost)) {
      return Violation{StepPath(i, "expert_cost"), "non-finite cost"};
    }
    if (s.expert_loss < 0.0) {
      return Violation{StepPath(i, "expert_loss"), "negative expert loss"};
    }
    if (s.expert_cost < bounds.cost_min || s.expert_cost > bounds.cost_max) {
      return Violation{StepPath(i, "expert_cost"),
                       "cost outside [c-bar, C-bar]"};
    }
    if (!std::isfinite(s.conf_score) || s.conf_score < 0.0) {
      return Violation{StepPath(i, "conf_score"),
                       "confidence must be finite and nonnegative"};
    }
    if (s.features.size() != bounds.feature_dim) {
      return Violation{StepPath(i, "features"), "feature dimension mismatch"};
    }
    if (!AllFinite(s.features) || !AllFinite(s.dist)) {
      return Violation{StepPath(i, "features"), "non-finite feature"};
    }
  }

  const std::size_t n = trace.candidates.size();
  if (n < 2) return Violation{"candidates", "need at least two candidates"};
  for (std::size_t i = 0; i < n; ++i) {
    const int j = trace.candidates[i];
    if (j < 1 || j > length + 1 || (i > 0 && j <= trace.candidates[i - 1])) {
      return Violation{IndexPath("candidates", i),
                       "candidates must strictly increase within [1, L+1]"};
    }
  }
  if (trace.candidates.back() != length + 1) {
    return Violation{"candidates", "candidate set must contain L + 1"};
  }
  if (trace.prefix_losses.size() != n || trace.onetime_costs.size() != n ||
      trace.onetime_alpha.size() != n || trace.system_losses.size() != n) {
    return Violation{"prefix_losses",
                     "one-time arrays must have one entry per candidate"};
  }
  if (!AllFinite(trace.prefix_losses)) {
    return Violation{"prefix_losses", "non-finite prefix loss"};
  }
  if (!AllFinite(trace.onetime_costs) || !AllFinite(trace.onetime_alpha)) {
    return Violation{"onetime_costs", "non-finite cost"};
  }
  if (!AllFinite(trace.system_losses)) {
    return Violation{"system_losses", "non-finite system loss"};
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (trace.prefix_losses[i] < 0.0) {
      return Violation{IndexPath("prefix_losses", i), "negative prefix loss"};
    }
    if (trace.onetime_costs[i] < 0.0 || trace.onetime_alpha[i] < 0.0) {
      return Violation{IndexPath("onetime_costs", i), "negative cost"};
    }
  }
  if (trace.candidates.front() == 1 && trace.prefix_losses.front() != 0.0) {
    return Violation{"prefix_losses[0]", "prefix loss at j=1 must be 0"};
  }
  if (trace.onetime_alpha.back() != 0.0) {
    return Violation{"onetime_alpha", "no-deferral action must be free"};
  }
  if (!std::isfinite(trace.model_full_loss) ||
      !std::isfinite(trace.expert_full_loss)) {
    return Violation{"model_full_loss", "non-finite system loss"};
  }
  if (trace.system_losses.back() != trace.model_full_loss) {
    return Violation{"model_full_loss",
                     "must equal the system loss of the L + 1 action"};
  }
  if (trace.candidates.front() == 1 &&
      trace.system_losses.front() != trace.expert_full_loss) {
    return Violation{"expert_full_loss",
                     "must equal the system loss of the j = 1 action"};
  }
  return std::nullopt;
}

double RecommendAlpha1(std::span<const Trace> train_traces) {
  if (train_traces.empty()) {
    Fail(ErrorKind::kEmptyInput, "need at least one training trace");
  }
  std::vector<double> diffs;
  diffs.reserve(train_traces.size());
  for (const Trace& t : train_traces) {
    diffs.push_back(t.model_full_loss - t.expert_full_loss);
  }
  std::sort(diffs.begin(), diffs.end());
  const std::size_t n = diffs.size();
  const double median = n % 2 == 1 ? diffs[n / 2]
                                   : 0.5 * (diffs[n / 2 - 1] + diffs[n / 2]);
  return std::max(0.0, median);
}

}  // namespace seqdefer
