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

// Domain types shared by every module: labels, deferral cost schedules,
// candidate hand-off sets and the per-instance Trace record.
//
// Positions are 1-based throughout. For a sequence of length L, position
// j in [1, L] names the j-th token and L + 1 is the "no deferral" action.

#ifndef SEQDEFER_CORE_HPP_
#define SEQDEFER_CORE_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace seqdefer {

enum class ErrorKind {
  kPosition,
  kShape,
  kParameter,
  kNumeric,
  kData,
  kCapability,
  kValidity,
  kEmptyInput,
  kConfig,
  kStaleness,
  kDegenerateCurve,
  kDivision,
  kFit,
  kIo,
};

const char* ErrorKindName(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void Fail(ErrorKind kind, const std::string& message);

// A token is either a vocabulary id or a real value; a task uses one kind.
using Label = std::variant<std::int64_t, double>;

enum class LabelKind { kDiscrete, kScalar };

inline bool IsDiscrete(const Label& label) {
  return std::holds_alternative<std::int64_t>(label);
}
inline std::int64_t LabelId(const Label& label) {
  return std::get<std::int64_t>(label);
}
inline double LabelValue(const Label& label) {
  return std::get<double>(label);
}

// alpha_j = ((L - j + 1) / L) * alpha_1: the price of letting the expert
// produce tokens j..L.
class CostSchedule {
 public:
  CostSchedule(double alpha1, int length);

  double alpha1() const { return alpha1_; }
  int length() const { return length_; }
  double PerToken() const { return alpha1_ / length_; }

  // Valid for j in [1, L + 1]; alpha_{L+1} = 0 (nothing deferred).
  double AlphaAt(int j) const;

 private:
  double alpha1_;
  int length_;
};

double AlphaAt(const CostSchedule& schedule, int j);

// Allowed one-time hand-off positions. Always contains L + 1.
class CandidateSet {
 public:
  CandidateSet(std::vector<int> positions, int length);

  static CandidateSet Full(int length);
  // `size` points spread uniformly over {1, ..., L + 1}, endpoints included.
  static CandidateSet UniformGrid(int length, int size);

  const std::vector<int>& positions() const { return positions_; }
  int length() const { return length_; }
  std::size_t size() const { return positions_.size(); }
  int operator[](std::size_t i) const { return positions_[i]; }

  std::optional<std::size_t> IndexOf(int j) const;
  bool Contains(int j) const { return IndexOf(j).has_value(); }
  // Index of the L + 1 action (always the last entry).
  std::size_t NoDeferIndex() const { return positions_.size() - 1; }
  bool IsSubsetOf(const CandidateSet& other) const;

  friend bool operator==(const CandidateSet&, const CandidateSet&) = default;

 private:
  std::vector<int> positions_;
  int length_;
};

// Everything logged about one decoding step of the predictor.
struct StepRecord {
  int j = 0;
  Label model_pred = std::int64_t{0};
  Label expert_pred = std::int64_t{0};
  double model_loss = 0.0;   // l(y, yhat^h_j)
  double expert_loss = 0.0;  // quality loss of the expert token, no price
  double expert_cost = 0.0;  // c_j: expert_loss plus the per-token price
  double conf_score = 0.0;   // -log p or Monte Carlo variance
  std::vector<double> dist;  // predictive distribution (finite vocab only)
  std::vector<double> features;
};

// Task-declared bounds and shape metadata.
struct TaskBounds {
  LabelKind label_kind = LabelKind::kDiscrete;
  std::int64_t vocab_size = 0;  // 0 for scalar tasks
  int length = 0;               // L
  std::size_t feature_dim = 0;  // StepRecord::features
  std::size_t summary_dim = 0;  // Trace::x_summary
  double loss_max = 0.0;        // l-bar
  double cost_min = 0.0;        // c-bar
  double cost_max = 0.0;        // C-bar
};

struct Trace {
  std::string instance_id;
  std::vector<double> x_summary;  // one-time / whole-sequence rejector input
  std::vector<double> inputs;     // raw predictor input x
  std::vector<Label> target;      // ground truth y
  std::vector<StepRecord> steps;  // pure predictor rollout, length L

  // Aligned with `candidates`.
  std::vector<int> candidates;
  std::vector<double> prefix_losses;   // l(y, yhat_{<j})
  std::vector<double> onetime_costs;   // c~_j, price included
  std::vector<double> onetime_alpha;   // alpha_j
  std::vector<double> system_losses;   // evaluation-axis loss of the hand-off

  double expert_full_loss = 0.0;  // system loss when j = 1
  double model_full_loss = 0.0;   // system loss when j = L + 1

  int length() const { return static_cast<int>(steps.size()); }
  CandidateSet Candidates() const { return CandidateSet(candidates, length()); }
  // Index of position j in `candidates`; position error when absent.
  std::size_t CandidateIndex(int j) const;
};

struct Violation {
  std::string path;
  std::string message;
};

// First invariant violation, or nullopt for a well-formed trace.
std::optional<Violation> ValidateTrace(const Trace& trace,
                                       const TaskBounds& bounds);

// Median over traces of (model_full_loss - expert_full_loss), floored at 0.
double RecommendAlpha1(std::span<const Trace> train_traces);

}  // namespace seqdefer

#endif  // SEQDEFER_CORE_HPP_
