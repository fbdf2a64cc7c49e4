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

// Method comparisons and sweeps over seeds.
//
// Every method is scored by the AUDC of its deferral curve on the test
// traces and by its percent improvement over the analytic random line.
// Learned one-time scores are log-softmax normalized before the stay
// threshold is applied, so thresholds act on log P(no deferral).

#ifndef SEQDEFER_EXPERIMENTS_HPP_
#define SEQDEFER_EXPERIMENTS_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seqdefer/baselines.hpp"
#include "seqdefer/evaluation.hpp"
#include "seqdefer/rejectors.hpp"
#include "seqdefer/tasks.hpp"

namespace seqdefer {

struct TaskSetup {
  TaskKind kind = TaskKind::kMwp;
  TspConfig tsp;
  MwpConfig mwp;
  TextConfig text;
};

// The task's dataset with its config seed replaced by `seed`.
TaskDataset BuildDataset(const TaskSetup& setup, std::uint64_t seed);
int TaskLength(const TaskSetup& setup);

// Method names.
inline constexpr const char* kTokenwiseModel = "TokenwiseModel";
inline constexpr const char* kTokenwiseScore = "TokenwiseScore";
inline constexpr const char* kTokenwiseEntropy = "TokenwiseEntropy";
inline constexpr const char* kOneTimeModel = "OneTimeModel";
inline constexpr const char* kOneTimeScore = "OneTimeScore";
inline constexpr const char* kOneTimeEntropy = "OneTimeEntropy";
inline constexpr const char* kChowSum = "ChowSum";
inline constexpr const char* kChowMean = "ChowMean";
inline constexpr const char* kChowQuantile = "ChowQuantile";
inline constexpr const char* kWholeModelEmbed = "WholeModelEmbed";
inline constexpr const char* kRandom = "Random";
inline constexpr const char* kOptimal = "Optimal";

// Methods a task supports, in report order. TSP has no token-level
// collaboration; entropy needs a finite vocabulary, so MWP has none.
std::vector<std::string> ApplicableMethods(TaskKind kind);
// Config error naming the method and task when it does not apply.
void CheckMethod(TaskKind kind, const std::string& method);
bool IsWholeMethod(const std::string& method);

// mc_variance for MWP, neg_log_prob otherwise.
ConfidenceKind DefaultConfidence(TaskKind kind);

struct MethodOptions {
  TrainConfig token = DefaultTokenConfig();
  TrainConfig onetime = DefaultOnetimeConfig();
  TrainConfig whole = DefaultOnetimeConfig();
  TokenRejectorSpec token_spec;  // feature_dim taken from the data
  OnetimeSpec onetime_spec;      // summary_dim taken from the data
  int candidate_size = 0;        // 0: the full grid {1, ..., L + 1}
  TokenEvalMode eval_mode = TokenEvalMode::kReroll;
  std::optional<ConfidenceKind> confidence;  // unset: DefaultConfidence
  double chow_alpha = 0.9;
  std::vector<std::string> methods;  // empty: every applicable method
};

CandidateSet Candidates(const MethodOptions& options, int length);

struct TrainedModels {
  std::optional<TokenRejectorModel> token;
  std::optional<OneTimeModel> onetime;
  std::optional<WholeEmbedModel> whole;
  std::optional<TrainingLog> token_log;
  std::optional<TrainingLog> onetime_log;
  std::optional<WholeEmbedLog> whole_log;
};

// Trains the models that the selected methods need; every train config
// is reseeded with `seed`.
TrainedModels TrainModels(const TaskDataset& data, const MethodOptions& options,
                          std::uint64_t seed);

struct MethodResult {
  std::string method;
  DeferralCurve curve;
  double audc = 0.0;
  double pct = 0.0;
};

struct Comparison {
  std::uint64_t seed = 0;
  double random_audc = 0.0;
  std::vector<MethodResult> methods;
  const MethodResult* Find(const std::string& method) const;
};

// Evaluates the selected methods; a learned method without its model is
// a capability error.
Comparison EvaluateMethods(const TaskDataset& data, const TrainedModels& models,
                           const MethodOptions& options, std::uint64_t seed);
Comparison CompareMethods(const TaskDataset& data, const MethodOptions& options,
                          std::uint64_t seed);

// Subtracts the log-sum-exp from each score vector.
std::vector<std::vector<double>> LogSoftmaxRows(
    std::vector<std::vector<double>> g);

// Mean fraction of tokens each model defers under its own decision rule
// (r >= 0, or argmax g), in [0, 1].
double TokenDeferralRate(const TokenRejectorModel& model,
                         std::span<const Trace> traces, const RolloutEnv& env,
                         TokenEvalMode mode);
double OnetimeDeferralRate(const OneTimeModel& model,
                           std::span<const Trace> traces);

// ---------------------------------------------------------------------------
// Sweeps

struct SweepCell {
  std::string group;  // e.g. "5", "0.5", "teacher_forced"
  std::string method;
  std::uint64_t seed = 0;
  double audc = 0.0;
  double pct = 0.0;
  std::optional<double> deferral_rate;
};

struct SweepRow {
  std::string group;
  std::string method;
  std::size_t runs = 0;
  double audc_mean = 0.0;
  double audc_std = 0.0;
  double pct_mean = 0.0;
  double pct_std = 0.0;
  std::optional<double> rate_mean;
};

// Groups by (group, method) in first-seen order; std is the sample
// standard deviation (0 for one run).
std::vector<SweepRow> Aggregate(std::span<const SweepCell> cells);
// "12.34 (0.56)"
std::string FormatMeanStd(double mean, double std, int precision = 2);
double SampleStd(std::span<const double> values);

// group,method,runs,audc_mean,audc_std,pct_mean,pct_std,audc,pct,deferral_rate
std::string SweepToCsv(std::span<const SweepRow> rows);
// group,method,seed,audc,pct,deferral_rate
std::string SweepCellsToCsv(std::span<const SweepCell> cells);

// Every applicable method per seed; one group "all".
std::vector<SweepCell> MethodSweep(const TaskSetup& setup,
                                   const MethodOptions& options,
                                   std::span<const std::uint64_t> seeds);

// OneTimeModel and OneTimeScore per uniform candidate grid size. A size
// below 2 or above L + 1: parameter error.
std::vector<SweepCell> JSweep(const TaskSetup& setup,
                              std::span<const int> sizes,
                              const MethodOptions& options,
                              std::span<const std::uint64_t> seeds);

// Learned rejectors retrained per alpha_1, with their deferral rates.
// Negative alpha: parameter error.
std::vector<SweepCell> AlphaSweep(const TaskSetup& setup,
                                  std::span<const double> alphas,
                                  const MethodOptions& options,
                                  std::span<const std::uint64_t> seeds);

// TokenwiseModel trained under teacher forcing, free running and
// scheduled sampling. TSP: capability error.
std::vector<SweepCell> RolloutAblation(const TaskSetup& setup,
                                       const MethodOptions& options,
                                       std::span<const std::uint64_t> seeds);

}  // namespace seqdefer

#endif  // SEQDEFER_EXPERIMENTS_HPP_
