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

// Deferral curves and their summaries.
//
// A curve plots mean system loss against the mean number of deferred
// tokens as a threshold sweeps over a rejector's scores. Every curve is
// pinned at (0, predictor-only loss) and (L, expert-only loss).
//
// The curve kernels fan out over (threshold, instance) cells with OpenMP.
// Per-cell results land in a fixed array and are reduced with a pairwise
// sum, so the output does not depend on the thread count. The `serial`
// namespace holds straightforward single-threaded versions used as test
// references and benchmark baselines.

#ifndef SEQDEFER_EVALUATION_HPP_
#define SEQDEFER_EVALUATION_HPP_

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "seqdefer/core.hpp"
#include "seqdefer/rollout.hpp"

namespace seqdefer {

struct CurvePoint {
  double threshold = 0.0;
  double deferred = 0.0;  // mean deferred tokens per instance
  double loss = 0.0;      // mean system loss
};

struct DeferralCurve {
  std::string method;
  std::vector<CurvePoint> points;  // sorted by `deferred`, x values unique
};

// Sorts by x, merges duplicate x by averaging loss, and pins both
// endpoints (points already sitting at x = 0 or x = max_deferred are
// replaced by the pinned values).
DeferralCurve FinalizeCurve(std::string method, std::vector<CurvePoint> raw,
                            double max_deferred, double model_loss,
                            double expert_loss);

// Trapezoid rule over x. Fewer than two points: degenerate-curve error.
double Audc(const DeferralCurve& curve);

// 100 * (random - method) / random; zero random AUDC: division error.
double PctImprovement(double audc_method, double audc_random);

// Sorted distinct finite scores with -inf and +inf appended.
std::vector<double> ThresholdGrid(std::vector<double> scores);

// Deterministic pairwise summation.
double PairwiseSum(std::span<const double> values);

// Mean predictor-only and expert-only system losses.
double MeanModelLoss(std::span<const Trace> traces);
double MeanExpertLoss(std::span<const Trace> traces);

// ---------------------------------------------------------------------------
// Token-level

// Per-rollout scorer. Next() sees the record for the upcoming token and
// returns its score; Commit() reports whether that token was deferred.
class StepScorer {
 public:
  virtual ~StepScorer() = default;
  virtual double Next(const StepRecord& record) = 0;
  virtual void Commit(bool deferred) { (void)deferred; }
};

// Builds a fresh scorer for one rollout. Must be callable concurrently.
using ScorerFactory = std::function<std::unique_ptr<StepScorer>()>;

enum class TokenEvalMode {
  kStatic,  // stored per-step losses, no re-rolling
  kReroll,  // predictor re-run on the mixed prefix after each choice
};

std::string ToString(TokenEvalMode mode);

struct PolicyOutcome {
  double deferred = 0.0;
  double loss = 0.0;
};

// One rollout deferring token j iff score_j >= tau. In reroll mode `env`
// produces the records; in static mode the stored steps are replayed.
PolicyOutcome RunTokenPolicy(const Trace& trace, const RolloutEnv& env,
                             TokenEvalMode mode, StepScorer& scorer,
                             double tau);

// Scores seen along the predictor-only rollout of every trace, the
// source of the threshold grid for token-level curves.
std::vector<double> ObservedTokenScores(std::span<const Trace> traces,
                                        const RolloutEnv& env,
                                        TokenEvalMode mode,
                                        const ScorerFactory& factory);

DeferralCurve CurveToken(const std::string& method,
                         std::span<const Trace> traces, const RolloutEnv& env,
                         TokenEvalMode mode, const ScorerFactory& factory,
                         std::span<const double> thresholds);

// ---------------------------------------------------------------------------
// One-time and whole-sequence

// Deferral decision for one instance: stay with the predictor when
// g_{L+1} > tau, otherwise hand off at the best position other than L+1.
struct OnetimeChoice {
  double stay_score = 0.0;  // g_{L+1}
  int handoff = 0;          // argmax over J \ {L+1}, ties to the later j
};

OnetimeChoice ChooseOnetime(const CandidateSet& candidates,
                            std::span<const double> g);

// `g[i]` holds the scores of trace i over `candidates`.
DeferralCurve CurveOnetime(const std::string& method,
                           std::span<const Trace> traces,
                           const CandidateSet& candidates,
                           const std::vector<std::vector<double>>& g,
                           std::span<const double> thresholds);

// Whole-sequence deferral iff r(x) > tau.
DeferralCurve CurveWhole(const std::string& method,
                         std::span<const Trace> traces,
                         std::span<const double> scores,
                         std::span<const double> thresholds);

namespace serial {

DeferralCurve CurveToken(const std::string& method,
                         std::span<const Trace> traces, const RolloutEnv& env,
                         TokenEvalMode mode, const ScorerFactory& factory,
                         std::span<const double> thresholds);
DeferralCurve CurveOnetime(const std::string& method,
                           std::span<const Trace> traces,
                           const CandidateSet& candidates,
                           const std::vector<std::vector<double>>& g,
                           std::span<const double> thresholds);
DeferralCurve CurveWhole(const std::string& method,
                         std::span<const Trace> traces,
                         std::span<const double> scores,
                         std::span<const double> thresholds);

}  // namespace serial

// ---------------------------------------------------------------------------
// CSV output

// method,threshold,deferred_count,loss
std::string CurvesToCsv(const std::vector<DeferralCurve>& curves);

struct SummaryRow {
  std::string method;
  double audc = 0.0;
  double pct_improvement = 0.0;
  std::uint64_t seed = 0;
};

// method,audc,pct_improvement,seed
std::string SummaryToCsv(const std::vector<SummaryRow>& rows);

// Shortest round-trippable decimal form; "inf" / "-inf" for infinities.
std::string FormatDouble(double value);

}  // namespace seqdefer

#endif  // SEQDEFER_EVALUATION_HPP_
