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

// Comparators for the learned rejectors: confidence thresholding at the
// token, one-time and whole-sequence granularity, a learned whole-sequence
// rejector, and the random and oracle reference curves.

#ifndef SEQDEFER_BASELINES_HPP_
#define SEQDEFER_BASELINES_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "seqdefer/core.hpp"
#include "seqdefer/evaluation.hpp"
#include "seqdefer/rejectors.hpp"

namespace seqdefer {

enum class ConfidenceKind { kNegLogProb, kEntropy, kMcVariance };

std::string ToString(ConfidenceKind kind);
ConfidenceKind ParseConfidenceKind(const std::string& name);

// Shannon entropy in nats; zero-probability entries contribute 0.
double Entropy(std::span<const double> dist);

// Per-step confidence. kNegLogProb and kMcVariance read conf_score;
// kEntropy needs the stored predictive distribution (capability error
// without one).
double StepConfidence(ConfidenceKind kind, const StepRecord& step);

std::vector<double> TokenwiseConf(ConfidenceKind kind, const Trace& trace);

enum class ChowKind { kSum, kMean, kQuantile };

struct ChowRule {
  ChowKind kind = ChowKind::kMean;
  double alpha = 0.9;  // quantile level, kQuantile only
};

std::string ToString(const ChowRule& rule);

// Linear interpolation between order statistics at position alpha*(n-1).
double Quantile(std::vector<double> values, double alpha);

double ChowScore(const ChowRule& rule, std::span<const double> scores);
// Over the trace's stored conf_score values.
double ChowScore(const ChowRule& rule, const Trace& trace);

// One-time confidence scores over J: g_j is the step confidence at j for
// j <= L and g_{L+1} = min_j g_j - 1.
std::vector<double> OnetimeConf(ConfidenceKind kind, const Trace& trace,
                                const CandidateSet& candidates);

// Token scorer that thresholds a per-step confidence.
class ConfidenceScorer final : public StepScorer {
 public:
  explicit ConfidenceScorer(ConfidenceKind kind) : kind_(kind) {}
  double Next(const StepRecord& record) override {
    return StepConfidence(kind_, record);
  }

 private:
  ConfidenceKind kind_;
};

// Token scorer backed by a trained rejector; carries its recurrent state.
class ModelScorer final : public StepScorer {
 public:
  explicit ModelScorer(const TokenRejectorModel& model)
      : model_(&model), state_(model.InitialState()) {}
  double Next(const StepRecord& record) override {
    return model_->Score(record.features, state_);
  }
  void Commit(bool deferred) override {
    state_.prev_decision = deferred ? 1.0 : 0.0;
  }

 private:
  const TokenRejectorModel* model_;
  TokenRejectorModel::State state_;
};

// ---------------------------------------------------------------------------
// Learned whole-sequence rejector: logistic regression on the summary
// features plus confidence aggregates, label 1[expert beats predictor].

struct WholeEmbedModel {
  FeatureScaler scaler;
  std::vector<double> weights;
  double bias = 0.0;

  // Input vector: x_summary followed by the Chow sum, mean and maximum.
  static std::vector<double> Features(const Trace& trace);
  // Logit of P(expert better).
  double Score(const Trace& trace) const;
};

struct WholeEmbedLog {
  std::size_t positives = 0;
  std::size_t negatives = 0;
  int epochs_run = 0;
  std::vector<double> train_loss;
  std::vector<std::string> warnings;
};

struct WholeEmbedResult {
  WholeEmbedModel model;
  WholeEmbedLog log;
};

// Full-batch AdamW on the mean logistic loss. Weights start at zero and
// the bias at the prior log-odds, so epochs = 0 yields the prior-score
// model. A single-class label set also returns that model, with a warning.
WholeEmbedResult TrainWholeEmbed(std::span<const Trace> traces,
                                 const TrainConfig& config);

// ---------------------------------------------------------------------------
// Reference curves

// Token view: each stored token deferred independently with probability p;
// `draws` Monte Carlo rollouts per p over uniformly sampled instances.
DeferralCurve RandomCurveToken(std::span<const Trace> traces,
                               std::uint64_t seed,
                               std::span<const double> probabilities,
                               std::size_t draws);

// Whole view: each instance deferred with probability p.
DeferralCurve RandomCurveWhole(std::span<const Trace> traces,
                               std::uint64_t seed,
                               std::span<const double> probabilities,
                               std::size_t draws);

// The straight line between the pinned endpoints, its expectation.
DeferralCurve AnalyticRandomCurve(std::span<const Trace> traces);

// Budget-wise oracle on stored per-step losses: tokens pooled across
// instances and deferred in decreasing order of model_loss - expert_loss.
DeferralCurve OptimalCurveToken(std::span<const Trace> traces);

// Exact multiple-choice knapsack over per-instance hand-off options
// (L - j + 1 tokens, system loss at j), followed by the lower convex hull.
DeferralCurve OptimalCurveOnetime(std::span<const Trace> traces,
                                  const CandidateSet& candidates);

// Lower convex hull of points sorted by x.
std::vector<CurvePoint> LowerConvexHull(std::vector<CurvePoint> points);

std::vector<double> ProbabilityGrid(int steps);

}  // namespace seqdefer

#endif  // SEQDEFER_BASELINES_HPP_
