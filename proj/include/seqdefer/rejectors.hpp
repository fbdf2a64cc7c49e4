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

// Trainable rejectors.
//
// TokenRejectorModel scores each decoding step, r_j >= 0 meaning "ask the
// expert for token j". The optional recurrent state is carried along j and
// sees the previous decision, so later scores can depend on earlier
// hand-offs.
//
// OneTimeModel maps the instance summary to |J| clamped scores g_j; the
// hand-off position is argmax_j g_j.
//
// Training is single-threaded and deterministic for a given seed.

#ifndef SEQDEFER_REJECTORS_HPP_
#define SEQDEFER_REJECTORS_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "seqdefer/autodiff.hpp"
#include "seqdefer/core.hpp"
#include "seqdefer/rng.hpp"
#include "seqdefer/rollout.hpp"
#include "seqdefer/surrogates.hpp"

namespace seqdefer {

struct MlpSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;  // rectifier layers
  double dropout_rate = 0.0;        // after each hidden layer, train only
  std::size_t output_dim = 1;
};

// Feed-forward stack registered inside a caller-owned ParamSet.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const MlpSpec& spec, ad::ParamSet& params, const std::string& prefix);

  const MlpSpec& spec() const { return spec_; }
  // Glorot-uniform weights, zero biases.
  void Initialize(ad::ParamSet& params, Rng& rng) const;
  // `dropout` holds one stream per hidden layer, or is null at evaluation.
  ad::Var Forward(ad::Tape& tape, ad::Var x, std::vector<Rng>* dropout) const;
  std::size_t LayerCount() const { return weights_.size(); }

 private:
  MlpSpec spec_;
  std::vector<std::size_t> weights_;
  std::vector<std::size_t> biases_;
};

// Per-column standardization fixed at training time.
struct FeatureScaler {
  std::vector<double> mean;
  std::vector<double> inv_std;

  static FeatureScaler Identity(std::size_t dim);
  static FeatureScaler Fit(const std::vector<std::vector<double>>& rows,
                           std::size_t dim);
  std::vector<double> Apply(std::span<const double> x) const;
};

enum class OptimizerKind { kAdamW, kSgd };

std::string ToString(OptimizerKind kind);
OptimizerKind ParseOptimizerKind(const std::string& name);

struct EarlyStopping {
  int patience = 20;
  double delta = 1e-4;
};

struct TrainConfig {
  double learning_rate = 5e-4;
  int epochs = 200;
  int batch_size = 32;
  EarlyStopping early_stopping;
  double weight_decay = 0.005;
  double grad_clip_norm = 1.0;
  std::uint64_t seed = 0;
  RolloutMode rollout;
  PhiKind phi = PhiKind::kLogistic;
  PsiKind psi = PsiKind::kCe;
  OptimizerKind optimizer = OptimizerKind::kAdamW;
  double validation_fraction = 0.2;
};

// Hyperparameter presets for the one-time MLP and the token-level
// recurrent rejector.
TrainConfig DefaultOnetimeConfig();
TrainConfig DefaultTokenConfig();

struct TrainingLog {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<double> best_val;       // best-so-far validation loss
  std::vector<double> teacher_prob;   // scheduled-sampling probability
  int best_epoch = -1;
  int epochs_run = 0;
  bool early_stopped = false;
  std::vector<std::string> warnings;
};

// Decoupled weight decay with Adam moments or plain gradient steps.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, double weight_decay);
  void Step(ad::ParamSet& params);

 private:
  OptimizerKind kind_;
  double lr_;
  double wd_;
  long step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

// Clips the global gradient norm; returns the norm before clipping.
double ClipGradNorm(ad::ParamSet& params, double max_norm);

// ---------------------------------------------------------------------------
// Token-level rejector

struct TokenRejectorSpec {
  std::size_t feature_dim = 0;
  std::vector<std::size_t> hidden = {64, 64};
  double dropout_rate = 0.4;
  bool recurrent = true;
  std::size_t state_dim = 16;
};

class TokenRejectorModel {
 public:
  // Carried between steps during a rollout.
  struct State {
    std::vector<double> hidden;
    double prev_decision = 0.0;
  };

  TokenRejectorModel(const TokenRejectorSpec& spec, std::uint64_t init_seed);

  const TokenRejectorSpec& spec() const { return spec_; }
  ad::ParamSet& params() { return params_; }
  const ad::ParamSet& params() const { return params_; }
  FeatureScaler& scaler() { return scaler_; }
  const FeatureScaler& scaler() const { return scaler_; }
  std::uint64_t init_seed() const { return init_seed_; }

  struct StepOutput {
    ad::Var score;
    ad::Var hidden;
  };

  State InitialState() const;
  ad::Var InitialHidden(ad::Tape& tape) const;
  // Records one step on the tape. `hidden` is the previous recurrent state
  // (ignored by the feed-forward variant).
  StepOutput ForwardStep(ad::Tape& tape, std::span<const double> features,
                         ad::Var hidden, double prev_decision,
                         std::vector<Rng>* dropout) const;
  // Evaluation-mode score; advances state.hidden. The caller records the
  // decision in state.prev_decision.
  double Score(std::span<const double> features, State& state) const;

  std::size_t DropoutStreams() const { return trunk_.LayerCount(); }

 private:
  TokenRejectorSpec spec_;
  std::uint64_t init_seed_;
  ad::ParamSet params_;
  FeatureScaler scaler_;
  Mlp trunk_;
  std::size_t state_weight_ = 0;
  std::size_t state_bias_ = 0;
};

struct TokenForwardResult {
  std::vector<double> scores;
  std::vector<int> decisions;      // 1 = expert token used
  std::vector<Label> context;      // the realized sequence
  std::vector<StepRecord> steps;   // records seen along the rollout
};

// Evaluation-mode rollout. The decision for the next context is the oracle
// 1[l >= c] with probability `teacher_prob` and the model's own sign test
// otherwise; teacher_prob < 0 derives it from the mode (1 for teacher
// forcing, 0 for free running, warmup value for scheduled sampling).
TokenForwardResult TokenForward(const TokenRejectorModel& model,
                                const Trace& trace, const RolloutMode& mode,
                                const RolloutEnv& env, Rng& rng,
                                double teacher_prob = -1.0);

struct TokenTrainResult {
  TokenRejectorModel model;
  TrainingLog log;
};

TokenTrainResult TrainTokenRejector(std::span<const Trace> traces,
                                    const RolloutEnv& env,
                                    const TokenRejectorSpec& spec,
                                    const TrainConfig& config);

// Mean surrogate objective over `batch` with dropout off, contexts rolled
// out per `mode` (teacher_prob fixed to 1 or 0).
double TokenObjective(const TokenRejectorModel& model,
                      std::span<const Trace> batch, const RolloutEnv& env,
                      const RolloutMode& mode, PhiKind phi);

// ---------------------------------------------------------------------------
// One-time rejector

struct OnetimeSpec {
  std::size_t summary_dim = 0;
  std::vector<std::size_t> hidden = {8};
  double dropout_rate = 0.2;
  double score_clamp = 10.0;  // outputs lie in (-M, M)
};

class OneTimeModel {
 public:
  OneTimeModel(const OnetimeSpec& spec, CandidateSet candidates,
               std::uint64_t init_seed);

  const OnetimeSpec& spec() const { return spec_; }
  const CandidateSet& candidates() const { return candidates_; }
  ad::ParamSet& params() { return params_; }
  const ad::ParamSet& params() const { return params_; }
  FeatureScaler& scaler() { return scaler_; }
  const FeatureScaler& scaler() const { return scaler_; }
  std::uint64_t init_seed() const { return init_seed_; }

  ad::Var Forward(ad::Tape& tape, std::span<const double> summary,
                  std::vector<Rng>* dropout) const;
  // Clamped scores over the candidates, evaluation mode.
  std::vector<double> Scores(const Trace& trace) const;
  // Hand-off position argmax_j g_j (ties toward the later position).
  int Decide(const Trace& trace) const;

  std::size_t DropoutStreams() const { return trunk_.LayerCount(); }

 private:
  OnetimeSpec spec_;
  CandidateSet candidates_;
  std::uint64_t init_seed_;
  ad::ParamSet params_;
  FeatureScaler scaler_;
  Mlp trunk_;
};

struct OnetimeTrainResult {
  OneTimeModel model;
  TrainingLog log;
};

OnetimeTrainResult TrainOnetimeRejector(std::span<const Trace> traces,
                                        const CandidateSet& candidates,
                                        const OnetimeSpec& spec,
                                        const TrainConfig& config);

double OnetimeObjective(const OneTimeModel& model,
                        std::span<const Trace> batch, PsiKind psi);

// ---------------------------------------------------------------------------
// Gradient verification against central differences. Returns the maximum
// over parameters of |analytic - numeric| / max(|analytic|, |numeric|,
// kGradCheckFloor). Dropout is off; token rollouts use teacher forcing.

inline constexpr double kGradCheckFloor = 1e-6;

double GradCheckToken(const TokenRejectorModel& model,
                      std::span<const Trace> batch, const RolloutEnv& env,
                      PhiKind phi, double epsilon);
double GradCheckOnetime(const OneTimeModel& model,
                        std::span<const Trace> batch, PsiKind psi,
                        double epsilon);

}  // namespace seqdefer

#endif  // SEQDEFER_REJECTORS_HPP_
