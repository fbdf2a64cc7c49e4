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

// Task adapters that turn generated instances into Traces.
//
//   tsp   next city in tour order; nearest-neighbour predictor, 2-opt (or
//         exact) completion as the expert; one-time deferral only.
//   mwp   six-step scalar forecast; least-squares AR predictor, noisy
//         ground truth as the expert.
//   text  discrete Markov sequences; order-1 predictor, order-2 expert.
//
// Traces always carry the full grid {1, ..., L + 1}; smaller candidate
// sets are subsets of it.

#ifndef SEQDEFER_TASKS_HPP_
#define SEQDEFER_TASKS_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "seqdefer/core.hpp"
#include "seqdefer/rng.hpp"
#include "seqdefer/rollout.hpp"

namespace seqdefer {

enum class TaskKind { kTsp, kMwp, kText };

std::string ToString(TaskKind kind);
TaskKind ParseTaskKind(const std::string& name);

// A generated train/test split plus whatever is needed to rebuild the
// task's rollout environment.
struct TaskDataset {
  TaskKind kind = TaskKind::kMwp;
  TaskBounds bounds;
  double alpha1 = 0.0;
  nlohmann::json predictor;  // fitted predictor / expert parameters
  std::vector<Trace> train;
  std::vector<Trace> test;
};

std::unique_ptr<RolloutEnv> MakeEnv(const TaskDataset& data);

// Sets expert_cost = expert_loss + alpha_1 / L and c~_j = quality + alpha_j,
// recovering the quality term from the stored alpha column.
void ApplySchedule(Trace& trace, const CostSchedule& schedule);
void ApplySchedule(TaskDataset& data, double alpha1);

// One-time arrays for tasks whose system loss is the sum of per-token
// losses: the predictor writes tokens 1..j-1, the expert writes j..L on
// the resulting prefix (queried through `env`).
void FillOnetimeFromEnv(Trace& trace, const RolloutEnv& env,
                        const CostSchedule& schedule);

// Directory layout: meta.json, train.ndjson, test.ndjson.
// A non-empty `config_hash` is recorded in meta.json.
void SaveDataset(const std::filesystem::path& dir, const TaskDataset& data,
                 const std::string& config_hash = "");
TaskDataset LoadDataset(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// TSP

struct TspInstance {
  std::vector<std::array<double, 2>> coords;
  std::size_t size() const { return coords.size(); }
};

// Instance i is drawn from its own stream DeriveSeed(seed, i).
std::vector<TspInstance> GenTsp(std::size_t count, std::size_t n,
                                std::uint64_t seed);

double Distance(const TspInstance& inst, int a, int b);
double TourLength(const TspInstance& inst, std::span<const int> tour);
double PathLength(const TspInstance& inst, std::span<const int> path);
bool IsPermutation(std::span<const int> tour, std::size_t n);

struct TspPrediction {
  std::vector<int> tour;
  std::vector<double> conf;               // -log p of the chosen city
  std::vector<std::vector<double>> dist;  // softmax over all cities
};

// Nearest-neighbour tour from city 0; ties go to the lowest index. Step
// probabilities are a softmax over negative distances to unvisited cities.
TspPrediction TspPredict(const TspInstance& inst);

// Appends the unvisited cities greedily by nearest neighbour.
std::vector<int> NearestNeighborComplete(const TspInstance& inst,
                                         std::span<const int> prefix);

// 2-opt on the free part of the tour: the first `frozen` cities keep
// their order (for frozen <= 1 the whole cycle may change).
void TwoOptSuffix(const TspInstance& inst, std::vector<int>& tour,
                  std::size_t frozen);

// Exact completion by dynamic programming over subsets; at most 12 cities
// outside the prefix.
std::vector<int> HeldKarpComplete(const TspInstance& inst,
                                  std::span<const int> prefix);

// The expert: nearest neighbour followed by 2-opt, or the exact
// completion when `exact` is set. Repeated cities: validity error.
std::vector<int> TspExpertComplete(const TspInstance& inst,
                                   std::span<const int> prefix,
                                   bool exact = false);

inline constexpr std::size_t kTspFeatureDim = 6;

std::size_t TspSummaryDim(std::size_t n);
TaskBounds TspBounds(std::size_t n, double alpha1);

// Full trace over the grid {1, ..., n + 1}. The system loss is the percent
// excess of the realized tour over the shortest tour among all hand-off
// positions of the instance.
Trace TspTrace(const TspInstance& inst, const std::string& id,
               const CostSchedule& schedule, bool exact = false);

struct TspConfig {
  std::size_t n = 50;
  std::size_t train = 2400;
  std::size_t test = 100;
  double alpha1 = 0.5;
  bool exact = false;
  std::uint64_t seed = 0;
};

struct TspSplit {
  std::vector<TspInstance> train;
  std::vector<TspInstance> test;
};
TspSplit GenTspSplit(const TspConfig& config);
TaskDataset TraceTspSplit(const TspSplit& split, const TspConfig& config);
// TraceTspSplit(GenTspSplit(config), config).
TaskDataset BuildTspDataset(const TspConfig& config);

// "tsp/v1": {"version", "instances": [[[x, y], ...], ...]}
nlohmann::json TspToJson(const std::vector<TspInstance>& instances);
std::vector<TspInstance> TspFromJson(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// MWP

inline constexpr int kMwpHistory = 12;
inline constexpr int kMwpHorizon = 6;
inline constexpr int kMwpWindow = kMwpHistory + kMwpHorizon;

struct MwpInstance {
  std::vector<double> history;  // 12 observations
  std::vector<double> target;   // next 6
};

struct MwpSeriesConfig {
  double a1 = 0.6;
  double a2 = 0.3;
  double amplitude = 0.3;  // daily cycle, per-step forcing
  int period = 144;        // 10-minute steps per day
  double low_sd = 0.15;
  double high_sd = 1.0;
  double switch_prob = 0.02;  // regime persistence
};

// AR(2) + daily sinusoid + regime-switching noise, z-scored.
std::vector<double> SimulateMwpSeries(std::size_t length, std::uint64_t seed,
                                      const MwpSeriesConfig& config = {});

// Windows of 12 + 6 values every `stride` steps.
std::vector<MwpInstance> WindowsFromSeries(std::span<const double> series,
                                           std::size_t stride);

// `count` non-overlapping windows from one simulated series.
std::vector<MwpInstance> GenMwp(std::size_t count, std::uint64_t seed,
                                const MwpSeriesConfig& config = {});

// Single numeric column; `header` skips the first line. Fewer than 18
// values or a non-numeric cell: data error.
std::vector<double> ReadSeriesCsv(const std::filesystem::path& path,
                                  bool header);
std::vector<double> ParseSeriesCsv(const std::string& text, bool header);

struct ArModel {
  int order = 2;
  std::vector<double> coef;                    // intercept, lag 1, lag 2, ...
  std::vector<std::vector<double>> bootstrap;  // residual-bootstrap refits

  // `lags` holds the most recent value first.
  double Predict(std::span<const double> lags) const;
  // Variance of the bootstrap predictions.
  double McVariance(std::span<const double> lags) const;
};

// Least squares over every lagged row of the windows (or the series). A
// design without variation in the lags gives the intercept-only model;
// any other singular design: fit error.
ArModel FitAr(std::span<const MwpInstance> windows, int order,
              int bootstrap, std::uint64_t seed);
ArModel FitArSeries(std::span<const double> series, int order, int bootstrap,
                    std::uint64_t seed);

// y + N(0, sigma^2); sigma < 0: parameter error.
Label MwpExpert(double y, double sigma, Rng& rng);

inline constexpr std::size_t kMwpFeatureDim = 10;
inline constexpr std::size_t kMwpSummaryDim = 26;

TaskBounds MwpBounds(double alpha1);

class MwpEnv final : public RolloutEnv {
 public:
  MwpEnv(ArModel model, double per_token_price)
      : model_(std::move(model)), price_(per_token_price) {}
  bool autoregressive() const override { return true; }
  StepRecord Step(const Trace& trace,
                  std::span<const Label> context) const override;
  const ArModel& model() const { return model_; }

 private:
  ArModel model_;
  double price_;
};

// Predictor-only rollout plus one-time arrays; expert draws come from
// DeriveSeed(seed, index).
Trace MwpTrace(const MwpInstance& inst, const std::string& id,
               const ArModel& model, double sigma, const CostSchedule& schedule,
               std::uint64_t expert_seed);

struct MwpConfig {
  std::size_t train = 1000;
  std::size_t test = 100;
  double sigma_scale = 0.05;  // expert noise, in series standard deviations
  std::optional<double> alpha1;  // unset: median-gap rule on train traces
  int bootstrap = 16;
  std::optional<std::filesystem::path> csv;
  bool csv_header = false;
  std::uint64_t seed = 0;
};

struct MwpSplit {
  std::vector<MwpInstance> train;
  std::vector<MwpInstance> test;
  double series_sd = 1.0;  // scales the expert noise
};
// CSV mode: stride-1 windows split chronologically, with the windows that
// overlap the test block dropped from the train side.
MwpSplit GenMwpSplit(const MwpConfig& config);
TaskDataset TraceMwpSplit(const MwpSplit& split, const MwpConfig& config);
TaskDataset BuildMwpDataset(const MwpConfig& config);

nlohmann::json ArModelToJson(const ArModel& model);
ArModel ArModelFromJson(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Text

// Conditional next-token table of a fixed order; row index is the
// base-V encoding of the previous `order` tokens (oldest first).
struct NGramTable {
  int order = 1;
  int vocab = 0;
  std::vector<std::vector<double>> rows;

  std::size_t RowIndex(std::span<const std::int64_t> history) const;
  const std::vector<double>& Dist(std::span<const std::int64_t> history) const;
  // Argmax with ties to the lowest id.
  std::int64_t Predict(std::span<const std::int64_t> history) const;
};

// Softmax of N(0, temperature^2) logits per row.
NGramTable RandomChain(int vocab, int order, double temperature, Rng& rng);

// Add-lambda smoothed counts over all transitions in `sequences`.
NGramTable FitNGram(const std::vector<std::vector<std::int64_t>>& sequences,
                    int vocab, int order, double smoothing);

struct TextInstance {
  std::vector<std::int64_t> context;  // two seed tokens
  std::vector<std::int64_t> target;   // L tokens
};

std::vector<TextInstance> SampleText(const NGramTable& chain,
                                     std::size_t count, int length,
                                     std::uint64_t seed);

std::size_t TextFeatureDim(int vocab);
std::size_t TextSummaryDim(int vocab, int length);
TaskBounds TextBounds(int vocab, int length, double alpha1);

class TextEnv final : public RolloutEnv {
 public:
  TextEnv(NGramTable predictor, NGramTable expert, double per_token_price)
      : predictor_(std::move(predictor)),
        expert_(std::move(expert)),
        price_(per_token_price) {}
  bool autoregressive() const override { return true; }
  StepRecord Step(const Trace& trace,
                  std::span<const Label> context) const override;

 private:
  NGramTable predictor_;
  NGramTable expert_;
  double price_;
};

Trace TextTrace(const TextInstance& inst, const std::string& id,
                const TextEnv& env, const CostSchedule& schedule, int vocab);

struct TextConfig {
  int vocab = 6;
  int length = 12;
  std::size_t train = 1000;
  std::size_t test = 100;
  double temperature = 3.0;
  double smoothing = 0.1;
  std::optional<double> alpha1;
  std::uint64_t seed = 0;
};

struct TextSplit {
  NGramTable chain;  // the generating order-2 chain
  std::vector<TextInstance> train;
  std::vector<TextInstance> test;
};
TextSplit GenTextSplit(const TextConfig& config);
// Predictor and expert are fitted on the train targets only.
TaskDataset TraceTextSplit(const TextSplit& split, const TextConfig& config);
TaskDataset BuildTextDataset(const TextConfig& config);

nlohmann::json NGramToJson(const NGramTable& table);
NGramTable NGramFromJson(const nlohmann::json& j);

}  // namespace seqdefer

#endif  // SEQDEFER_TASKS_HPP_
