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

// Finite worlds with exact Bayes oracles.
//
// A token world draws a context k, then for every step j an outcome
// (l, c) from a per-cell table. A one-time world draws a context and then
// a vector of realized losses R_j over the candidate set. Expectations are
// exact sums over the tables, so Bayes risks carry no sampling error.
//
// The tabular rejector holds one free score per (context, step) or one
// score vector per context, fitted by minimizing the empirical surrogate
// cell by cell.

#ifndef SEQDEFER_CONSISTENCY_HPP_
#define SEQDEFER_CONSISTENCY_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "seqdefer/surrogates.hpp"

namespace seqdefer::lab {

inline constexpr const char* kWorldVersion = "world/v1";

// Tabular scores are confined to [-kScoreBound, kScoreBound].
inline constexpr double kScoreBound = 30.0;

enum class WorldKind { kToken, kOnetime };

struct TokenOutcome {
  double prob = 0.0;
  double l = 0.0;
  double c = 0.0;
};

struct OnetimeOutcome {
  double prob = 0.0;
  std::vector<double> realized;  // R_j over the candidates
};

struct FiniteWorld {
  std::string name;
  WorldKind kind = WorldKind::kToken;
  int length = 1;
  std::vector<double> context_probs;
  std::vector<std::vector<std::vector<TokenOutcome>>> token;  // [k][j][o]
  std::vector<int> candidates;                                // one-time
  std::vector<std::vector<OnetimeOutcome>> onetime;           // [k][o]
  double loss_max = 1.0;  // l-bar
  double cost_min = 0.0;  // c-bar
  double cost_max = 1.0;  // C-bar
  double delta = 0.0;     // required realized-loss gap

  std::size_t contexts() const { return context_probs.size(); }
  double Scale() const { return loss_max + cost_max; }
};

// Probabilities sum to 1, costs lie in [c-bar, C-bar] with c-bar > 0,
// losses in [0, l-bar], shapes agree. Data error otherwise.
void ValidateWorld(const FiniteWorld& world);

// No outcome separates two actions by more than `delta`.
bool IsDegenerate(const FiniteWorld& world);

// "token-a", "token-b" (token worlds), "onetime-a" (one-time world) and
// "onetime-flat" (all realized losses equal). Unknown name: parameter
// error.
FiniteWorld BuiltinWorld(const std::string& name);
std::vector<std::string> BuiltinWorldNames();

nlohmann::json WorldToJson(const FiniteWorld& world);
FiniteWorld WorldFromJson(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Exact risks

// r[k][j]; r >= 0 defers.
using TokenScores = std::vector<std::vector<double>>;
// Chosen candidate index per context.
using OnetimeChoices = std::vector<std::size_t>;

double TokenRisk(const FiniteWorld& world, const TokenScores& scores);
double OnetimeRisk(const FiniteWorld& world, const OnetimeChoices& choices);

// Conditional means E[l], E[c] per cell and E[R_j] per context.
std::vector<std::vector<double>> MeanLoss(const FiniteWorld& world);
std::vector<std::vector<double>> MeanCost(const FiniteWorld& world);
std::vector<std::vector<double>> MeanRealized(const FiniteWorld& world);

struct BayesToken {
  double risk = 0.0;
  std::vector<std::vector<int>> defer;  // 1 iff E[c] <= E[l]
};
BayesToken BayesTokenRisk(const FiniteWorld& world);

struct BayesOnetime {
  double risk = 0.0;
  OnetimeChoices choice;  // argmin_j E[R_j], ties to the later j
};
BayesOnetime BayesOnetimeRisk(const FiniteWorld& world);

// Minimum over every deterministic policy; capability error when the
// policy count exceeds 2^20.
double EnumerateTokenRisk(const FiniteWorld& world);
double EnumerateOnetimeRisk(const FiniteWorld& world);

// ---------------------------------------------------------------------------
// Empirical side

struct TokenStats {
  std::size_t n = 0;
  std::vector<std::size_t> count;           // per context
  std::vector<std::vector<double>> sum_l;   // [k][j]
  std::vector<std::vector<double>> sum_c;
};

struct OnetimeStats {
  std::size_t n = 0;
  std::vector<std::size_t> count;
  std::vector<std::vector<double>> weight;  // sum of c_max - R_j, [k][j]
};

TokenStats SampleToken(const FiniteWorld& world, std::size_t n,
                       std::uint64_t seed);
OnetimeStats SampleOnetime(const FiniteWorld& world, std::size_t n,
                           std::uint64_t seed);

// Minimizer of a convex function on [lo, hi] given its derivative, by
// bisection to machine precision.
double MinimizeConvex1D(const std::function<double(double)>& derivative,
                        double lo, double hi);

// argmin_r A phi(r) + B phi(-r) over the score bound; A = B = 0 gives 0.
double TabularTokenScore(PhiKind kind, double a, double b);
// Minimizer of sum_j W_j psi(g, j): for cross entropy g_j = log W_j
// (shifted to max 0, floored at -kScoreBound); for MAE the one-hot
// kScoreBound vector on argmax W. All-zero weights give g = 0.
std::vector<double> TabularOnetimeScores(PsiKind kind,
                                         std::span<const double> weights);

TokenScores FitTabularToken(PhiKind kind, const TokenStats& stats);
std::vector<std::vector<double>> FitTabularOnetime(PsiKind kind,
                                                   const OnetimeStats& stats);
OnetimeChoices ChoicesFromScores(const std::vector<std::vector<double>>& g);

struct LabSurrogate {
  PhiKind phi = PhiKind::kLogistic;
  PsiKind psi = PsiKind::kCe;
};

struct GapResult {
  double realized = 0.0;
  double bayes = 0.0;
  double gap = 0.0;  // realized - bayes, never negative
  bool degenerate = false;
};

// Fits the tabular surrogate minimizer on n samples and compares its exact
// realized risk with the Bayes risk.
GapResult ConsistencyGap(const FiniteWorld& world, LabSurrogate surrogate,
                         std::size_t n, std::uint64_t seed);

struct GapCell {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  GapResult result;
};

// Every (n, seed) pair, fanned out with OpenMP; row-major in `ns`.
std::vector<GapCell> GapSweep(const FiniteWorld& world, LabSurrogate surrogate,
                              std::span<const std::size_t> ns,
                              std::span<const std::uint64_t> seeds);

// Population minus empirical surrogate risk at the fitted minimizer, in
// absolute value.
double SurrogateDeviation(const FiniteWorld& world, LabSurrogate surrogate,
                          std::size_t n, std::uint64_t seed);

struct BoundAudit {
  std::vector<std::size_t> n;
  std::vector<double> mean_deviation;  // over seeds
  double slope = 0.0;                  // of log deviation against log n
  bool converged = false;              // every deviation is zero
  bool within = false;                 // slope in [-0.8, -0.2] or converged
};

// Fewer than three grid points: parameter error.
BoundAudit AuditBound(const FiniteWorld& world, LabSurrogate surrogate,
                      std::span<const std::size_t> ns,
                      std::span<const std::uint64_t> seeds);

// Least-squares slope of y on x.
double FitSlope(std::span<const double> x, std::span<const double> y);

}  // namespace seqdefer::lab

#endif  // SEQDEFER_CONSISTENCY_HPP_
