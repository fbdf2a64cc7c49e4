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

// Realized deferral losses and their convex surrogates.
//
// Token level, per step j with predictor loss l, expert cost c and
// rejector score r (r >= 0 defers):
//   realized   l * 1[r < 0] + c * 1[r >= 0]
//   surrogate  l * phi(r) + c * phi(-r)
// Sequence losses average the per-step terms over j = 1..L.
//
// One-time, for a candidate set J and scores g over J:
//   realized   R_j = l(y, yhat_{<j}) + c~_j   at j = argmax g
//   surrogate  sum_j (c_max - R_j) * psi(g, j),  c_max = max_j R_j

#ifndef SEQDEFER_SURROGATES_HPP_
#define SEQDEFER_SURROGATES_HPP_

#include <span>
#include <string>
#include <vector>

#include "seqdefer/core.hpp"

namespace seqdefer {

enum class PhiKind { kLogistic, kSquare };
enum class PsiKind { kCe, kMae };

std::string ToString(PhiKind kind);
std::string ToString(PsiKind kind);
PhiKind ParsePhiKind(const std::string& name);
PsiKind ParsePsiKind(const std::string& name);

double Phi(PhiKind kind, double z);
double PhiDerivative(PhiKind kind, double z);

// Smallest gamma with gamma * phi(z) >= 1[z <= 0]: 1 / ln 2 for logistic,
// 1 for square.
double DominanceGamma(PhiKind kind);
// Smallest gamma with gamma * psi(g, j) >= 1[argmax g != j]: 1 / ln 2 for
// cross entropy, 2 for MAE.
double DominanceGamma(PsiKind kind);

// Index of the maximum; ties go to the largest index.
std::size_t ArgmaxPreferLast(std::span<const double> values);

std::vector<double> Softmax(std::span<const double> g);

double Psi(PsiKind kind, std::span<const double> g, std::size_t index);
// Adds scale * d psi(g, index) / d g into `grad`.
void AccumulatePsiGradient(PsiKind kind, std::span<const double> g,
                           std::size_t index, double scale,
                           std::span<double> grad);

double TokenStepRealized(double l, double c, double r);
double TokenStepSurrogate(PhiKind kind, double l, double c, double r);
// d/dr of TokenStepSurrogate.
double TokenStepSurrogateDerivative(PhiKind kind, double l, double c,
                                    double r);

// Means over the L steps.
double TokenRealized(std::span<const double> l, std::span<const double> c,
                     std::span<const double> r);
double TokenSurrogate(PhiKind kind, std::span<const double> l,
                      std::span<const double> c, std::span<const double> r);

// One-time terms resolved against the trace's stored candidates; every
// position of `candidates` must be stored in the trace.
double OnetimeRealized(const Trace& trace, const CandidateSet& candidates,
                       int j);
std::vector<double> OnetimeRealizedVector(const Trace& trace,
                                          const CandidateSet& candidates);
double CMax(const Trace& trace, const CandidateSet& candidates);
// c_max - R_j for each candidate.
std::vector<double> OnetimeWeights(const Trace& trace,
                                   const CandidateSet& candidates);

double OnetimeSurrogate(PsiKind kind, const Trace& trace,
                        const CandidateSet& candidates,
                        std::span<const double> g);
// Same objective on precomputed weights; returns the value and, when
// `grad` is non-empty, adds d/dg into it.
double WeightedPsi(PsiKind kind, std::span<const double> weights,
                   std::span<const double> g, std::span<double> grad = {});

// |LHS - RHS| of the indicator rewrite of the one-time loss
//   R_j = sum_k (c_max - R_k) 1[j != k] - (|J| - 1) c_max + sum_k R_k
// for the decision j.
double OnetimeIdentityResidual(const Trace& trace,
                               const CandidateSet& candidates, int j);

double DominanceMarginToken(PhiKind kind, double l, double c, double r,
                            double gamma);

// gamma * L^psi(g) - R_{argmax g}. Nonnegative whenever
// OnetimeDominancePrecondition holds.
double DominanceMarginOnetime(PsiKind kind, const Trace& trace,
                              const CandidateSet& candidates,
                              std::span<const double> g, double gamma);
// gamma * L^psi(g) - (R_{argmax g} - min_k R_k); nonnegative for every
// input, no precondition.
double ExcessDominanceMarginOnetime(PsiKind kind, const Trace& trace,
                                    const CandidateSet& candidates,
                                    std::span<const double> g, double gamma);
// c_max > sum_j R_j / (|J| - 1).
bool OnetimeDominancePrecondition(const Trace& trace,
                                  const CandidateSet& candidates);

}  // namespace seqdefer

#endif  // SEQDEFER_SURROGATES_HPP_
