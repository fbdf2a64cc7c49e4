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

#include "seqdefer/surrogates.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace seqdefer {

std::string ToString(PhiKind kind) {
  return kind == PhiKind::kLogistic ? "logistic" : "square";
}

std::string ToString(PsiKind kind) {
  return kind == PsiKind::kCe ? "ce" : "mae";
}

PhiKind ParsePhiKind(const std::string& name) {
  if (name == "logistic") return PhiKind::kLogistic;
  if (name == "square") return PhiKind::kSquare;
  Fail(ErrorKind::kConfig, "unknown phi kind '" + name + "'");
}

PsiKind ParsePsiKind(const std::string& name) {
  if (name == "ce") return PsiKind::kCe;
  if (name == "mae") return PsiKind::kMae;
  Fail(ErrorKind::kConfig, "unknown psi kind '" + name + "'");
}

double Phi(PhiKind kind, double z) {
  if (!std::isfinite(z)) Fail(ErrorKind::kNumeric, "phi of non-finite score");
  if (kind == PhiKind::kSquare) return (1.0 - z) * (1.0 - z);
  // log(1 + e^{-z}) without overflow on either tail.
  return z > 0.0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

double PhiDerivative(PhiKind kind, double z) {
  if (!std::isfinite(z)) Fail(ErrorKind::kNumeric, "phi of non-finite score");
  if (kind == PhiKind::kSquare) return -2.0 * (1.0 - z);
  if (z > 0.0) {
    const double e = std::exp(-z);
    return -e / (1.0 + e);
  }
  return -1.0 / (1.0 + std::exp(z));
}

double DominanceGamma(PhiKind kind) {
  return kind == PhiKind::kLogistic ? 1.0 / std::numbers::ln2 : 1.0;
}

double DominanceGamma(PsiKind kind) {
  return kind == PsiKind::kCe ? 1.0 / std::numbers::ln2 : 2.0;
}

std::size_t ArgmaxPreferLast(std::span<const double> values) {
  if (values.empty()) Fail(ErrorKind::kShape, "argmax of empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] >= values[best]) best = i;
  }
  return best;
}

std::vector<double> Softmax(std::span<const double> g) {
  if (g.empty()) Fail(ErrorKind::kShape, "softmax of empty vector");
  const double top = *std::max_element(g.begin(), g.end());
  std::vector<double> p(g.size());
  double total = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    p[i] = std::exp(g[i] - top);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

namespace {

void CheckScores(std::span<const double> g, std::size_t index) {
  if (index >= g.size()) Fail(ErrorKind::kPosition, "psi index out of range");
  for (double v : g) {
    if (!std::isfinite(v)) Fail(ErrorKind::kNumeric, "non-finite score");
  }
}

double LogSumExp(std::span<const double> g) {
  const double top = *std::max_element(g.begin(), g.end());
  double total = 0.0;
  for (double v : g) total += std::exp(v - top);
  return top + std::log(total);
}

}  // namespace

double Psi(PsiKind kind, std::span<const double> g, std::size_t index) {
  CheckScores(g, index);
  if (kind == PsiKind::kCe) return LogSumExp(g) - g[index];
  return 1.0 - Softmax(g)[index];
}

void AccumulatePsiGradient(PsiKind kind, std::span<const double> g,
                           std::size_t index, double scale,
                           std::span<double> grad) {
  CheckScores(g, index);
  if (grad.size() != g.size()) Fail(ErrorKind::kShape, "gradient size");
  const std::vector<double> p = Softmax(g);
  if (kind == PsiKind::kCe) {
    for (std::size_t k = 0; k < g.size(); ++k) {
      grad[k] += scale * (p[k] - (k == index ? 1.0 : 0.0));
    }
    return;
  }
  // d(1 - p_i)/dg_k = -p_i (delta_ik - p_k)
  for (std::size_t k = 0; k < g.size(); ++k) {
    grad[k] += scale * -p[index] * ((k == index ? 1.0 : 0.0) - p[k]);
  }
}

double TokenStepRealized(double l, double c, double r) {
  return r < 0.0 ? l : c;
}

double TokenStepSurrogate(PhiKind kind, double l, double c, double r) {
  return l * Phi(kind, r) + c * Phi(kind, -r);
}

double TokenStepSurrogateDerivative(PhiKind kind, double l, double c,
                                    double r) {
  return l * PhiDerivative(kind, r) - c * PhiDerivative(kind, -r);
}

namespace {

void CheckSameLength(std::span<const double> l, std::span<const double> c,
                     std::span<const double> r) {
  if (l.size() != c.size() || l.size() != r.size() || l.empty()) {
    Fail(ErrorKind::kShape, "token loss vectors must share a nonzero length");
  }
}

}  // namespace

double TokenRealized(std::span<const double> l, std::span<const double> c,
                     std::span<const double> r) {
  CheckSameLength(l, c, r);
  double total = 0.0;
  for (std::size_t j = 0; j < l.size(); ++j) {
    total += TokenStepRealized(l[j], c[j], r[j]);
  }
  return total / static_cast<double>(l.size());
}

double TokenSurrogate(PhiKind kind, std::span<const double> l,
                      std::span<const double> c, std::span<const double> r) {
  CheckSameLength(l, c, r);
  double total = 0.0;
  for (std::size_t j = 0; j < l.size(); ++j) {
    total += TokenStepSurrogate(kind, l[j], c[j], r[j]);
  }
  return total / static_cast<double>(l.size());
}

double OnetimeRealized(const Trace& trace, const CandidateSet& candidates,
                       int j) {
  if (!candidates.Contains(j)) {
    Fail(ErrorKind::kPosition,
         "position " + std::to_string(j) + " is not in the candidate set");
  }
  const std::size_t i = trace.CandidateIndex(j);
  return trace.prefix_losses[i] + trace.onetime_costs[i];
}

std::vector<double> OnetimeRealizedVector(const Trace& trace,
                                          const CandidateSet& candidates) {
  std::vector<double> realized;
  realized.reserve(candidates.size());
  for (int j : candidates.positions()) {
    realized.push_back(OnetimeRealized(trace, candidates, j));
  }
  return realized;
}

double CMax(const Trace& trace, const CandidateSet& candidates) {
  const std::vector<double> realized = OnetimeRealizedVector(trace, candidates);
  return *std::max_element(realized.begin(), realized.end());
}

std::vector<double> OnetimeWeights(const Trace& trace,
                                   const CandidateSet& candidates) {
  std::vector<double> realized = OnetimeRealizedVector(trace, candidates);
  const double cmax = *std::max_element(realized.begin(), realized.end());
  for (double& v : realized) v = cmax - v;
  return realized;
}

double WeightedPsi(PsiKind kind, std::span<const double> weights,
                   std::span<const double> g, std::span<double> grad) {
  if (weights.size() != g.size()) {
    Fail(ErrorKind::kShape, "score dimension must equal |J|");
  }
  if (!grad.empty() && grad.size() != g.size()) {
    Fail(ErrorKind::kShape, "gradient dimension must equal |J|");
  }
  for (double v : g) {
    if (!std::isfinite(v)) Fail(ErrorKind::kNumeric, "non-finite score");
  }
  const std::vector<double> p = Softmax(g);
  const double lse = LogSumExp(g);
  double value = 0.0;
  double weight_total = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (weights[k] == 0.0) continue;
    weight_total += weights[k];
    value += weights[k] *
             (kind == PsiKind::kCe ? lse - g[k] : 1.0 - p[k]);
  }
  if (!grad.empty()) {
    if (kind == PsiKind::kCe) {
      // sum_i w_i (p - e_i) = W p - w
      for (std::size_t k = 0; k < g.size(); ++k) {
        grad[k] += weight_total * p[k] - weights[k];
      }
    } else {
      // sum_i w_i p_i (p_k - delta_ik) = p_k (sum_i w_i p_i - w_k)
      double wp = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) wp += weights[i] * p[i];
      for (std::size_t k = 0; k < g.size(); ++k) {
        grad[k] += p[k] * (wp - weights[k]);
      }
    }
  }
  return value;
}

double OnetimeSurrogate(PsiKind kind, const Trace& trace,
                        const CandidateSet& candidates,
                        std::span<const double> g) {
  if (g.size() != candidates.size()) {
    Fail(ErrorKind::kShape, "score dimension must equal |J|");
  }
  const std::vector<double> w = OnetimeWeights(trace, candidates);
  return WeightedPsi(kind, w, g);
}

double OnetimeIdentityResidual(const Trace& trace,
                               const CandidateSet& candidates, int j) {
  const std::vector<double> realized = OnetimeRealizedVector(trace, candidates);
  const std::size_t chosen = *candidates.IndexOf(j);
  const double cmax = *std::max_element(realized.begin(), realized.end());
  const double n = static_cast<double>(realized.size());
  double rhs = -(n - 1.0) * cmax;
  for (std::size_t k = 0; k < realized.size(); ++k) {
    if (k != chosen) rhs += cmax - realized[k];
    rhs += realized[k];
  }
  return std::abs(realized[chosen] - rhs);
}

double DominanceMarginToken(PhiKind kind, double l, double c, double r,
                            double gamma) {
  return gamma * TokenStepSurrogate(kind, l, c, r) - TokenStepRealized(l, c, r);
}

double DominanceMarginOnetime(PsiKind kind, const Trace& trace,
                              const CandidateSet& candidates,
                              std::span<const double> g, double gamma) {
  const std::vector<double> realized = OnetimeRealizedVector(trace, candidates);
  const double surrogate = OnetimeSurrogate(kind, trace, candidates, g);
  return gamma * surrogate - realized[ArgmaxPreferLast(g)];
}

double ExcessDominanceMarginOnetime(PsiKind kind, const Trace& trace,
                                    const CandidateSet& candidates,
                                    std::span<const double> g, double gamma) {
  const std::vector<double> realized = OnetimeRealizedVector(trace, candidates);
  const double best = *std::min_element(realized.begin(), realized.end());
  const double surrogate = OnetimeSurrogate(kind, trace, candidates, g);
  return gamma * surrogate - (realized[ArgmaxPreferLast(g)] - best);
}

bool OnetimeDominancePrecondition(const Trace& trace,
                                  const CandidateSet& candidates) {
  const std::vector<double> realized = OnetimeRealizedVector(trace, candidates);
  const double cmax = *std::max_element(realized.begin(), realized.end());
  double total = 0.0;
  for (double v : realized) total += v;
  return cmax > total / static_cast<double>(realized.size() - 1);
}

}  // namespace seqdefer
