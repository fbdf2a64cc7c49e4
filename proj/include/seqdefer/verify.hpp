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

// Property suites behind `seqdefer verify`.
//
// Each suite reports named metrics (worst residual, violation counts,
// gaps) next to its verdict, so callers can apply their own tolerances.
// Brute-force references (subset enumeration, Held-Karp, central
// differences, exact Bayes) live here rather than in the modules they
// check.

#ifndef SEQDEFER_VERIFY_HPP_
#define SEQDEFER_VERIFY_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "seqdefer/core.hpp"
#include "seqdefer/rng.hpp"

namespace seqdefer::verify {

struct SuiteResult {
  std::string name;
  bool passed = true;
  std::map<std::string, double> metrics;
  std::vector<std::string> failures;  // first few, human readable
  double seconds = 0.0;

  void Check(bool ok, const std::string& what);
  double Metric(const std::string& key) const;
};

struct FuzzOptions {
  int length = 6;
  std::size_t feature_dim = 4;
  std::size_t summary_dim = 5;
  double price = 0.1;   // per-token deferral price alpha_1 / L
  bool dyadic = false;  // losses on a 1/64 grid, so every sum is exact
};

// A self-consistent static trace over the full grid {1, ..., L + 1}:
// prefix losses sum model losses, c~_j sums expert losses from j on plus
// alpha_j, and the system losses drop the price.
Trace FuzzTrace(Rng& rng, const FuzzOptions& options);
TaskBounds FuzzBounds(const FuzzOptions& options);

// Lemma-style indicator identity over fuzzed traces, ChowSum against
// ChowMean, and the AUDC of the line (0, 10) -> (5, 2).
SuiteResult IdentitySuite(std::size_t traces, std::uint64_t seed);

// gamma * surrogate >= realized on random inputs for both phi and both psi.
// One-time samples count plain dominance where the c_max precondition
// holds and excess dominance everywhere.
SuiteResult DominanceSuite(std::size_t samples, std::uint64_t seed);

// Central differences against reverse mode over `batches` random batches,
// token (both phi, recurrent and feed-forward) and one-time (both psi).
SuiteResult GradientSuite(int batches, std::uint64_t seed);

// Built-in finite worlds: Bayes risk against enumeration, realized gaps
// over n in {1e2, 1e3, 1e4, 1e5} and 5 seeds, the degenerate flag and the
// bound-audit slopes.
SuiteResult ConsistencySuite(std::uint64_t seed);

// Token optimal curve against 2^L subset enumeration on `instances`
// fuzzed traces (L <= 10), and 2-opt completion lengths against Held-Karp
// and nearest neighbour on `tsp_instances` instances with n <= 12.
SuiteResult OracleSuite(std::size_t instances, std::size_t tsp_instances,
                        std::uint64_t seed);

// Monte Carlo random token curve against the analytic line.
SuiteResult RandomLawSuite(std::size_t draws, std::uint64_t seed);

// Convexity in the score, scale equivariance, the off-argmax psi floors,
// the cost ladder, and generated task traces against their bounds.
SuiteResult PropertySuite(std::size_t samples, std::uint64_t seed);

// Everything above at the given sample count.
std::vector<SuiteResult> RunAll(std::size_t samples, std::uint64_t seed);

}  // namespace seqdefer::verify

#endif  // SEQDEFER_VERIFY_HPP_
