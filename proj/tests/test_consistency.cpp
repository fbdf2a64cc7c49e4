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

#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "seqdefer/consistency.hpp"
#include "seqdefer/rng.hpp"

using namespace seqdefer;
using namespace seqdefer::lab;

namespace {

FiniteWorld OneCell(double l, double c) {
  FiniteWorld w;
  w.name = "cell";
  w.kind = WorldKind::kToken;
  w.length = 1;
  w.context_probs = {1.0};
  w.token = {{{{0.5, l + 0.2, c}, {0.5, l - 0.2, c}}}};
  w.cost_min = 0.1;
  return w;
}

// Direct sums over the tables, independent of the library's helpers.
double TokenBayesOracle(const FiniteWorld& w) {
  double risk = 0.0;
  for (std::size_t k = 0; k < w.contexts(); ++k) {
    double row = 0.0;
    for (int j = 0; j < w.length; ++j) {
      double el = 0.0, ec = 0.0;
      for (const TokenOutcome& o : w.token[k][j]) {
        el += o.prob * o.l;
        ec += o.prob * o.c;
      }
      row += std::min(el, ec);
    }
    risk += w.context_probs[k] * row / w.length;
  }
  return risk;
}

double OnetimeBayesOracle(const FiniteWorld& w) {
  double risk = 0.0;
  for (std::size_t k = 0; k < w.contexts(); ++k) {
    std::vector<double> mean(w.candidates.size(), 0.0);
    for (const OnetimeOutcome& o : w.onetime[k]) {
      for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += o.prob * o.realized[j];
    }
    risk += w.context_probs[k] * *std::min_element(mean.begin(), mean.end());
  }
  return risk;
}

}  // namespace

TEST_CASE("bayes token decisions") {
  const FiniteWorld w = OneCell(0.7, 0.3);
  ValidateWorld(w);
  const BayesToken b = BayesTokenRisk(w);
  CHECK(b.defer[0][0] == 1);
  CHECK(b.risk == doctest::Approx(0.3));

  const FiniteWorld tie = OneCell(0.4, 0.4);
  const TokenScores defer = {{1.0}}, keep = {{-1.0}};
  CHECK(TokenRisk(tie, defer) == doctest::Approx(TokenRisk(tie, keep)));
  CHECK(BayesTokenRisk(tie).risk == doctest::Approx(0.4));
}

TEST_CASE("builtin worlds against enumeration") {
  for (const std::string& name : BuiltinWorldNames()) {
    const FiniteWorld w = BuiltinWorld(name);
    ValidateWorld(w);
    CHECK(w.contexts() <= 3);
    CHECK(w.length <= 3);
    if (w.kind == WorldKind::kToken) {
      CHECK(BayesTokenRisk(w).risk == EnumerateTokenRisk(w));
      CHECK(BayesTokenRisk(w).risk == doctest::Approx(TokenBayesOracle(w)).epsilon(1e-14));
    } else {
      CHECK(BayesOnetimeRisk(w).risk == EnumerateOnetimeRisk(w));
      CHECK(BayesOnetimeRisk(w).risk ==
            doctest::Approx(OnetimeBayesOracle(w)).epsilon(1e-14));
    }
  }
  CHECK(oracle::KindOf([] { BuiltinWorld("nope"); }) == ErrorKind::kParameter);
}

TEST_CASE("world validation and json") {
  FiniteWorld w = BuiltinWorld("token-a");
  const FiniteWorld back = WorldFromJson(WorldToJson(w));
  CHECK(back.name == w.name);
  CHECK(back.context_probs == w.context_probs);
  CHECK(BayesTokenRisk(back).risk == BayesTokenRisk(w).risk);
  w.context_probs[0] += 0.1;
  CHECK(oracle::KindOf([&] { ValidateWorld(w); }) == ErrorKind::kData);
  FiniteWorld z = OneCell(0.5, 0.0);
  z.cost_min = 0.0;
  CHECK(oracle::KindOf([&] { ValidateWorld(z); }) == ErrorKind::kData);
}

TEST_CASE("tabular minimizers") {
  // Logistic: argmin A phi(r) + B phi(-r) is log(A / B).
  CHECK(TabularTokenScore(PhiKind::kLogistic, 2.0, 1.0) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-9));
  // Square: (A - B) / (A + B).
  CHECK(TabularTokenScore(PhiKind::kSquare, 3.0, 1.0) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(TabularTokenScore(PhiKind::kLogistic, 0.0, 0.0) == 0.0);
  CHECK(TabularTokenScore(PhiKind::kLogistic, 1.0, 0.0) == doctest::Approx(kScoreBound));

  const std::vector<double> w = {1.0, 4.0, 2.0};
  const std::vector<double> ce = TabularOnetimeScores(PsiKind::kCe, w);
  CHECK(ce[1] == 0.0);
  CHECK(ce[0] == doctest::Approx(std::log(0.25)));
  const std::vector<double> mae = TabularOnetimeScores(PsiKind::kMae, w);
  CHECK(mae == std::vector<double>{0.0, kScoreBound, 0.0});
  const std::vector<double> zero(3, 0.0);
  CHECK(TabularOnetimeScores(PsiKind::kCe, zero) == zero);

  const double x = MinimizeConvex1D([](double r) { return 2.0 * (r - 1.25); }, -5, 5);
  CHECK(x == doctest::Approx(1.25).epsilon(1e-12));
}

TEST_CASE("consistency gaps") {
  const FiniteWorld w = BuiltinWorld("token-a");
  const GapResult g = ConsistencyGap(w, {PhiKind::kLogistic, PsiKind::kCe}, 100000, 1);
  CHECK(g.gap >= 0.0);
  CHECK(g.gap < 0.01 * w.Scale());
  CHECK(g.realized == doctest::Approx(g.bayes + g.gap));
  CHECK_FALSE(g.degenerate);

  const FiniteWorld flat = BuiltinWorld("onetime-flat");
  CHECK(IsDegenerate(flat));
  const OnetimeStats st = SampleOnetime(flat, 1000, 2);
  for (const auto& row : st.weight) {
    for (double v : row) CHECK(v == 0.0);
  }
  const GapResult f = ConsistencyGap(flat, {PhiKind::kLogistic, PsiKind::kCe}, 1000, 2);
  CHECK(f.degenerate);
  CHECK(f.gap == 0.0);

  const std::vector<std::size_t> ns = {100, 1000};
  const std::vector<std::uint64_t> seeds = {1, 2};
  const auto cells = GapSweep(w, {}, ns, seeds);
  REQUIRE(cells.size() == 4);
  CHECK(cells[0].n == 100);
  CHECK(cells[0].seed == 1);
  CHECK(cells[1].seed == 2);
  CHECK(cells[2].n == 1000);
  CHECK(cells[3].result.gap ==
        ConsistencyGap(w, {}, 1000, 2).gap);
}

TEST_CASE("bound audit") {
  const FiniteWorld w = BuiltinWorld("token-a");
  const std::vector<std::size_t> ns = {100, 1000, 10000, 100000};
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 0; s < 5; ++s) seeds.push_back(DeriveSeed(7, s));
  const BoundAudit a = AuditBound(w, {}, ns, seeds);
  CHECK(std::abs(a.slope + 0.5) <= 0.3);
  CHECK(a.within);

  const BoundAudit flat = AuditBound(BuiltinWorld("onetime-flat"), {}, ns, seeds);
  CHECK(flat.converged);
  CHECK(flat.within);
  const std::vector<std::size_t> one = {100};
  CHECK(oracle::KindOf([&] { AuditBound(w, {}, one, seeds); }) == ErrorKind::kParameter);

  const std::vector<double> x = {0, 1, 2, 3}, y = {1, 3, 5, 7};
  CHECK(FitSlope(x, y) == doctest::Approx(2.0));
}

TEST_CASE("sampling is seeded") {
  const FiniteWorld w = BuiltinWorld("token-b");
  const TokenStats a = SampleToken(w, 500, 3), b = SampleToken(w, 500, 3);
  CHECK(a.count == b.count);
  CHECK(a.sum_l == b.sum_l);
  std::size_t total = 0;
  for (std::size_t c : a.count) total += c;
  CHECK(total == 500);
}
