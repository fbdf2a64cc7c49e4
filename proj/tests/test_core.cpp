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
#include <limits>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "seqdefer/core.hpp"
#include "seqdefer/rng.hpp"
#include "seqdefer/surrogates.hpp"
#include "seqdefer/tasks.hpp"
#include "seqdefer/verify.hpp"

using namespace seqdefer;

TEST_CASE("alpha schedule") {
  CostSchedule s(0.6, 6);
  CHECK(s.AlphaAt(1) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(s.AlphaAt(4) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(s.AlphaAt(6) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(s.AlphaAt(7) == 0.0);
  CHECK(s.PerToken() == doctest::Approx(0.1));
  CHECK(oracle::KindOf([&] { (void)s.AlphaAt(0); }) == ErrorKind::kPosition);
  CHECK(oracle::KindOf([&] { (void)s.AlphaAt(8); }) == ErrorKind::kPosition);
}

TEST_CASE("candidate sets") {
  CHECK(CandidateSet::UniformGrid(10, 11) == CandidateSet::Full(10));
  CHECK(CandidateSet::UniformGrid(10, 2).positions() == std::vector<int>{1, 11});
  const CandidateSet g = CandidateSet::UniformGrid(50, 5);
  CHECK(g.size() == 5);
  CHECK(g[0] == 1);
  CHECK(g[g.NoDeferIndex()] == 51);
  CHECK(g.IsSubsetOf(CandidateSet::Full(50)));
  CHECK(oracle::KindOf([] { CandidateSet::UniformGrid(5, 1); }) ==
        ErrorKind::kParameter);
  CHECK(oracle::KindOf([] { CandidateSet::UniformGrid(5, 7); }) ==
        ErrorKind::kParameter);
}

TEST_CASE("recommended alpha is the floored median gap") {
  auto with_gaps = [](std::vector<double> gaps) {
    std::vector<Trace> ts;
    for (double g : gaps) {
      Trace t;
      t.model_full_loss = 10.0 + g;
      t.expert_full_loss = 10.0;
      ts.push_back(t);
    }
    return ts;
  };
  CHECK(RecommendAlpha1(with_gaps({2, 4, 10})) == doctest::Approx(4.0));
  CHECK(RecommendAlpha1(with_gaps({-1, -1})) == 0.0);
  CHECK(oracle::KindOf([] { RecommendAlpha1(std::vector<Trace>{}); }) ==
        ErrorKind::kEmptyInput);

  MwpConfig cfg;
  cfg.train = 100;
  cfg.test = 10;
  cfg.alpha1 = 0.0;
  cfg.seed = 3;
  const TaskDataset data = BuildMwpDataset(cfg);
  std::vector<double> gaps;
  for (const Trace& t : data.train) {
    gaps.push_back(t.model_full_loss - t.expert_full_loss);
  }
  const double expected = std::max(0.0, oracle::Median(gaps));
  CHECK(RecommendAlpha1(data.train) == expected);
}

TEST_CASE("trace validation") {
  verify::FuzzOptions opt;
  Rng rng(5);
  Trace t = verify::FuzzTrace(rng, opt);
  const TaskBounds b = verify::FuzzBounds(opt);
  CHECK_FALSE(ValidateTrace(t, b).has_value());

  Trace bad = t;
  bad.prefix_losses[0] = 0.5;
  auto v = ValidateTrace(bad, b);
  REQUIRE(v.has_value());
  CHECK(v->message == "prefix loss at j=1 must be 0");

  bad = t;
  bad.steps[2].expert_cost = std::numeric_limits<double>::quiet_NaN();
  v = ValidateTrace(bad, b);
  REQUIRE(v.has_value());
  CHECK(v->message == "non-finite cost");

  bad = t;
  bad.candidates.pop_back();
  bad.prefix_losses.pop_back();
  bad.onetime_costs.pop_back();
  bad.onetime_alpha.pop_back();
  bad.system_losses.pop_back();
  CHECK(ValidateTrace(bad, b).has_value());
}

TEST_CASE("phi values") {
  CHECK(Phi(PhiKind::kLogistic, 0.0) == doctest::Approx(0.693147180559945));
  CHECK(Phi(PhiKind::kSquare, 1.0) == 0.0);
  // ln(1 + e) to 15 digits.
  CHECK(Phi(PhiKind::kLogistic, -1.0) ==
        doctest::Approx(1.31326168751822).epsilon(1e-13));
  CHECK(Phi(PhiKind::kLogistic, 800.0) >= 0.0);
  CHECK(std::isfinite(Phi(PhiKind::kLogistic, -800.0)));
  CHECK(DominanceGamma(PhiKind::kLogistic) == doctest::Approx(1.0 / std::log(2.0)));
  CHECK(DominanceGamma(PhiKind::kSquare) == 1.0);
  CHECK(DominanceGamma(PsiKind::kCe) == doctest::Approx(1.0 / std::log(2.0)));
  CHECK(DominanceGamma(PsiKind::kMae) == 2.0);
}

TEST_CASE("psi values") {
  const std::vector<double> zeros(4, 0.0);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(Psi(PsiKind::kCe, zeros, j) == doctest::Approx(std::log(4.0)));
    CHECK(Psi(PsiKind::kMae, zeros, j) == doctest::Approx(0.75));
  }
  const std::vector<double> g = {2.0, 0.0, 0.0};
  // -log(e^2 / (e^2 + 2)) = log(1 + 2 e^-2), evaluated in long double.
  const long double ref = std::log1p(2.0L * std::exp(-2.0L));
  CHECK(Psi(PsiKind::kCe, g, 0) == doctest::Approx(static_cast<double>(ref)).epsilon(1e-14));
  CHECK(Psi(PsiKind::kCe, g, 0) == doctest::Approx(0.239545).epsilon(1e-6));
  CHECK(oracle::KindOf([&] { (void)Psi(PsiKind::kCe, g, 3); }) ==
        ErrorKind::kPosition);
}

TEST_CASE("argmax prefers the last maximum") {
  const std::vector<double> v = {1.0, 3.0, 2.0, 3.0};
  CHECK(ArgmaxPreferLast(v) == 3);
}

TEST_CASE("token losses") {
  CHECK(TokenStepRealized(1.0, 0.5, -0.1) == 1.0);
  CHECK(TokenStepRealized(1.0, 0.5, 0.0) == 0.5);
  CHECK(TokenStepRealized(0.2, 0.9, 3.0) == 0.9);
  CHECK(TokenStepSurrogate(PhiKind::kLogistic, 1.0, 0.5, 0.0) ==
        doctest::Approx(1.5 * std::log(2.0)).epsilon(1e-15));
  CHECK(TokenStepSurrogate(PhiKind::kLogistic, 1.0, 0.5, 0.0) ==
        doctest::Approx(1.039721).epsilon(1e-6));
  for (double r : {-7.0, 0.0, 2.5}) {
    CHECK(TokenStepSurrogate(PhiKind::kLogistic, 0.0, 0.0, r) == 0.0);
  }
  CHECK(TokenStepSurrogate(PhiKind::kSquare, 1.0, 1.0, 0.0) == 2.0);

  const std::vector<double> l = {1.0, 0.0, 0.3};
  const std::vector<double> c = {0.5, 0.5, 0.5};
  const std::vector<double> r = {-1.0, 1.0, 0.0};
  CHECK(TokenRealized(l, c, r) == doctest::Approx((1.0 + 0.5 + 0.5) / 3.0));
  double sum = 0.0;
  for (int j = 0; j < 3; ++j) {
    sum += l[j] * std::log1p(std::exp(-r[j])) + c[j] * std::log1p(std::exp(r[j]));
  }
  CHECK(TokenSurrogate(PhiKind::kLogistic, l, c, r) == doctest::Approx(sum / 3.0));
}

TEST_CASE("surrogate derivative matches differences") {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const double l = rng.Uniform(), c = rng.Uniform(), r = rng.Uniform(-4, 4);
    for (PhiKind k : {PhiKind::kLogistic, PhiKind::kSquare}) {
      const double h = 1e-6;
      const double fd = (TokenStepSurrogate(k, l, c, r + h) -
                         TokenStepSurrogate(k, l, c, r - h)) / (2 * h);
      CHECK(TokenStepSurrogateDerivative(k, l, c, r) ==
            doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("one-time realized loss") {
  const Trace t = oracle::HandTrace({0.1, 0.3, 0.2, 0.4}, {0.0, 0.1, 0.0, 0.1}, 0.4);
  const CandidateSet full = CandidateSet::Full(4);
  CHECK(OnetimeRealized(t, full, 1) == doctest::Approx(t.onetime_costs[0]));
  CHECK(OnetimeRealized(t, full, 1) == doctest::Approx(t.expert_full_loss + 0.4));
  CHECK(OnetimeRealized(t, full, 5) == doctest::Approx(t.model_full_loss));

  Trace m = t;
  m.prefix_losses[2] = 0.4;
  m.onetime_costs[2] = 0.3;
  CHECK(OnetimeRealized(m, full, 3) == doctest::Approx(0.7));
  CHECK(oracle::KindOf([&] {
          (void)OnetimeRealized(t, CandidateSet({1, 5}, 4), 3);
        }) == ErrorKind::kPosition);
}

namespace {

Trace WithRealized(const std::vector<double>& realized) {
  // L = |J| - 1 and the full grid; R_j sits entirely in c~_j.
  const int L = static_cast<int>(realized.size()) - 1;
  std::vector<double> zeros(L, 0.0);
  Trace t = oracle::HandTrace(zeros, zeros, 0.0);
  for (std::size_t i = 0; i < realized.size(); ++i) {
    t.prefix_losses[i] = 0.0;
    t.onetime_costs[i] = realized[i];
  }
  return t;
}

}  // namespace

TEST_CASE("c_max") {
  Trace flat = WithRealized({0.7, 0.7, 0.7});
  CHECK(CMax(flat, flat.Candidates()) == doctest::Approx(0.7));
  Trace three = WithRealized({0.2, 0.9, 0.5});
  CHECK(CMax(three, three.Candidates()) == 0.9);

  verify::FuzzOptions opt;
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const Trace t = verify::FuzzTrace(rng, opt);
    double best = -1e300;
    for (std::size_t k = 0; k < t.candidates.size(); ++k) {
      best = std::max(best, t.prefix_losses[k] + t.onetime_costs[k]);
    }
    CHECK(CMax(t, t.Candidates()) == best);
  }
}

TEST_CASE("one-time surrogate") {
  Trace flat = WithRealized({0.7, 0.7, 0.7});
  const std::vector<double> g = {3.0, -1.0, 0.5};
  CHECK(OnetimeSurrogate(PsiKind::kCe, flat, flat.Candidates(), g) == 0.0);
  CHECK(OnetimeSurrogate(PsiKind::kMae, flat, flat.Candidates(), g) == 0.0);

  Trace two = WithRealized({0.2, 0.9});
  const std::vector<double> g0 = {0.0, 0.0};
  CHECK(OnetimeSurrogate(PsiKind::kCe, two, two.Candidates(), g0) ==
        doctest::Approx(0.7 * std::log(2.0)).epsilon(1e-14));

  verify::FuzzOptions opt;
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const Trace t = verify::FuzzTrace(rng, opt);
    std::vector<double> s(t.candidates.size());
    for (double& v : s) v = rng.Uniform(-3, 3);
    double cmax = -1e300;
    for (std::size_t k = 0; k < s.size(); ++k) {
      cmax = std::max(cmax, t.prefix_losses[k] + t.onetime_costs[k]);
    }
    long double z = 0.0L;
    for (double v : s) z += std::exp(static_cast<long double>(v));
    long double ce = 0.0L, mae = 0.0L;
    for (std::size_t k = 0; k < s.size(); ++k) {
      const long double w = cmax - (t.prefix_losses[k] + t.onetime_costs[k]);
      const long double p = std::exp(static_cast<long double>(s[k])) / z;
      ce += w * -std::log(p);
      mae += w * (1.0L - p);
    }
    CHECK(OnetimeSurrogate(PsiKind::kCe, t, t.Candidates(), s) ==
          doctest::Approx(static_cast<double>(ce)).epsilon(1e-12));
    CHECK(OnetimeSurrogate(PsiKind::kMae, t, t.Candidates(), s) ==
          doctest::Approx(static_cast<double>(mae)).epsilon(1e-12));
  }
}

TEST_CASE("weighted psi gradient") {
  Rng rng(9);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> w(5), g(5);
    for (double& v : w) v = rng.Uniform();
    for (double& v : g) v = rng.Uniform(-2, 2);
    for (PsiKind k : {PsiKind::kCe, PsiKind::kMae}) {
      std::vector<double> grad(5, 0.0);
      WeightedPsi(k, w, g, grad);
      for (std::size_t d = 0; d < 5; ++d) {
        std::vector<double> up = g, dn = g;
        up[d] += 1e-6;
        dn[d] -= 1e-6;
        const double fd = (WeightedPsi(k, w, up) - WeightedPsi(k, w, dn)) / 2e-6;
        CHECK(grad[d] == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
      }
    }
  }
}

TEST_CASE("indicator identity") {
  Trace flat = WithRealized({0.4, 0.4, 0.4, 0.4});
  for (int j : {1, 2, 3, 4}) {
    CHECK(OnetimeIdentityResidual(flat, flat.Candidates(), j) <= 1e-15);
  }
  verify::FuzzOptions opt;
  Rng rng(21);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Trace t = verify::FuzzTrace(rng, opt);
    for (int j : t.candidates) {
      worst = std::max(worst, OnetimeIdentityResidual(t, t.Candidates(), j));
    }
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("dominance margins") {
  const double gamma = 1.0 / std::log(2.0);
  CHECK(DominanceMarginToken(PhiKind::kLogistic, 1.0, 0.5, 0.0, gamma) ==
        doctest::Approx(1.0).epsilon(1e-14));
  CHECK(DominanceMarginToken(PhiKind::kLogistic, 0.0, 0.0, 2.0, gamma) == 0.0);
  double worst = 1e300;
  for (int i = 0; i <= 1000; ++i) {
    const double r = -5.0 + 10.0 * i / 1000.0;
    for (double l : {0.0, 0.3, 1.0}) {
      for (double c : {0.0, 0.5, 1.0}) {
        worst = std::min(worst,
                         DominanceMarginToken(PhiKind::kLogistic, l, c, r, gamma));
      }
    }
  }
  CHECK(worst >= 0.0);
}

TEST_CASE("one-time dominance precondition") {
  // Three candidates with R = (0, 0, 1): c_max = 1 > 1 / 2.
  Trace t = WithRealized({0.0, 0.0, 1.0});
  CHECK(OnetimeDominancePrecondition(t, t.Candidates()));
  const std::vector<double> g = {0.0, 0.0, 5.0};
  CHECK(DominanceMarginOnetime(PsiKind::kCe, t, t.Candidates(), g,
                               DominanceGamma(PsiKind::kCe)) >= 0.0);
  Trace u = WithRealized({1.0, 1.0, 0.9});
  CHECK_FALSE(OnetimeDominancePrecondition(u, u.Candidates()));
  CHECK(ExcessDominanceMarginOnetime(PsiKind::kMae, u, u.Candidates(), g,
                                     DominanceGamma(PsiKind::kMae)) >= 0.0);
}
