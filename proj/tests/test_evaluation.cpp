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

#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "seqdefer/baselines.hpp"
#include "seqdefer/evaluation.hpp"
#include "seqdefer/rollout.hpp"
#include "seqdefer/rng.hpp"
#include "seqdefer/verify.hpp"

using namespace seqdefer;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ScorerFactory ConfFactory() {
  return [] { return std::make_unique<ConfidenceScorer>(ConfidenceKind::kNegLogProb); };
}

std::vector<Trace> FuzzSet(std::size_t n, int length, std::uint64_t seed) {
  verify::FuzzOptions opt;
  opt.length = length;
  Rng rng(seed);
  std::vector<Trace> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(verify::FuzzTrace(rng, opt));
  return out;
}

}  // namespace

TEST_CASE("finalize merges and pins") {
  std::vector<CurvePoint> raw = {{0.5, 1.0, 4.0}, {0.4, 1.0, 6.0},
                                 {0.1, 0.0, 99.0}, {0.2, 3.0, 1.0}};
  const DeferralCurve c = FinalizeCurve("m", raw, 3.0, 7.0, 0.5);
  REQUIRE(c.points.size() == 3);
  CHECK(c.points[0].deferred == 0.0);
  CHECK(c.points[0].loss == 7.0);
  CHECK(c.points[1].deferred == 1.0);
  CHECK(c.points[1].loss == doctest::Approx(5.0));
  CHECK(c.points[2].deferred == 3.0);
  CHECK(c.points[2].loss == 0.5);
}

TEST_CASE("audc") {
  DeferralCurve line{"line", {{0, 0.0, 10.0}, {0, 5.0, 2.0}}};
  CHECK(Audc(line) == doctest::Approx(30.0).epsilon(1e-15));
  DeferralCurve flat{"flat", {{0, 0.0, 2.0}, {0, 2.5, 2.0}, {0, 5.0, 2.0}}};
  CHECK(Audc(flat) == doctest::Approx(10.0).epsilon(1e-15));
  DeferralCurve one{"one", {{0, 0.0, 2.0}}};
  CHECK(oracle::KindOf([&] { (void)Audc(one); }) == ErrorKind::kDegenerateCurve);

  Rng rng(1);
  std::vector<double> x = {0.0}, y = {rng.Uniform()};
  DeferralCurve r{"r", {{0, 0.0, y[0]}}};
  for (int i = 1; i < 40; ++i) {
    x.push_back(x.back() + rng.Uniform(0.01, 1.0));
    y.push_back(rng.Uniform(0.0, 5.0));
    r.points.push_back({0, x.back(), y.back()});
  }
  CHECK(Audc(r) == doctest::Approx(oracle::Trapezoid(x, y)).epsilon(1e-13));
}

TEST_CASE("percent improvement") {
  CHECK(PctImprovement(270.92, 306.12) == doctest::Approx(11.50).epsilon(1e-3));
  CHECK(PctImprovement(3.0, 3.0) == 0.0);
  CHECK(PctImprovement(4.0, 3.0) < 0.0);
  CHECK(oracle::KindOf([] { (void)PctImprovement(1.0, 0.0); }) ==
        ErrorKind::kDivision);
}

TEST_CASE("threshold grid") {
  const std::vector<double> g = ThresholdGrid({2.0, -1.0, 2.0, 0.5});
  REQUIRE(g.size() == 5);
  CHECK(g[0] == -kInf);
  CHECK(g[1] == -1.0);
  CHECK(g[2] == 0.5);
  CHECK(g[3] == 2.0);
  CHECK(g[4] == kInf);
}

TEST_CASE("pairwise sum") {
  Rng rng(3);
  std::vector<double> v(1001);
  long double ref = 0.0L;
  for (double& x : v) {
    x = rng.Uniform(-1, 1);
    ref += x;
  }
  CHECK(PairwiseSum(v) == doctest::Approx(static_cast<double>(ref)).epsilon(1e-13));
  CHECK(PairwiseSum(std::vector<double>{}) == 0.0);
}

TEST_CASE("token policy on a hand trace") {
  // conf_score equals the model loss in HandTrace.
  const Trace t = oracle::HandTrace({0.1, 0.5, 0.3}, {0.05, 0.0, 0.2}, 0.3);
  StaticEnv env;
  ConfidenceScorer s(ConfidenceKind::kNegLogProb);
  PolicyOutcome none = RunTokenPolicy(t, env, TokenEvalMode::kStatic, s, kInf);
  CHECK(none.deferred == 0.0);
  CHECK(none.loss == doctest::Approx(0.9));
  PolicyOutcome all = RunTokenPolicy(t, env, TokenEvalMode::kStatic, s, -kInf);
  CHECK(all.deferred == 3.0);
  CHECK(all.loss == doctest::Approx(0.25));
  // Scores 0.1, 0.5, 0.3 at tau = 0.3 defer tokens 2 and 3.
  PolicyOutcome mid = RunTokenPolicy(t, env, TokenEvalMode::kStatic, s, 0.3);
  CHECK(mid.deferred == 2.0);
  CHECK(mid.loss == doctest::Approx(0.1 + 0.0 + 0.2));

  const std::vector<Trace> one = {t};
  const std::vector<double> taus = {0.3};
  const DeferralCurve c =
      CurveToken("conf", one, env, TokenEvalMode::kStatic, ConfFactory(), taus);
  REQUIRE(c.points.size() == 3);
  CHECK(c.points[1].deferred == 2.0);
  CHECK(c.points[1].loss == doctest::Approx(0.3));
  CHECK(c.points[0].loss == doctest::Approx(0.9));
  CHECK(c.points[2].loss == doctest::Approx(0.25));
}

TEST_CASE("choose one-time") {
  const CandidateSet j = CandidateSet::Full(3);
  const std::vector<double> g = {0.2, 1.0, 1.0, 0.5};
  OnetimeChoice ch = ChooseOnetime(j, g);
  CHECK(ch.stay_score == 0.5);
  CHECK(ch.handoff == 3);
}

TEST_CASE("one-time curve on a two-instance toy") {
  // L = 2, J = {1, 2, 3}.
  const Trace a = oracle::HandTrace({1.0, 2.0}, {0.5, 0.5}, 0.0);
  const Trace b = oracle::HandTrace({0.0, 4.0}, {1.0, 1.0}, 0.0);
  // a: system (1.0, 1.5, 3.0); b: system (2.0, 1.0, 4.0).
  const std::vector<Trace> ts = {a, b};
  const CandidateSet j = CandidateSet::Full(2);
  const std::vector<std::vector<double>> g = {{2.0, 0.0, 1.0}, {0.0, 1.0, 3.0}};
  const std::vector<double> taus = {-kInf, 2.0, kInf};
  const DeferralCurve c = CurveOnetime("t", ts, j, g, taus);
  // Stay iff g_{L+1} > tau.
  // tau = -inf: both stay.
  // tau = 2: a (stay 1 <= 2) hands off at j=1; b stays (3 > 2): loss 4.0.
  // tau = +inf: a at j=1 (2 tokens, loss 1.0), b at j=2 (1 token, loss 1.0).
  REQUIRE(c.points.size() == 4);
  CHECK(c.points[0].deferred == 0.0);
  CHECK(c.points[0].loss == doctest::Approx(3.5));
  CHECK(c.points[1].deferred == doctest::Approx(1.0));
  CHECK(c.points[1].loss == doctest::Approx((1.0 + 4.0) / 2));
  CHECK(c.points[2].deferred == doctest::Approx(1.5));
  CHECK(c.points[2].loss == doctest::Approx(1.0));
  CHECK(c.points[3].deferred == 2.0);
  CHECK(c.points[3].loss == doctest::Approx(1.5));

  // A threshold below every stay score keeps the predictor everywhere;
  // above every stay score each instance hands off at its argmax.
  const std::vector<double> low = {-5.0};
  const DeferralCurve d = CurveOnetime("t", ts, j, g, low);
  CHECK(d.points.size() == 2);
  const std::vector<double> high = {5.0};
  const DeferralCurve e = CurveOnetime("t", ts, j, g, high);
  REQUIRE(e.points.size() == 3);
  CHECK(e.points[1].deferred == doctest::Approx(1.5));
  CHECK(e.points[1].loss == doctest::Approx(1.0));
}

TEST_CASE("whole curve") {
  const Trace a = oracle::HandTrace({1.0, 2.0}, {0.5, 0.5}, 0.0);
  const Trace b = oracle::HandTrace({0.0, 4.0}, {1.0, 1.0}, 0.0);
  const std::vector<Trace> ts = {a, b};
  const std::vector<double> scores = {0.0, 1.0};
  const std::vector<double> taus = {0.5};
  const DeferralCurve c = CurveWhole("w", ts, scores, taus);
  REQUIRE(c.points.size() == 3);
  CHECK(c.points[1].deferred == doctest::Approx(1.0));
  CHECK(c.points[1].loss == doctest::Approx((3.0 + 2.0) / 2));
}

TEST_CASE("parallel curves equal the serial references") {
  const std::vector<Trace> ts = FuzzSet(60, 6, 8);
  StaticEnv env;
  const std::vector<double> taus =
      ThresholdGrid(ObservedTokenScores(ts, env, TokenEvalMode::kStatic, ConfFactory()));
  const DeferralCurve p = CurveToken("x", ts, env, TokenEvalMode::kStatic, ConfFactory(), taus);
  const DeferralCurve s =
      serial::CurveToken("x", ts, env, TokenEvalMode::kStatic, ConfFactory(), taus);
  REQUIRE(p.points.size() == s.points.size());
  for (std::size_t i = 0; i < p.points.size(); ++i) {
    CHECK(p.points[i].deferred == doctest::Approx(s.points[i].deferred).epsilon(1e-12));
    CHECK(p.points[i].loss == doctest::Approx(s.points[i].loss).epsilon(1e-12));
  }
  const CandidateSet j = CandidateSet::Full(6);
  std::vector<std::vector<double>> g;
  std::vector<double> whole;
  for (const Trace& t : ts) {
    g.push_back(OnetimeConf(ConfidenceKind::kNegLogProb, t, j));
    whole.push_back(ChowScore(ChowRule{}, t));
  }
  std::vector<double> gt;
  for (const auto& row : g) gt.push_back(row.back());
  const std::vector<double> ot = ThresholdGrid(gt);
  const DeferralCurve po = CurveOnetime("o", ts, j, g, ot);
  const DeferralCurve so = serial::CurveOnetime("o", ts, j, g, ot);
  REQUIRE(po.points.size() == so.points.size());
  for (std::size_t i = 0; i < po.points.size(); ++i) {
    CHECK(po.points[i].loss == doctest::Approx(so.points[i].loss).epsilon(1e-12));
  }
  const std::vector<double> wt = ThresholdGrid(whole);
  const DeferralCurve pw = CurveWhole("w", ts, whole, wt);
  const DeferralCurve sw = serial::CurveWhole("w", ts, whole, wt);
  REQUIRE(pw.points.size() == sw.points.size());
  for (std::size_t i = 0; i < pw.points.size(); ++i) {
    CHECK(pw.points[i].loss == doctest::Approx(sw.points[i].loss).epsilon(1e-12));
  }
}

TEST_CASE("csv output") {
  DeferralCurve c{"m", {{kInf, 0.0, 2.0}, {0.5, 1.0, 1.0}}};
  const std::string csv = CurvesToCsv({c});
  CHECK(csv.rfind("method,threshold,deferred_count,loss\n", 0) == 0);
  CHECK(csv.find("m,inf,0,2\n") != std::string::npos);
  CHECK(FormatDouble(0.1) == "0.1");
  CHECK(FormatDouble(-kInf) == "-inf");
  const std::string s = SummaryToCsv({{"m", 1.5, 2.25, 3}});
  CHECK(s == "method,audc,pct_improvement,seed\nm,1.5,2.25,3\n");
}

// ---------------------------------------------------------------------------
// Baselines

TEST_CASE("chow rules") {
  const std::vector<double> scores = {-std::log(0.5), -std::log(0.25)};
  CHECK(ChowScore(ChowRule{ChowKind::kMean}, scores) ==
        doctest::Approx((std::log(2.0) + std::log(4.0)) / 2).epsilon(1e-15));
  CHECK(ChowScore(ChowRule{ChowKind::kMean}, scores) ==
        doctest::Approx(1.039721).epsilon(1e-6));
  const std::vector<double> zeros(5, 0.0);
  CHECK(ChowScore(ChowRule{ChowKind::kSum}, zeros) == 0.0);
  const std::vector<double> v = {3.0, -1.0, 7.0, 2.0};
  CHECK(ChowScore(ChowRule{ChowKind::kQuantile, 0.0}, v) == -1.0);
  CHECK(ChowScore(ChowRule{ChowKind::kQuantile, 1.0}, v) == 7.0);
  // Position 0.5 * 3 = 1.5 between 2 and 3.
  CHECK(Quantile(v, 0.5) == doctest::Approx(2.5));
}

TEST_CASE("entropy and confidence") {
  const std::vector<double> u(4, 0.25);
  CHECK(Entropy(u) == doctest::Approx(std::log(4.0)));
  const std::vector<double> d = {0.0, 1.0, 0.0};
  CHECK(Entropy(d) == 0.0);
  StepRecord s;
  s.conf_score = 0.7;
  CHECK(StepConfidence(ConfidenceKind::kNegLogProb, s) == 0.7);
  CHECK(StepConfidence(ConfidenceKind::kMcVariance, s) == 0.7);
  CHECK(oracle::KindOf([&] { (void)StepConfidence(ConfidenceKind::kEntropy, s); }) ==
        ErrorKind::kCapability);
  s.dist = u;
  CHECK(StepConfidence(ConfidenceKind::kEntropy, s) == doctest::Approx(std::log(4.0)));
}

TEST_CASE("one-time confidence scores") {
  const Trace t = oracle::HandTrace({0.3, 0.9, 0.1, 0.4}, {0, 0, 0, 0}, 0.0);
  const CandidateSet j({1, 3, 5}, 4);
  const std::vector<double> g = OnetimeConf(ConfidenceKind::kNegLogProb, t, j);
  REQUIRE(g.size() == 3);
  CHECK(g[0] == 0.3);
  CHECK(g[1] == 0.1);
  CHECK(g[2] == doctest::Approx(0.1 - 1.0));
}

TEST_CASE("random curves") {
  const std::vector<Trace> ts = FuzzSet(50, 8, 12);
  const DeferralCurve line = AnalyticRandomCurve(ts);
  REQUIRE(line.points.size() == 2);
  CHECK(line.points[0].loss == doctest::Approx(MeanModelLoss(ts)));
  CHECK(line.points[1].loss == doctest::Approx(MeanExpertLoss(ts)));
  const std::vector<double> ends = {0.0, 1.0};
  const DeferralCurve t = RandomCurveToken(ts, 4, ends, 200);
  CHECK(t.points.front().loss == doctest::Approx(MeanModelLoss(ts)));
  CHECK(t.points.back().loss == doctest::Approx(MeanExpertLoss(ts)));

  const std::vector<double> grid = ProbabilityGrid(10);
  REQUIRE(grid.size() == 11);
  const DeferralCurve mc = RandomCurveToken(ts, 5, grid, 10000);
  CHECK(std::abs(Audc(mc) - Audc(line)) <= 0.02 * Audc(line));
  const DeferralCurve mw = RandomCurveWhole(ts, 6, grid, 10000);
  CHECK(std::abs(Audc(mw) - Audc(line)) <= 0.02 * Audc(line));
}

TEST_CASE("optimal token curve against subset enumeration") {
  // Two traces of length 3: budgets over 6 pooled tokens.
  const std::vector<Trace> ts = {
      oracle::HandTrace({0.5, 0.1, 0.8}, {0.0, 0.3, 0.2}, 0.0),
      oracle::HandTrace({0.2, 0.6, 0.1}, {0.4, 0.0, 0.0}, 0.0)};
  std::vector<double> ml, el;
  for (const Trace& t : ts) {
    for (const StepRecord& s : t.steps) {
      ml.push_back(s.model_loss);
      el.push_back(s.expert_loss);
    }
  }
  std::vector<double> best(7, 1e300);
  for (unsigned mask = 0; mask < 64; ++mask) {
    double loss = 0.0;
    int k = 0;
    for (int i = 0; i < 6; ++i) {
      const bool d = mask >> i & 1u;
      loss += d ? el[i] : ml[i];
      k += d;
    }
    best[k] = std::min(best[k], loss / 2.0);
  }
  const DeferralCurve c = OptimalCurveToken(ts);
  CHECK(c.points.front().loss == doctest::Approx(MeanModelLoss(ts)));
  CHECK(c.points.back().loss == doctest::Approx(MeanExpertLoss(ts)));
  for (const CurvePoint& p : c.points) {
    const int k = static_cast<int>(std::lround(p.deferred * 2.0));
    CHECK(p.loss == doctest::Approx(best[k]).epsilon(1e-12));
  }
}

TEST_CASE("optimal one-time curve lies below every policy") {
  const std::vector<Trace> ts = FuzzSet(6, 3, 30);
  const CandidateSet j = CandidateSet::Full(3);
  const DeferralCurve c = OptimalCurveOnetime(ts, j);
  CHECK(c.points.front().deferred == 0.0);
  CHECK(c.points.back().deferred == 3.0);
  // Every joint choice of hand-off positions (4^6) sits on or above it.
  auto below = [&](double x) {
    for (std::size_t i = 1; i < c.points.size(); ++i) {
      const CurvePoint& a = c.points[i - 1];
      const CurvePoint& b = c.points[i];
      if (x <= b.deferred + 1e-12) {
        return a.loss + (b.loss - a.loss) * (x - a.deferred) / (b.deferred - a.deferred);
      }
    }
    return c.points.back().loss;
  };
  int violations = 0;
  for (int code = 0; code < 4096; ++code) {
    double x = 0.0, y = 0.0;
    int rest = code;
    for (const Trace& t : ts) {
      const int k = rest % 4;
      rest /= 4;
      x += 3 - (k + 1) + 1;
      y += t.system_losses[k];
    }
    x /= 6.0;
    y /= 6.0;
    violations += y < below(x) - 1e-12;
  }
  CHECK(violations == 0);
}

TEST_CASE("lower convex hull") {
  std::vector<CurvePoint> pts = {{0, 0, 4}, {0, 1, 3.9}, {0, 2, 1}, {0, 3, 0.9}, {0, 4, 0}};
  const std::vector<CurvePoint> h = LowerConvexHull(pts);
  REQUIRE(h.size() == 3);
  CHECK(h[1].deferred == 2.0);
}
