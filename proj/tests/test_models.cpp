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
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "seqdefer/baselines.hpp"
#include "seqdefer/checkpoint.hpp"
#include "seqdefer/consistency.hpp"
#include "seqdefer/rejectors.hpp"
#include "seqdefer/rng.hpp"
#include "seqdefer/rollout.hpp"
#include "seqdefer/surrogates.hpp"
#include "seqdefer/verify.hpp"

using namespace seqdefer;

namespace {

// Per step: feature x ~ N(0, 1), predictor loss 1[x > 0], perfect expert
// at price 0.3.
std::vector<Trace> SeparableTokenTraces(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Trace> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> xs(4), l(4);
    for (int j = 0; j < 4; ++j) {
      xs[j] = rng.Normal();
      l[j] = xs[j] > 0.0 ? 1.0 : 0.0;
    }
    Trace t = oracle::HandTrace(l, std::vector<double>(4, 0.0), 1.2);
    for (int j = 0; j < 4; ++j) t.steps[j].features = {xs[j]};
    out.push_back(t);
  }
  return out;
}

double RealizedTokenRisk(const TokenRejectorModel& m, const std::vector<Trace>& ts) {
  double total = 0.0;
  for (const Trace& t : ts) {
    TokenRejectorModel::State st = m.InitialState();
    std::vector<double> l, c, r;
    for (const StepRecord& s : t.steps) {
      const double score = m.Score(s.features, st);
      st.prev_decision = score >= 0.0 ? 1.0 : 0.0;
      l.push_back(s.model_loss);
      c.push_back(s.expert_cost);
      r.push_back(score);
    }
    total += TokenRealized(l, c, r);
  }
  return total / ts.size();
}

// Summary x in [-1, 1]^2; the best hand-off is the quadrant index among
// J = {1, 2, 3, 4} (L = 3, so 4 is the no-deferral action).
int Quadrant(double a, double b) { return (a > 0 ? 1 : 0) + (b > 0 ? 2 : 0) + 1; }

std::vector<Trace> QuadrantTraces(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Trace> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.Uniform(-1, 1), b = rng.Uniform(-1, 1);
    Trace t = oracle::HandTrace({0, 0, 0}, {0, 0, 0}, 0.0);
    t.x_summary = {a, b};
    const int best = Quadrant(a, b);
    for (std::size_t k = 0; k < 4; ++k) {
      t.prefix_losses[k] = 0.0;
      t.onetime_costs[k] = static_cast<int>(k) + 1 == best ? 0.0 : 1.0;
    }
    out.push_back(t);
  }
  return out;
}

TrainConfig QuickConfig() {
  TrainConfig c;
  c.learning_rate = 0.01;
  c.epochs = 60;
  c.batch_size = 32;
  c.early_stopping.patience = 1000;
  c.seed = 3;
  c.rollout = RolloutMode::TeacherForced();
  return c;
}

}  // namespace

TEST_CASE("zero-weight token model scores its output bias") {
  TokenRejectorSpec spec;
  spec.feature_dim = 3;
  spec.hidden = {4};
  spec.dropout_rate = 0.0;
  TokenRejectorModel m(spec, 1);
  std::vector<double> flat(m.params().ParameterCount(), 0.0);
  m.params().SetFlatValues(flat);
  m.params()[m.params().size() - 1].value[0] = 0.7;
  TokenRejectorModel::State st = m.InitialState();
  Rng rng(2);
  for (int j = 0; j < 5; ++j) {
    const std::vector<double> f = {rng.Normal(), rng.Normal(), rng.Normal()};
    CHECK(m.Score(f, st) == 0.7);
  }
}

TEST_CASE("teacher forcing without profitable deferral keeps the model rollout") {
  const Trace t = oracle::HandTrace({0.1, 0.0, 0.2, 0.1}, {0.0, 0.0, 0.0, 0.0}, 4.0);
  TokenRejectorSpec spec;
  spec.feature_dim = 2;
  TokenRejectorModel m(spec, 5);
  StaticEnv env;
  Rng rng(1);
  const TokenForwardResult r =
      TokenForward(m, t, RolloutMode::TeacherForced(), env, rng);
  REQUIRE(r.context.size() == 4);
  for (int j = 0; j < 4; ++j) {
    CHECK(r.decisions[j] == 0);
    CHECK(LabelId(r.context[j]) == LabelId(t.steps[j].model_pred));
  }
  Rng again(1);
  const TokenForwardResult s =
      TokenForward(m, t, RolloutMode::TeacherForced(), env, again);
  CHECK(s.scores == r.scores);
}

TEST_CASE("token rejector approaches the Bayes risk on a separable world") {
  lab::FiniteWorld w;
  w.name = "separable";
  w.kind = lab::WorldKind::kToken;
  w.length = 1;
  w.context_probs = {0.5, 0.5};
  w.token = {{{{1.0, 1.0, 0.3}}}, {{{1.0, 0.0, 0.3}}}};
  w.loss_max = 1.0;
  w.cost_min = 0.3;
  w.cost_max = 0.3;
  lab::ValidateWorld(w);
  const double bayes = lab::BayesTokenRisk(w).risk;
  CHECK(bayes == doctest::Approx(0.15));

  const std::vector<Trace> train = SeparableTokenTraces(600, 1);
  const std::vector<Trace> test = SeparableTokenTraces(1000, 2);
  TokenRejectorSpec spec;
  spec.feature_dim = 1;
  spec.hidden = {8};
  spec.dropout_rate = 0.0;
  spec.recurrent = false;
  StaticEnv env;
  const TokenTrainResult res = TrainTokenRejector(train, env, spec, QuickConfig());
  CHECK(RealizedTokenRisk(res.model, test) <= 1.05 * bayes);

  const std::vector<double>& best = res.log.best_val;
  REQUIRE_FALSE(best.empty());
  for (std::size_t i = 1; i < best.size(); ++i) CHECK(best[i] <= best[i - 1]);

  const TokenTrainResult again = TrainTokenRejector(train, env, spec, QuickConfig());
  CHECK(again.model.params().FlatValues() == res.model.params().FlatValues());
}

TEST_CASE("zero epochs return the initialized token model") {
  const std::vector<Trace> train = SeparableTokenTraces(20, 1);
  TokenRejectorSpec spec;
  spec.feature_dim = 1;
  TrainConfig cfg = QuickConfig();
  cfg.epochs = 0;
  StaticEnv env;
  const TokenTrainResult res = TrainTokenRejector(train, env, spec, cfg);
  const TokenRejectorModel fresh(spec, DeriveSeed(cfg.seed, 1));
  CHECK(res.model.params().FlatValues() == fresh.params().FlatValues());
  CHECK(res.log.epochs_run == 0);
}

TEST_CASE("one-time rejector learns a feature-determined hand-off") {
  const std::vector<Trace> train = QuadrantTraces(800, 4);
  const std::vector<Trace> test = QuadrantTraces(400, 5);
  OnetimeSpec spec;
  spec.summary_dim = 2;
  spec.hidden = {16};
  spec.dropout_rate = 0.0;
  TrainConfig cfg = QuickConfig();
  cfg.epochs = 150;
  const CandidateSet j = CandidateSet::Full(3);
  const OnetimeTrainResult res = TrainOnetimeRejector(train, j, spec, cfg);
  int hits = 0;
  for (const Trace& t : test) {
    // Brute-force argmin of the realized losses.
    int best = 0;
    double low = 1e300;
    for (int k = 0; k < 4; ++k) {
      const double r = t.prefix_losses[k] + t.onetime_costs[k];
      if (r < low) {
        low = r;
        best = k + 1;
      }
    }
    hits += res.model.Decide(t) == best;
  }
  CHECK(hits >= 0.95 * test.size());

  const OnetimeTrainResult again = TrainOnetimeRejector(train, j, spec, cfg);
  CHECK(again.model.params().FlatValues() == res.model.params().FlatValues());
}

TEST_CASE("equal realized losses give zero one-time gradients") {
  std::vector<Trace> train = QuadrantTraces(64, 6);
  for (Trace& t : train) {
    for (double& c : t.onetime_costs) c = 0.5;
  }
  OnetimeSpec spec;
  spec.summary_dim = 2;
  const CandidateSet j = CandidateSet::Full(3);
  OneTimeModel m(spec, j, 3);
  CHECK(OnetimeObjective(m, train, PsiKind::kCe) == 0.0);

  TrainConfig cfg = QuickConfig();
  cfg.epochs = 5;
  cfg.weight_decay = 0.0;
  cfg.grad_clip_norm = 0.0;
  const OnetimeTrainResult res = TrainOnetimeRejector(train, j, spec, cfg);
  const OneTimeModel fresh(spec, j, DeriveSeed(cfg.seed, 1));
  CHECK(res.model.params().FlatValues() == fresh.params().FlatValues());
}

TEST_CASE("gradient checks") {
  verify::FuzzOptions opt;
  opt.length = 4;
  opt.feature_dim = 3;
  opt.summary_dim = 4;
  Rng rng(12);
  std::vector<Trace> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(verify::FuzzTrace(rng, opt));
  StaticEnv env;

  TokenRejectorSpec linear;
  linear.feature_dim = 3;
  linear.hidden = {};
  linear.dropout_rate = 0.0;
  linear.recurrent = false;
  const TokenRejectorModel lm(linear, 2);
  CHECK(GradCheckToken(lm, batch, env, PhiKind::kLogistic, 1e-5) < 1e-4);
  CHECK(GradCheckToken(lm, std::vector<Trace>{}, env, PhiKind::kLogistic, 1e-5) == 0.0);

  OnetimeSpec os;
  os.summary_dim = 4;
  os.hidden = {5};
  os.dropout_rate = 0.0;
  OneTimeModel om(os, CandidateSet::Full(4), 8);
  std::vector<double> flat = om.params().FlatValues();
  for (double& v : flat) v = rng.Uniform(-1, 1);
  om.params().SetFlatValues(flat);
  CHECK(GradCheckOnetime(om, batch, PsiKind::kCe, 1e-5) < 1e-4);
}

TEST_CASE("optimizer steps") {
  ad::ParamSet p;
  const std::size_t i = p.Add("w", 1, 2);
  p[i].value = {1.0, -2.0};
  p[i].grad = {0.5, 0.0};
  Optimizer sgd(OptimizerKind::kSgd, 0.1, 0.0);
  sgd.Step(p);
  CHECK(p[i].value[0] == doctest::Approx(0.95));
  CHECK(p[i].value[1] == -2.0);
  p[i].grad = {3.0, 4.0};
  CHECK(ClipGradNorm(p, 1.0) == doctest::Approx(5.0));
  CHECK(p.GradNorm() == doctest::Approx(1.0));
  // First Adam step moves each coordinate by about lr against the sign.
  ad::ParamSet q;
  const std::size_t k = q.Add("w", 1, 1);
  q[k].value = {0.0};
  q[k].grad = {2.0};
  Optimizer adam(OptimizerKind::kAdamW, 0.01, 0.0);
  adam.Step(q);
  CHECK(q[k].value[0] == doctest::Approx(-0.01).epsilon(1e-6));
}

TEST_CASE("feature scaler") {
  const std::vector<std::vector<double>> rows = {{1.0, 5.0}, {3.0, 5.0}};
  const FeatureScaler s = FeatureScaler::Fit(rows, 2);
  const std::vector<double> x = {3.0, 5.0};
  const std::vector<double> y = s.Apply(x);
  CHECK(y[0] == doctest::Approx(1.0));
  CHECK(std::isfinite(y[1]));
}

// ---------------------------------------------------------------------------
// Whole-sequence rejector

namespace {

std::vector<Trace> WholeTraces(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Trace> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.Normal();
    Trace t = oracle::HandTrace({0.2, 0.2}, {0.2, 0.2}, 0.0);
    t.x_summary = {x};
    t.model_full_loss = x > 0 ? 1.0 : 0.0;
    t.expert_full_loss = 0.5;
    out.push_back(t);
  }
  return out;
}

}  // namespace

TEST_CASE("whole-sequence rejector") {
  const std::vector<Trace> train = WholeTraces(500, 1);
  const std::vector<Trace> test = WholeTraces(500, 2);
  TrainConfig cfg = QuickConfig();
  cfg.epochs = 300;
  cfg.learning_rate = 0.05;
  const WholeEmbedResult res = TrainWholeEmbed(train, cfg);
  int hits = 0;
  for (const Trace& t : test) {
    hits += (res.model.Score(t) > 0.0) == (t.x_summary[0] > 0.0);
  }
  CHECK(hits >= 0.95 * test.size());

  cfg.epochs = 0;
  const WholeEmbedResult prior = TrainWholeEmbed(train, cfg);
  for (double w : prior.model.weights) CHECK(w == 0.0);
  const double pos = static_cast<double>(prior.log.positives);
  const double neg = static_cast<double>(prior.log.negatives);
  CHECK(pos + neg == 500.0);
  // Half-count smoothed log-odds.
  CHECK(prior.model.bias == doctest::Approx(std::log((pos + 0.5) / (neg + 0.5))));
}

// ---------------------------------------------------------------------------
// Checkpoints

TEST_CASE("checkpoints reproduce scores") {
  TokenRejectorSpec ts;
  ts.feature_dim = 3;
  ts.hidden = {4, 3};
  ts.state_dim = 2;
  TokenRejectorModel tm(ts, 9);
  TrainConfig cfg = QuickConfig();
  const TokenRejectorModel tb = TokenModelFromJson(TokenModelToJson(tm, cfg));
  TokenRejectorModel::State sa = tm.InitialState(), sb = tb.InitialState();
  Rng rng(3);
  for (int j = 0; j < 6; ++j) {
    const std::vector<double> f = {rng.Normal(), rng.Normal(), rng.Normal()};
    CHECK(tm.Score(f, sa) == tb.Score(f, sb));
  }
  CHECK(CheckpointKind(TokenModelToJson(tm, cfg)) == "token");

  OnetimeSpec os;
  os.summary_dim = 4;
  OneTimeModel om(os, CandidateSet::UniformGrid(6, 3), 4);
  const OneTimeModel ob = OnetimeModelFromJson(OnetimeModelToJson(om, cfg));
  verify::FuzzOptions opt;
  opt.summary_dim = 4;
  const Trace t = verify::FuzzTrace(rng, opt);
  CHECK(om.Scores(t) == ob.Scores(t));
  CHECK(ob.candidates() == om.candidates());

  const WholeEmbedResult w = TrainWholeEmbed(WholeTraces(50, 3), cfg);
  const WholeEmbedModel wb = WholeModelFromJson(WholeModelToJson(w.model, cfg));
  const Trace probe = WholeTraces(1, 4)[0];
  CHECK(w.model.Score(probe) == wb.Score(probe));

  nlohmann::json bad = TokenModelToJson(tm, cfg);
  bad["version"] = "model/v0";
  CHECK(oracle::KindOf([&] { (void)CheckpointKind(bad); }) == ErrorKind::kData);
  CHECK(oracle::KindOf([] { (void)ReadCheckpoint("/nonexistent/x.json"); }) ==
        ErrorKind::kIo);
}
