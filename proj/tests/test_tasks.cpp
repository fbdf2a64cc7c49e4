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
#include <filesystem>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "seqdefer/rng.hpp"
#include "seqdefer/tasks.hpp"
#include "seqdefer/trace_io.hpp"

using namespace seqdefer;

namespace {

TspInstance Square() {
  return TspInstance{{{0.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}, {1.0, 0.0}}};
}

double Euclid(const TspInstance& t, int a, int b) {
  return std::hypot(t.coords[a][0] - t.coords[b][0], t.coords[a][1] - t.coords[b][1]);
}

double Cycle(const TspInstance& t, const std::vector<int>& tour) {
  double s = 0.0;
  for (std::size_t i = 0; i < tour.size(); ++i) {
    s += Euclid(t, tour[i], tour[(i + 1) % tour.size()]);
  }
  return s;
}

std::filesystem::path ScratchDir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("seqdefer-test-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

// ---------------------------------------------------------------------------
// TSP

TEST_CASE("tsp generation") {
  const auto a = GenTsp(2, 50, 7);
  const auto b = GenTsp(2, 50, 7);
  REQUIRE(a.size() == 2);
  CHECK(a[0].coords == b[0].coords);
  CHECK(a[1].coords == b[1].coords);
  CHECK(a[0].coords != a[1].coords);
  CHECK(oracle::KindOf([] { GenTsp(1, 3, 0); }) == ErrorKind::kParameter);

  const auto many = GenTsp(1000, 50, 1);
  double sum = 0.0, sq = 0.0;
  std::size_t count = 0;
  for (const auto& inst : many) {
    for (const auto& c : inst.coords) {
      for (double v : c) {
        sum += v;
        sq += v * v;
        ++count;
      }
    }
  }
  CHECK(count == 100000);
  CHECK(std::abs(sum / count) <= 0.02);
  CHECK(std::abs(sq / count - 1.0) <= 0.02);
}

TEST_CASE("nearest neighbour predictor") {
  const TspInstance sq = Square();
  const TspPrediction p = TspPredict(sq);
  CHECK(p.tour == std::vector<int>{0, 1, 2, 3});
  CHECK(TourLength(sq, p.tour) == doctest::Approx(4.0));
  REQUIRE(p.dist.size() == 4);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(p.conf[j] == doctest::Approx(-std::log(p.dist[j][p.tour[j]])));
    CHECK(std::accumulate(p.dist[j].begin(), p.dist[j].end(), 0.0) ==
          doctest::Approx(1.0));
  }

  // Cities 1 and 2 are both at distance 1 from city 0.
  const TspInstance line{{{0.0, 0.0}, {1.0, 0.0}, {-1.0, 0.0}, {2.0, 0.0}}};
  CHECK(TspPredict(line).tour == std::vector<int>{0, 1, 3, 2});

  const TspInstance ten = GenTsp(1, 10, 3)[0];
  const std::vector<int> tour = TspPredict(ten).tour;
  CHECK(IsPermutation(tour, 10));
  std::vector<int> sorted = tour;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 10; ++i) CHECK(sorted[i] == i);
  CHECK(TourLength(ten, tour) == doctest::Approx(Cycle(ten, tour)));
}

TEST_CASE("exact completion") {
  const TspInstance sq = Square();
  const std::vector<int> empty;
  const std::vector<int> t = HeldKarpComplete(sq, empty);
  CHECK(IsPermutation(t, 4));
  CHECK(TourLength(sq, t) == doctest::Approx(4.0));
  const std::vector<int> full = {0, 2, 1, 3};
  CHECK(HeldKarpComplete(sq, full) == full);
  CHECK(TspExpertComplete(sq, full) == full);

  // Brute force over permutations with the prefix fixed.
  const TspInstance eight = GenTsp(1, 8, 9)[0];
  const std::vector<int> prefix = {0, 5, 2};
  std::vector<int> rest = {1, 3, 4, 6, 7};
  double best = 1e300;
  do {
    std::vector<int> tour = prefix;
    tour.insert(tour.end(), rest.begin(), rest.end());
    best = std::min(best, Cycle(eight, tour));
  } while (std::next_permutation(rest.begin(), rest.end()));
  const std::vector<int> exact = HeldKarpComplete(eight, prefix);
  CHECK(std::equal(prefix.begin(), prefix.end(), exact.begin()));
  CHECK(TourLength(eight, exact) == doctest::Approx(best).epsilon(1e-12));
  const std::vector<int> heur = TspExpertComplete(eight, prefix);
  CHECK(std::equal(prefix.begin(), prefix.end(), heur.begin()));
  CHECK(TourLength(eight, heur) >= best - 1e-9);
  CHECK(TourLength(eight, heur) <=
        TourLength(eight, NearestNeighborComplete(eight, prefix)) + 1e-9);

  const std::vector<int> repeat = {0, 1, 1};
  CHECK(oracle::KindOf([&] { TspExpertComplete(eight, repeat); }) ==
        ErrorKind::kValidity);
  const TspInstance big = GenTsp(1, 14, 1)[0];
  const std::vector<int> start = {0};
  CHECK(oracle::KindOf([&] { HeldKarpComplete(big, start); }) ==
        ErrorKind::kParameter);
}

TEST_CASE("tsp trace losses") {
  const TspInstance inst = GenTsp(1, 10, 21)[0];
  const CostSchedule sched(0.5, 10);
  const Trace t = TspTrace(inst, "x", sched);
  CHECK_FALSE(ValidateTrace(t, TspBounds(10, 0.5)).has_value());
  REQUIRE(t.candidates.size() == 11);

  const std::vector<int> model = TspPredict(inst).tour;
  std::vector<double> lengths;
  for (int j = 1; j <= 11; ++j) {
    std::vector<int> tour;
    if (j == 11) {
      tour = model;
    } else {
      const std::vector<int> prefix(model.begin(), model.begin() + (j - 1));
      tour = TspExpertComplete(inst, prefix);
      CHECK(std::equal(prefix.begin(), prefix.end(), tour.begin()));
    }
    CHECK(IsPermutation(tour, 10));
    lengths.push_back(Cycle(inst, tour));
  }
  const double ref = *std::min_element(lengths.begin(), lengths.end());
  for (int j = 1; j <= 11; ++j) {
    const std::size_t k = j - 1;
    CHECK(t.system_losses[k] ==
          doctest::Approx(100.0 * (lengths[k] - ref) / ref).epsilon(1e-12));
    CHECK(t.onetime_alpha[k] == doctest::Approx(sched.AlphaAt(j)));
    if (j <= 10) {
      CHECK(t.prefix_losses[k] + t.onetime_costs[k] ==
            doctest::Approx(lengths[k] + sched.AlphaAt(j)).epsilon(1e-12));
    }
  }
  // j = 1 is the expert's own tour.
  std::vector<int> target;
  for (const Label& l : t.target) target.push_back(static_cast<int>(LabelId(l)));
  CHECK(Cycle(inst, target) == doctest::Approx(lengths[0]));
  CHECK(t.expert_full_loss == t.system_losses.front());
  CHECK(t.model_full_loss == t.system_losses.back());
  CHECK(t.onetime_alpha.back() == 0.0);
  CHECK(t.prefix_losses.back() == doctest::Approx(lengths.back()));
}

TEST_CASE("tsp json round trip") {
  const auto a = GenTsp(3, 6, 2);
  const auto b = TspFromJson(TspToJson(a));
  REQUIRE(b.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(a[i].coords == b[i].coords);
}

// ---------------------------------------------------------------------------
// MWP

TEST_CASE("mwp generation") {
  const auto a = GenMwp(5, 4);
  const auto b = GenMwp(5, 4);
  REQUIRE(a.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(a[i].history == b[i].history);
    CHECK(a[i].target == b[i].target);
    CHECK(a[i].history.size() == 12);
    CHECK(a[i].target.size() == 6);
  }
}

TEST_CASE("series csv") {
  std::string text;
  for (int i = 0; i < 18; ++i) text += std::to_string(i) + "\n";
  const std::vector<double> s = ParseSeriesCsv(text, false);
  CHECK(s.size() == 18);
  const auto w = WindowsFromSeries(s, 1);
  REQUIRE(w.size() == 1);
  CHECK(w[0].history.front() == 0.0);
  CHECK(w[0].target.back() == 17.0);
  CHECK(WindowsFromSeries(ParseSeriesCsv("v\n" + text + "18\n", true), 1).size() == 2);

  std::string bad = text;
  bad.replace(bad.find("5\n"), 1, "abc");
  const std::string msg = oracle::MessageOf([&] { ParseSeriesCsv(bad, false); });
  CHECK(msg.find("row 6") != std::string::npos);
  CHECK(oracle::KindOf([&] { ParseSeriesCsv(bad, false); }) == ErrorKind::kData);
  CHECK(oracle::KindOf([] { ParseSeriesCsv("1\n2\n3\n", false); }) == ErrorKind::kData);

  const auto dir = ScratchDir("csv");
  WriteFile(dir / "s.csv", text);
  CHECK(ReadSeriesCsv(dir / "s.csv", false) == s);
  CHECK(oracle::KindOf([&] { ReadSeriesCsv(dir / "missing.csv", false); }) ==
        ErrorKind::kIo);
}

TEST_CASE("ar fit") {
  // Constant windows: intercept-only model predicting the constant.
  std::vector<MwpInstance> flat(4);
  for (auto& w : flat) {
    w.history.assign(12, 2.5);
    w.target.assign(6, 2.5);
  }
  const ArModel m = FitAr(flat, 2, 4, 0);
  const std::vector<double> lags = {2.5, 2.5};
  CHECK(m.Predict(lags) == doctest::Approx(2.5));
  CHECK(m.McVariance(lags) == doctest::Approx(0.0).scale(1.0));
  const Trace t = MwpTrace(flat[0], "c", m, 0.0, CostSchedule(0.1, 6), 1);
  for (const StepRecord& s : t.steps) {
    CHECK(s.model_loss == doctest::Approx(0.0).scale(1.0));
    CHECK(s.expert_loss == 0.0);
  }

  // x_t = 0.2 + 0.5 x_{t-1} + 0.3 x_{t-2} + e_t.
  Rng rng(17);
  std::vector<double> x = {0.0, 0.0};
  for (int i = 0; i < 10000; ++i) {
    x.push_back(0.2 + 0.5 * x[x.size() - 1] + 0.3 * x[x.size() - 2] + rng.Normal());
  }
  const ArModel fit = FitArSeries(x, 2, 0, 0);
  REQUIRE(fit.coef.size() == 3);
  CHECK(std::abs(fit.coef[1] - 0.5) <= 0.05);
  CHECK(std::abs(fit.coef[2] - 0.3) <= 0.05);
  const std::vector<double> recent = {1.0, -1.0};
  CHECK(fit.Predict(recent) ==
        doctest::Approx(fit.coef[0] + fit.coef[1] - fit.coef[2]));

  const ArModel back = ArModelFromJson(ArModelToJson(fit));
  CHECK(back.coef == fit.coef);
}

TEST_CASE("mwp expert noise") {
  Rng rng(3);
  CHECK(LabelValue(MwpExpert(1.25, 0.0, rng)) == 1.25);
  CHECK(oracle::KindOf([&] { MwpExpert(0.0, -1.0, rng); }) == ErrorKind::kParameter);
  const double sigma = 0.3;
  double sq = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double e = LabelValue(MwpExpert(2.0, sigma, rng)) - 2.0;
    sq += e * e;
  }
  CHECK(std::abs(sq / 100000 - sigma * sigma) <= 0.02 * sigma * sigma);
  Rng r1(5), r2(5);
  CHECK(LabelValue(MwpExpert(0.0, 1.0, r1)) == LabelValue(MwpExpert(0.0, 1.0, r2)));
}

TEST_CASE("mwp dataset") {
  MwpConfig cfg;
  cfg.train = 50;
  cfg.test = 10;
  cfg.seed = 2;
  const TaskDataset d = BuildMwpDataset(cfg);
  CHECK(d.train.size() == 50);
  CHECK(d.test.size() == 10);
  for (const Trace& t : d.test) CHECK_FALSE(ValidateTrace(t, d.bounds).has_value());
  // Squared-error system losses: sum of per-step losses.
  const Trace& t = d.test[0];
  double model = 0.0;
  for (const StepRecord& s : t.steps) {
    const double e = LabelValue(s.model_pred) - LabelValue(t.target[s.j - 1]);
    CHECK(s.model_loss == doctest::Approx(e * e));
    model += s.model_loss;
  }
  CHECK(t.model_full_loss == doctest::Approx(model));
}

// ---------------------------------------------------------------------------
// Text

TEST_CASE("ngram tables") {
  const std::vector<std::vector<std::int64_t>> seqs = {{0, 1, 0, 1, 0, 1}};
  const NGramTable t = FitNGram(seqs, 2, 1, 0.0);
  const std::vector<std::int64_t> h0 = {0}, h1 = {1};
  CHECK(t.Dist(h0)[1] == doctest::Approx(1.0));
  CHECK(t.Predict(h1) == 0);
  const NGramTable s = FitNGram(seqs, 2, 1, 1.0);
  // Counts 0->1: 3; smoothed (0 + 1) / (3 + 2) and (3 + 1) / (3 + 2).
  CHECK(s.Dist(h0)[0] == doctest::Approx(0.2));
  CHECK(s.Dist(h0)[1] == doctest::Approx(0.8));
  const NGramTable back = NGramFromJson(NGramToJson(s));
  CHECK(back.rows == s.rows);
  NGramTable tie{1, 3, {{0.4, 0.4, 0.2}, {0.1, 0.2, 0.7}, {1.0 / 3, 1.0 / 3, 1.0 / 3}}};
  CHECK(tie.Predict(h0) == 0);
}

namespace {

NGramTable Uniform(int vocab, int order) {
  NGramTable t;
  t.order = order;
  t.vocab = vocab;
  std::size_t rows = 1;
  for (int k = 0; k < order; ++k) rows *= vocab;
  t.rows.assign(rows, std::vector<double>(vocab, 1.0 / vocab));
  return t;
}

Trace Bare(const TextInstance& inst) {
  Trace t;
  for (std::int64_t c : inst.context) t.inputs.push_back(static_cast<double>(c));
  for (std::int64_t y : inst.target) t.target.emplace_back(y);
  return t;
}

}  // namespace

TEST_CASE("text expert beats a uniform predictor") {
  Rng rng(8);
  const NGramTable chain = RandomChain(6, 2, 3.0, rng);
  const TextEnv env(Uniform(6, 1), chain, 0.0);
  const auto sample = SampleText(chain, 2000, 12, 4);
  double expert_err = 0, model_err = 0, expert_exact = 0, model_exact = 0;
  double expert_var = 0;
  std::size_t steps = 0;
  for (const TextInstance& inst : sample) {
    const Trace t = Bare(inst);
    std::vector<Label> ctx;
    std::vector<std::int64_t> hist = inst.context;
    for (std::size_t j = 0; j < inst.target.size(); ++j) {
      const StepRecord s = env.Step(t, ctx);
      expert_err += s.expert_loss;
      model_err += s.model_loss;
      const std::vector<double>& p = chain.Dist(hist);
      const double top = *std::max_element(p.begin(), p.end());
      expert_exact += 1.0 - top;
      expert_var += top * (1.0 - top);
      model_exact += 1.0 - p[0];
      ctx.emplace_back(inst.target[j]);
      hist.push_back(inst.target[j]);
      ++steps;
    }
  }
  CHECK(expert_err < model_err);
  CHECK(expert_exact < model_exact);
  // Conditional on the histories the error count has this mean and variance.
  CHECK(std::abs(expert_err - expert_exact) <= 4.0 * std::sqrt(expert_var));
  CHECK(model_err / steps == doctest::Approx(model_exact / steps).epsilon(0.05));
}

TEST_CASE("deterministic chain gives a perfect expert") {
  NGramTable chain = Uniform(4, 2);
  for (std::size_t r = 0; r < chain.rows.size(); ++r) {
    std::fill(chain.rows[r].begin(), chain.rows[r].end(), 0.0);
    chain.rows[r][(r * 3 + 1) % 4] = 1.0;
  }
  const TextEnv env(Uniform(4, 1), chain, 0.0);
  for (const TextInstance& inst : SampleText(chain, 50, 10, 2)) {
    const Trace t = Bare(inst);
    std::vector<Label> ctx;
    for (std::int64_t y : inst.target) {
      CHECK(env.Step(t, ctx).expert_loss == 0.0);
      ctx.emplace_back(y);
    }
  }
}

TEST_CASE("text dataset") {
  TextConfig cfg;
  cfg.train = 40;
  cfg.test = 10;
  cfg.seed = 1;
  const TaskDataset d = BuildTextDataset(cfg);
  for (const Trace& t : d.train) CHECK_FALSE(ValidateTrace(t, d.bounds).has_value());
  CHECK(d.bounds.feature_dim == TextFeatureDim(6));
  CHECK(d.bounds.summary_dim == TextSummaryDim(6, 12));
}

// ---------------------------------------------------------------------------
// Datasets on disk

TEST_CASE("dataset round trip") {
  MwpConfig cfg;
  cfg.train = 8;
  cfg.test = 4;
  const TaskDataset d = BuildMwpDataset(cfg);
  const auto dir = ScratchDir("dataset");
  SaveDataset(dir, d, "abc");
  const TaskDataset e = LoadDataset(dir);
  CHECK(e.kind == d.kind);
  CHECK(e.alpha1 == d.alpha1);
  REQUIRE(e.test.size() == d.test.size());
  CHECK(TracesToNdjson(e.test) == TracesToNdjson(d.test));
  CHECK(TracesToNdjson(e.train) == TracesToNdjson(d.train));
  const std::string meta = ReadFile(dir / "meta.json");
  CHECK(meta.find("abc") != std::string::npos);

  auto env_a = MakeEnv(d);
  auto env_b = MakeEnv(e);
  std::vector<Label> ctx;
  CHECK(env_a->Step(d.test[0], ctx).model_loss == env_b->Step(e.test[0], ctx).model_loss);
}

TEST_CASE("apply schedule") {
  Trace t = oracle::HandTrace({0.1, 0.2, 0.3}, {0.0, 0.1, 0.0}, 0.3);
  const std::vector<double> quality = {0.1, 0.1, 0.0, 0.0};
  ApplySchedule(t, CostSchedule(0.9, 3));
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(t.onetime_alpha[k] == doctest::Approx(0.9 * (3 - static_cast<int>(k)) / 3));
    CHECK(t.onetime_costs[k] == doctest::Approx(quality[k] + t.onetime_alpha[k]));
  }
  CHECK(t.steps[1].expert_cost == doctest::Approx(0.1 + 0.3));
}
