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

// Serial reference curves against the OpenMP kernels on fuzzed traces.
//
//   bench_kernels --benchmark_filter=Onetime

#include <benchmark/benchmark.h>

#include <map>
#include <memory>
#include <vector>

#include "seqdefer/baselines.hpp"
#include "seqdefer/evaluation.hpp"
#include "seqdefer/rollout.hpp"
#include "seqdefer/rng.hpp"
#include "seqdefer/verify.hpp"

using namespace seqdefer;

namespace {

struct Fixture {
  std::vector<Trace> traces;
  CandidateSet candidates = CandidateSet::Full(1);
  std::vector<std::vector<double>> g;
  std::vector<double> whole;
  std::vector<double> token_taus;
  std::vector<double> onetime_taus;
  std::vector<double> whole_taus;
};

ScorerFactory Conf() {
  return [] { return std::make_unique<ConfidenceScorer>(ConfidenceKind::kNegLogProb); };
}

const Fixture& Get(std::size_t n) {
  static std::map<std::size_t, std::unique_ptr<Fixture>> cache;
  auto& slot = cache[n];
  if (slot) return *slot;
  slot = std::make_unique<Fixture>();
  verify::FuzzOptions opt;
  opt.length = 24;
  Rng rng(n);
  for (std::size_t i = 0; i < n; ++i) slot->traces.push_back(verify::FuzzTrace(rng, opt));
  slot->candidates = CandidateSet::Full(opt.length);
  std::vector<double> stay;
  for (const Trace& t : slot->traces) {
    slot->g.push_back(OnetimeConf(ConfidenceKind::kNegLogProb, t, slot->candidates));
    stay.push_back(slot->g.back().back());
    slot->whole.push_back(ChowScore(ChowRule{}, t));
  }
  StaticEnv env;
  slot->token_taus =
      ThresholdGrid(ObservedTokenScores(slot->traces, env, TokenEvalMode::kStatic, Conf()));
  // Every 16th token threshold keeps the grid a few thousand long.
  std::vector<double> thin;
  for (std::size_t i = 0; i < slot->token_taus.size(); i += 16) thin.push_back(slot->token_taus[i]);
  slot->token_taus = thin;
  slot->onetime_taus = ThresholdGrid(stay);
  slot->whole_taus = ThresholdGrid(slot->whole);
  return *slot;
}

template <bool kParallel>
void BM_CurveToken(benchmark::State& state) {
  const Fixture& f = Get(static_cast<std::size_t>(state.range(0)));
  StaticEnv env;
  for (auto _ : state) {
    DeferralCurve c = kParallel
        ? CurveToken("t", f.traces, env, TokenEvalMode::kStatic, Conf(), f.token_taus)
        : serial::CurveToken("t", f.traces, env, TokenEvalMode::kStatic, Conf(), f.token_taus);
    benchmark::DoNotOptimize(c.points.data());
  }
  state.SetItemsProcessed(state.iterations() * f.traces.size() * f.token_taus.size());
}

template <bool kParallel>
void BM_CurveOnetime(benchmark::State& state) {
  const Fixture& f = Get(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    DeferralCurve c = kParallel
        ? CurveOnetime("o", f.traces, f.candidates, f.g, f.onetime_taus)
        : serial::CurveOnetime("o", f.traces, f.candidates, f.g, f.onetime_taus);
    benchmark::DoNotOptimize(c.points.data());
  }
  state.SetItemsProcessed(state.iterations() * f.traces.size() * f.onetime_taus.size());
}

template <bool kParallel>
void BM_CurveWhole(benchmark::State& state) {
  const Fixture& f = Get(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    DeferralCurve c = kParallel ? CurveWhole("w", f.traces, f.whole, f.whole_taus)
                                : serial::CurveWhole("w", f.traces, f.whole, f.whole_taus);
    benchmark::DoNotOptimize(c.points.data());
  }
  state.SetItemsProcessed(state.iterations() * f.traces.size() * f.whole_taus.size());
}

}  // namespace

BENCHMARK(BM_CurveToken<false>)->Name("CurveToken/serial")->Arg(200)->Arg(400)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CurveToken<true>)->Name("CurveToken/omp")->Arg(200)->Arg(400)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_CurveOnetime<false>)->Name("CurveOnetime/serial")->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CurveOnetime<true>)->Name("CurveOnetime/omp")->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_CurveWhole<false>)->Name("CurveWhole/serial")->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CurveWhole<true>)->Name("CurveWhole/omp")->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
