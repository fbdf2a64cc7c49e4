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

#include "seqdefer/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <iomanip>
#include <map>
#include <sstream>

namespace seqdefer {

namespace {

// Runs fn(i) for i in [0, n) across threads; the first exception thrown
// by any iteration is rethrown on the calling thread.
template <typename Fn>
void ParallelFor(std::size_t n, Fn fn) {
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      fn(i);
    } catch (...) {
#pragma omp critical(seqdefer_parallel_for)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

bool Wants(const MethodOptions& options, TaskKind kind, const std::string& m) {
  if (options.methods.empty()) {
    const auto all = ApplicableMethods(kind);
    return std::find(all.begin(), all.end(), m) != all.end();
  }
  return std::find(options.methods.begin(), options.methods.end(), m) !=
         options.methods.end();
}

std::vector<double> LastColumn(const std::vector<std::vector<double>>& g) {
  std::vector<double> s;
  s.reserve(g.size());
  for (const auto& row : g) s.push_back(row.back());
  return s;
}

std::string GroupLabel(double value) {
  std::ostringstream os;
  os << value;
  return os.str();
}

std::string CsvRate(const std::optional<double>& rate) {
  return rate ? FormatDouble(*rate) : "";
}

}  // namespace

TaskDataset BuildDataset(const TaskSetup& setup, std::uint64_t seed) {
  switch (setup.kind) {
    case TaskKind::kTsp: {
      TspConfig c = setup.tsp;
      c.seed = seed;
      return BuildTspDataset(c);
    }
    case TaskKind::kMwp: {
      MwpConfig c = setup.mwp;
      c.seed = seed;
      return BuildMwpDataset(c);
    }
    case TaskKind::kText: {
      TextConfig c = setup.text;
      c.seed = seed;
      return BuildTextDataset(c);
    }
  }
  Fail(ErrorKind::kConfig, "unknown task");
}

int TaskLength(const TaskSetup& setup) {
  switch (setup.kind) {
    case TaskKind::kTsp: return static_cast<int>(setup.tsp.n);
    case TaskKind::kMwp: return kMwpHorizon;
    case TaskKind::kText: return setup.text.length;
  }
  return 0;
}

std::vector<std::string> ApplicableMethods(TaskKind kind) {
  std::vector<std::string> m;
  if (kind != TaskKind::kTsp) {
    m.insert(m.end(), {kTokenwiseModel, kTokenwiseScore});
    if (kind == TaskKind::kText) m.push_back(kTokenwiseEntropy);
  }
  m.insert(m.end(), {kOneTimeModel, kOneTimeScore});
  if (kind != TaskKind::kMwp) m.push_back(kOneTimeEntropy);
  m.insert(m.end(), {kChowSum, kChowMean, kChowQuantile, kWholeModelEmbed,
                     kRandom, kOptimal});
  return m;
}

void CheckMethod(TaskKind kind, const std::string& method) {
  const auto all = ApplicableMethods(kind);
  if (std::find(all.begin(), all.end(), method) == all.end()) {
    Fail(ErrorKind::kConfig,
         "method " + method + " does not apply to task " + ToString(kind));
  }
}

bool IsWholeMethod(const std::string& m) {
  return m == kChowSum || m == kChowMean || m == kChowQuantile ||
         m == kWholeModelEmbed;
}

ConfidenceKind DefaultConfidence(TaskKind kind) {
  return kind == TaskKind::kMwp ? ConfidenceKind::kMcVariance
                                : ConfidenceKind::kNegLogProb;
}

CandidateSet Candidates(const MethodOptions& options, int length) {
  if (options.candidate_size == 0) return CandidateSet::Full(length);
  return CandidateSet::UniformGrid(length, options.candidate_size);
}

TrainedModels TrainModels(const TaskDataset& data, const MethodOptions& options,
                          std::uint64_t seed) {
  TrainedModels out;
  const int length = data.bounds.length;
  if (Wants(options, data.kind, kTokenwiseModel)) {
    CheckMethod(data.kind, kTokenwiseModel);
    const auto env = MakeEnv(data);
    TokenRejectorSpec spec = options.token_spec;
    spec.feature_dim = data.bounds.feature_dim;
    TrainConfig tc = options.token;
    tc.seed = seed;
    auto r = TrainTokenRejector(data.train, *env, spec, tc);
    out.token.emplace(std::move(r.model));
    out.token_log = std::move(r.log);
  }
  if (Wants(options, data.kind, kOneTimeModel)) {
    OnetimeSpec spec = options.onetime_spec;
    spec.summary_dim = data.bounds.summary_dim;
    TrainConfig tc = options.onetime;
    tc.seed = seed;
    auto r = TrainOnetimeRejector(data.train, Candidates(options, length), spec, tc);
    out.onetime.emplace(std::move(r.model));
    out.onetime_log = std::move(r.log);
  }
  if (Wants(options, data.kind, kWholeModelEmbed)) {
    TrainConfig tc = options.whole;
    tc.seed = seed;
    auto r = TrainWholeEmbed(data.train, tc);
    out.whole = std::move(r.model);
    out.whole_log = std::move(r.log);
  }
  return out;
}

const MethodResult* Comparison::Find(const std::string& method) const {
  for (const MethodResult& m : methods) {
    if (m.method == method) return &m;
  }
  return nullptr;
}

std::vector<std::vector<double>> LogSoftmaxRows(
    std::vector<std::vector<double>> g) {
  for (auto& row : g) {
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    for (double& v : row) v -= lse;
  }
  return g;
}

Comparison EvaluateMethods(const TaskDataset& data, const TrainedModels& models,
                           const MethodOptions& options, std::uint64_t seed) {
  const auto& test = data.test;
  if (test.empty()) Fail(ErrorKind::kEmptyInput, "no test traces");
  const int length = data.bounds.length;
  const CandidateSet cands = Candidates(options, length);
  const ConfidenceKind conf =
      options.confidence.value_or(DefaultConfidence(data.kind));
  const auto env = MakeEnv(data);

  Comparison out;
  out.seed = seed;
  out.random_audc = Audc(AnalyticRandomCurve(test));
  auto add = [&](DeferralCurve curve) {
    MethodResult r;
    r.method = curve.method;
    r.audc = Audc(curve);
    r.pct = PctImprovement(r.audc, out.random_audc);
    r.curve = std::move(curve);
    out.methods.push_back(std::move(r));
  };
  auto token_curve = [&](const std::string& name, const ScorerFactory& f) {
    const auto th =
        ThresholdGrid(ObservedTokenScores(test, *env, options.eval_mode, f));
    add(CurveToken(name, test, *env, options.eval_mode, f, th));
  };
  auto onetime_curve = [&](const std::string& name,
                           const std::vector<std::vector<double>>& g) {
    add(CurveOnetime(name, test, cands, g, ThresholdGrid(LastColumn(g))));
  };
  auto whole_curve = [&](const std::string& name, const std::vector<double>& s) {
    add(CurveWhole(name, test, s, ThresholdGrid(s)));
  };
  auto need = [](bool present, const char* method) {
    if (!present) {
      Fail(ErrorKind::kCapability,
           std::string("no trained model for ") + method);
    }
  };

  const std::vector<std::string> order = options.methods.empty()
                                             ? ApplicableMethods(data.kind)
                                             : options.methods;
  for (const std::string& m : order) {
    CheckMethod(data.kind, m);
    if (m == kTokenwiseModel) {
      need(models.token.has_value(), kTokenwiseModel);
      const TokenRejectorModel& model = *models.token;
      token_curve(m, [&model] { return std::make_unique<ModelScorer>(model); });
    } else if (m == kTokenwiseScore || m == kTokenwiseEntropy) {
      const ConfidenceKind k = m == kTokenwiseScore ? conf : ConfidenceKind::kEntropy;
      token_curve(m, [k] { return std::make_unique<ConfidenceScorer>(k); });
    } else if (m == kOneTimeModel) {
      need(models.onetime.has_value(), kOneTimeModel);
      if (!(models.onetime->candidates() == cands)) {
        Fail(ErrorKind::kConfig,
             "one-time model was trained on a different candidate set");
      }
      std::vector<std::vector<double>> g;
      for (const Trace& t : test) g.push_back(models.onetime->Scores(t));
      onetime_curve(m, LogSoftmaxRows(std::move(g)));
    } else if (m == kOneTimeScore || m == kOneTimeEntropy) {
      const ConfidenceKind k = m == kOneTimeScore ? conf : ConfidenceKind::kEntropy;
      std::vector<std::vector<double>> g;
      for (const Trace& t : test) g.push_back(OnetimeConf(k, t, cands));
      onetime_curve(m, g);
    } else if (m == kChowSum || m == kChowMean || m == kChowQuantile) {
      ChowRule rule{m == kChowSum    ? ChowKind::kSum
                    : m == kChowMean ? ChowKind::kMean
                                     : ChowKind::kQuantile,
                    options.chow_alpha};
      std::vector<double> s;
      for (const Trace& t : test) s.push_back(ChowScore(rule, t));
      whole_curve(m, s);
    } else if (m == kWholeModelEmbed) {
      need(models.whole.has_value(), kWholeModelEmbed);
      std::vector<double> s;
      for (const Trace& t : test) s.push_back(models.whole->Score(t));
      whole_curve(m, s);
    } else if (m == kRandom) {
      DeferralCurve c = AnalyticRandomCurve(test);
      c.method = kRandom;
      add(std::move(c));
    } else if (m == kOptimal) {
      DeferralCurve c = data.kind == TaskKind::kTsp
                            ? OptimalCurveOnetime(test, cands)
                            : OptimalCurveToken(test);
      c.method = kOptimal;
      add(std::move(c));
    }
  }
  return out;
}

Comparison CompareMethods(const TaskDataset& data, const MethodOptions& options,
                          std::uint64_t seed) {
  return EvaluateMethods(data, TrainModels(data, options, seed), options, seed);
}

double TokenDeferralRate(const TokenRejectorModel& model,
                         std::span<const Trace> traces, const RolloutEnv& env,
                         TokenEvalMode mode) {
  if (traces.empty()) Fail(ErrorKind::kEmptyInput, "no traces");
  std::vector<double> rate(traces.size());
  for (std::size_t i = 0; i < traces.size(); ++i) {
    ModelScorer scorer(model);
    const PolicyOutcome o = RunTokenPolicy(traces[i], env, mode, scorer, 0.0);
    rate[i] = o.deferred / traces[i].length();
  }
  return PairwiseSum(rate) / static_cast<double>(rate.size());
}

double OnetimeDeferralRate(const OneTimeModel& model,
                           std::span<const Trace> traces) {
  if (traces.empty()) Fail(ErrorKind::kEmptyInput, "no traces");
  std::vector<double> rate(traces.size());
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const int length = traces[i].length();
    rate[i] = static_cast<double>(length - model.Decide(traces[i]) + 1) / length;
  }
  return PairwiseSum(rate) / static_cast<double>(rate.size());
}

// ---------------------------------------------------------------------------

double SampleStd(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::string FormatMeanStd(double mean, double std, int precision) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << mean << " (" << std
     << ")";
  return os.str();
}

std::vector<SweepRow> Aggregate(std::span<const SweepCell> cells) {
  std::vector<std::pair<std::string, std::string>> keys;
  std::map<std::pair<std::string, std::string>, std::vector<const SweepCell*>>
      groups;
  for (const SweepCell& c : cells) {
    auto key = std::make_pair(c.group, c.method);
    if (!groups.count(key)) keys.push_back(key);
    groups[key].push_back(&c);
  }
  std::vector<SweepRow> rows;
  for (const auto& key : keys) {
    const auto& g = groups[key];
    std::vector<double> audc, pct, rate;
    for (const SweepCell* c : g) {
      audc.push_back(c->audc);
      pct.push_back(c->pct);
      if (c->deferral_rate) rate.push_back(*c->deferral_rate);
    }
    SweepRow r;
    r.group = key.first;
    r.method = key.second;
    r.runs = g.size();
    r.audc_mean = PairwiseSum(audc) / static_cast<double>(g.size());
    r.pct_mean = PairwiseSum(pct) / static_cast<double>(g.size());
    r.audc_std = SampleStd(audc);
    r.pct_std = SampleStd(pct);
    if (rate.size() == g.size()) {
      r.rate_mean = PairwiseSum(rate) / static_cast<double>(rate.size());
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string SweepToCsv(std::span<const SweepRow> rows) {
  std::ostringstream os;
  os << "group,method,runs,audc_mean,audc_std,pct_mean,pct_std,audc,pct,"
        "deferral_rate\n";
  for (const SweepRow& r : rows) {
    os << r.group << ',' << r.method << ',' << r.runs << ','
       << FormatDouble(r.audc_mean) << ',' << FormatDouble(r.audc_std) << ','
       << FormatDouble(r.pct_mean) << ',' << FormatDouble(r.pct_std) << ','
       << FormatMeanStd(r.audc_mean, r.audc_std) << ','
       << FormatMeanStd(r.pct_mean, r.pct_std) << ',' << CsvRate(r.rate_mean)
       << '\n';
  }
  return os.str();
}

std::string SweepCellsToCsv(std::span<const SweepCell> cells) {
  std::ostringstream os;
  os << "group,method,seed,audc,pct,deferral_rate\n";
  for (const SweepCell& c : cells) {
    os << c.group << ',' << c.method << ',' << c.seed << ','
       << FormatDouble(c.audc) << ',' << FormatDouble(c.pct) << ','
       << CsvRate(c.deferral_rate) << '\n';
  }
  return os.str();
}

std::vector<SweepCell> MethodSweep(const TaskSetup& setup,
                                   const MethodOptions& options,
                                   std::span<const std::uint64_t> seeds) {
  std::vector<Comparison> runs(seeds.size());
  ParallelFor(seeds.size(), [&](std::size_t i) {
    runs[i] = CompareMethods(BuildDataset(setup, seeds[i]), options, seeds[i]);
  });
  std::vector<SweepCell> cells;
  for (const Comparison& run : runs) {
    for (const MethodResult& m : run.methods) {
      cells.push_back({"all", m.method, run.seed, m.audc, m.pct, std::nullopt});
    }
  }
  return cells;
}

std::vector<SweepCell> JSweep(const TaskSetup& setup,
                              std::span<const int> sizes,
                              const MethodOptions& options,
                              std::span<const std::uint64_t> seeds) {
  const int length = TaskLength(setup);
  for (int s : sizes) {
    if (s < 2) Fail(ErrorKind::kParameter, "candidate set size must be >= 2");
    if (s > length + 1) {
      Fail(ErrorKind::kParameter, "candidate set size exceeds L + 1");
    }
  }
  std::vector<TaskDataset> data(seeds.size());
  ParallelFor(seeds.size(),
              [&](std::size_t i) { data[i] = BuildDataset(setup, seeds[i]); });
  const std::size_t n = sizes.size() * seeds.size();
  std::vector<Comparison> runs(n);
  ParallelFor(n, [&](std::size_t c) {
    MethodOptions o = options;
    o.candidate_size = sizes[c / seeds.size()];
    o.methods = {kOneTimeModel, kOneTimeScore};
    runs[c] = CompareMethods(data[c % seeds.size()], o, seeds[c % seeds.size()]);
  });
  std::vector<SweepCell> cells;
  for (std::size_t c = 0; c < n; ++c) {
    for (const MethodResult& m : runs[c].methods) {
      cells.push_back({std::to_string(sizes[c / seeds.size()]), m.method,
                       runs[c].seed, m.audc, m.pct, std::nullopt});
    }
  }
  return cells;
}

std::vector<SweepCell> AlphaSweep(const TaskSetup& setup,
                                  std::span<const double> alphas,
                                  const MethodOptions& options,
                                  std::span<const std::uint64_t> seeds) {
  for (double a : alphas) {
    if (!(a >= 0.0)) Fail(ErrorKind::kParameter, "alpha_1 must be >= 0");
  }
  std::vector<TaskDataset> base(seeds.size());
  ParallelFor(seeds.size(),
              [&](std::size_t i) { base[i] = BuildDataset(setup, seeds[i]); });
  const std::size_t n = alphas.size() * seeds.size();
  std::vector<std::vector<SweepCell>> per(n);
  ParallelFor(n, [&](std::size_t c) {
    const double alpha = alphas[c / seeds.size()];
    const std::uint64_t seed = seeds[c % seeds.size()];
    TaskDataset data = base[c % seeds.size()];
    ApplySchedule(data, alpha);
    MethodOptions o = options;
    o.methods.clear();
    if (setup.kind != TaskKind::kTsp) o.methods.push_back(kTokenwiseModel);
    o.methods.push_back(kOneTimeModel);
    const TrainedModels models = TrainModels(data, o, seed);
    const Comparison cmp = EvaluateMethods(data, models, o, seed);
    const auto env = MakeEnv(data);
    for (const MethodResult& m : cmp.methods) {
      const double rate =
          m.method == kTokenwiseModel
              ? TokenDeferralRate(*models.token, data.test, *env, o.eval_mode)
              : OnetimeDeferralRate(*models.onetime, data.test);
      per[c].push_back({GroupLabel(alpha), m.method, seed, m.audc, m.pct, rate});
    }
  });
  std::vector<SweepCell> cells;
  for (const auto& p : per) cells.insert(cells.end(), p.begin(), p.end());
  return cells;
}

std::vector<SweepCell> RolloutAblation(const TaskSetup& setup,
                                       const MethodOptions& options,
                                       std::span<const std::uint64_t> seeds) {
  if (setup.kind == TaskKind::kTsp) {
    Fail(ErrorKind::kCapability, "TSP has no token-level rejector");
  }
  const std::vector<RolloutMode> modes = {RolloutMode::TeacherForced(),
                                          RolloutMode::FreeRunning(),
                                          RolloutMode::Scheduled()};
  std::vector<TaskDataset> data(seeds.size());
  ParallelFor(seeds.size(),
              [&](std::size_t i) { data[i] = BuildDataset(setup, seeds[i]); });
  const std::size_t n = modes.size() * seeds.size();
  std::vector<Comparison> runs(n);
  ParallelFor(n, [&](std::size_t c) {
    MethodOptions o = options;
    o.token.rollout = modes[c / seeds.size()];
    o.methods = {kTokenwiseModel};
    runs[c] = CompareMethods(data[c % seeds.size()], o, seeds[c % seeds.size()]);
  });
  std::vector<SweepCell> cells;
  for (std::size_t c = 0; c < n; ++c) {
    const MethodResult& m = runs[c].methods.front();
    cells.push_back({ToString(modes[c / seeds.size()].kind), m.method,
                     runs[c].seed, m.audc, m.pct, std::nullopt});
  }
  return cells;
}

}  // namespace seqdefer
