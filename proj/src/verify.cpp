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

#include "seqdefer/verify.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "seqdefer/baselines.hpp"
#include "seqdefer/consistency.hpp"
#include "seqdefer/evaluation.hpp"
#include "seqdefer/rejectors.hpp"
#include "seqdefer/rollout.hpp"
#include "seqdefer/surrogates.hpp"
#include "seqdefer/tasks.hpp"
#include "seqdefer/trace_io.hpp"

namespace seqdefer::verify {
namespace {

constexpr std::size_t kMaxFailures = 8;

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double Seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

double Dyadic(Rng& rng, int max_units) {
  return static_cast<double>(rng.Below(max_units + 1)) / 64.0;
}

void Raise(double& slot, double value) { slot = std::max(slot, value); }

std::string Str(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// A random candidate set over a length-L sequence: each j in [1, L] kept
// with probability 1/2, L + 1 always.
CandidateSet RandomCandidates(Rng& rng, int length) {
  std::vector<int> pos;
  for (int j = 1; j <= length; ++j) {
    if (rng.Bernoulli(0.5)) pos.push_back(j);
  }
  if (pos.empty()) pos.push_back(static_cast<int>(rng.Below(length)) + 1);
  pos.push_back(length + 1);
  return CandidateSet(pos, length);
}

std::vector<double> RandomScores(Rng& rng, std::size_t n, double scale) {
  std::vector<double> g(n);
  for (double& v : g) v = scale * rng.Normal();
  return g;
}

// Fresh models have zero biases, which parks rectifiers whose inputs are
// all zero exactly on their kink. Random values move every unit off it.
void Jitter(ad::ParamSet& params, Rng& rng) {
  std::vector<double> flat = params.FlatValues();
  for (double& v : flat) v = rng.Uniform(-1.0, 1.0);
  params.SetFlatValues(flat);
}

}  // namespace

void SuiteResult::Check(bool ok, const std::string& what) {
  if (ok) return;
  passed = false;
  if (failures.size() < kMaxFailures) failures.push_back(what);
}

double SuiteResult::Metric(const std::string& key) const {
  const auto it = metrics.find(key);
  if (it == metrics.end()) Fail(ErrorKind::kParameter, "no metric " + key);
  return it->second;
}

TaskBounds FuzzBounds(const FuzzOptions& options) {
  TaskBounds b;
  b.label_kind = LabelKind::kDiscrete;
  b.vocab_size = 8;
  b.length = options.length;
  b.feature_dim = options.feature_dim;
  b.summary_dim = options.summary_dim;
  b.loss_max = 1.0;
  b.cost_min = options.price;
  b.cost_max = 1.0 + options.price;
  return b;
}

Trace FuzzTrace(Rng& rng, const FuzzOptions& options) {
  const int length = options.length;
  if (length < 1) Fail(ErrorKind::kParameter, "fuzz length must be positive");
  const CostSchedule schedule(options.price * length, length);
  Trace t;
  t.instance_id = "fuzz";
  t.x_summary.resize(options.summary_dim);
  for (double& v : t.x_summary) v = rng.Normal();
  t.inputs = {rng.Uniform()};
  for (int j = 1; j <= length; ++j) {
    StepRecord s;
    s.j = j;
    const auto target = static_cast<std::int64_t>(rng.Below(8));
    s.model_pred = static_cast<std::int64_t>(rng.Below(8));
    s.expert_pred = target;
    if (options.dyadic) {
      s.model_loss = Dyadic(rng, 64);
      s.expert_loss = Dyadic(rng, 32);
      s.conf_score = Dyadic(rng, 192);
    } else {
      s.model_loss = rng.Uniform();
      s.expert_loss = 0.5 * rng.Uniform();
      s.conf_score = 3.0 * rng.Uniform();
    }
    s.expert_cost = s.expert_loss + options.price;
    s.features.resize(options.feature_dim);
    for (double& v : s.features) v = rng.Normal();
    t.target.emplace_back(target);
    t.steps.push_back(std::move(s));
  }
  // suffix[j - 1] = sum of expert losses over tokens j..L
  std::vector<double> suffix(length + 1, 0.0);
  for (int j = length; j >= 1; --j) {
    suffix[j - 1] = suffix[j] + t.steps[j - 1].expert_loss;
  }
  double prefix = 0.0;
  for (int j = 1; j <= length + 1; ++j) {
    const double alpha = schedule.AlphaAt(j);
    t.candidates.push_back(j);
    t.prefix_losses.push_back(prefix);
    t.onetime_costs.push_back(suffix[j - 1] + alpha);
    t.onetime_alpha.push_back(alpha);
    t.system_losses.push_back(prefix + suffix[j - 1]);
    if (j <= length) prefix += t.steps[j - 1].model_loss;
  }
  t.expert_full_loss = t.system_losses.front();
  t.model_full_loss = t.system_losses.back();
  return t;
}

// ---------------------------------------------------------------------------

SuiteResult IdentitySuite(std::size_t traces, std::uint64_t seed) {
  const Timer timer;
  SuiteResult res;
  res.name = "identity";
  Rng rng(DeriveSeed(seed, 1));
  double worst = 0.0;
  double chow_worst = 0.0;
  std::size_t chow_mismatch = 0;
  std::size_t invalid = 0;
  for (std::size_t i = 0; i < traces; ++i) {
    FuzzOptions opts;
    opts.length = 1 + static_cast<int>(rng.Below(12));
    opts.price = rng.Uniform(0.01, 0.5);
    const Trace t = FuzzTrace(rng, opts);
    if (ValidateTrace(t, FuzzBounds(opts))) ++invalid;
    const CandidateSet cands = (i % 2 == 0)
                                   ? CandidateSet::Full(opts.length)
                                   : RandomCandidates(rng, opts.length);
    for (int j : cands.positions()) {
      Raise(worst, OnetimeIdentityResidual(t, cands, j));
    }
    const double sum = ChowScore({ChowKind::kSum}, t);
    const double mean = ChowScore({ChowKind::kMean}, t);
    if (mean != sum / opts.length) ++chow_mismatch;
    Raise(chow_worst, std::abs(opts.length * mean - sum));
  }
  const DeferralCurve line{"line", {{0.0, 0.0, 10.0}, {1.0, 5.0, 2.0}}};
  const double audc_error = std::abs(Audc(line) - 30.0);

  res.metrics["traces"] = static_cast<double>(traces);
  res.metrics["invalid_traces"] = static_cast<double>(invalid);
  res.metrics["max_identity_residual"] = worst;
  res.metrics["chow_mean_mismatches"] = static_cast<double>(chow_mismatch);
  res.metrics["chow_max_abs_diff"] = chow_worst;
  res.metrics["line_audc_error"] = audc_error;
  res.Check(invalid == 0, "fuzzed traces fail validation");
  res.Check(worst <= 1e-9, "identity residual " + Str(worst));
  res.Check(chow_mismatch == 0, "ChowMean differs from ChowSum / L");
  res.Check(audc_error <= 1e-9, "line AUDC error " + Str(audc_error));
  res.seconds = timer.Seconds();
  return res;
}

// ---------------------------------------------------------------------------

SuiteResult DominanceSuite(std::size_t samples, std::uint64_t seed) {
  const Timer timer;
  SuiteResult res;
  res.name = "dominance";
  for (PhiKind kind : {PhiKind::kLogistic, PhiKind::kSquare}) {
    Rng rng(DeriveSeed(seed, 10 + static_cast<int>(kind)));
    const double gamma = DominanceGamma(kind);
    const double reach = kind == PhiKind::kLogistic ? 5.0 : 1.0;
    std::size_t bad = 0;
    double lowest = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < samples; ++i) {
      const double l = rng.Uniform();
      const double c = rng.Uniform(0.01, 1.0);
      const double r = rng.Uniform(-reach, reach);
      const double m = DominanceMarginToken(kind, l, c, r, gamma);
      lowest = std::min(lowest, m);
      if (m < 0.0) ++bad;
    }
    const std::string tag = "token_" + ToString(kind);
    res.metrics[tag + "_violations"] = static_cast<double>(bad);
    res.metrics[tag + "_min_margin"] = lowest;
    res.Check(bad == 0, tag + " dominance violated");
  }
  for (PsiKind kind : {PsiKind::kCe, PsiKind::kMae}) {
    Rng rng(DeriveSeed(seed, 20 + static_cast<int>(kind)));
    const double gamma = DominanceGamma(kind);
    std::size_t plain_checked = 0;
    std::size_t plain_bad = 0;
    std::size_t excess_bad = 0;
    std::size_t drawn = 0;
    double plain_low = std::numeric_limits<double>::infinity();
    double excess_low = std::numeric_limits<double>::infinity();
    // Draw until `samples` traces meet the c_max precondition, with a cap
    // so a pathological generator cannot spin forever.
    const std::size_t cap = 50 * samples + 100;
    while (plain_checked < samples && drawn < cap) {
      ++drawn;
      FuzzOptions opts;
      opts.length = 1 + static_cast<int>(rng.Below(8));
      opts.price = rng.Uniform(0.01, 0.5);
      const Trace t = FuzzTrace(rng, opts);
      const CandidateSet cands = RandomCandidates(rng, opts.length);
      const std::vector<double> g = RandomScores(rng, cands.size(), 3.0);
      const double ex = ExcessDominanceMarginOnetime(kind, t, cands, g, gamma);
      excess_low = std::min(excess_low, ex);
      if (ex < 0.0) ++excess_bad;
      if (OnetimeDominancePrecondition(t, cands)) {
        ++plain_checked;
        const double m = DominanceMarginOnetime(kind, t, cands, g, gamma);
        plain_low = std::min(plain_low, m);
        if (m < 0.0) ++plain_bad;
      }
    }
    const std::string tag = "onetime_" + ToString(kind);
    res.metrics[tag + "_samples"] = static_cast<double>(drawn);
    res.metrics[tag + "_plain_checked"] = static_cast<double>(plain_checked);
    res.metrics[tag + "_plain_violations"] = static_cast<double>(plain_bad);
    res.metrics[tag + "_excess_violations"] = static_cast<double>(excess_bad);
    res.metrics[tag + "_plain_min_margin"] = plain_low;
    res.metrics[tag + "_excess_min_margin"] = excess_low;
    res.Check(plain_checked == samples, tag + " too few precondition samples");
    res.Check(plain_bad == 0, tag + " dominance violated");
    res.Check(excess_bad == 0, tag + " excess dominance violated");
  }
  res.seconds = timer.Seconds();
  return res;
}

// ---------------------------------------------------------------------------

SuiteResult GradientSuite(int batches, std::uint64_t seed) {
  const Timer timer;
  SuiteResult res;
  res.name = "gradient";
  constexpr double kEps = 1e-5;
  const StaticEnv env;
  struct Cell {
    std::string tag;
    double worst = 0.0;
  };
  std::vector<Cell> cells;
  auto cell = [&](const std::string& tag) -> double& {
    for (Cell& c : cells) {
      if (c.tag == tag) return c.worst;
    }
    cells.push_back({tag});
    return cells.back().worst;
  };
  for (int b = 0; b < batches; ++b) {
    Rng rng(DeriveSeed(seed, 100 + b));
    FuzzOptions opts;
    opts.length = 2 + static_cast<int>(rng.Below(5));
    opts.price = rng.Uniform(0.01, 0.3);
    std::vector<Trace> batch;
    for (int i = 0; i < 4; ++i) batch.push_back(FuzzTrace(rng, opts));
    for (bool recurrent : {true, false}) {
      TokenRejectorSpec spec;
      spec.feature_dim = opts.feature_dim;
      spec.hidden = {5, 4};
      spec.dropout_rate = 0.0;
      spec.recurrent = recurrent;
      spec.state_dim = 3;
      TokenRejectorModel model(spec, DeriveSeed(seed, 200 + b));
      Jitter(model.params(), rng);
      for (PhiKind phi : {PhiKind::kLogistic, PhiKind::kSquare}) {
        const double e = GradCheckToken(model, batch, env, phi, kEps);
        Raise(cell(std::string("token_") + (recurrent ? "rnn_" : "ff_") +
                   ToString(phi)),
              e);
      }
    }
    OnetimeSpec ospec;
    ospec.summary_dim = opts.summary_dim;
    ospec.hidden = {6};
    ospec.dropout_rate = 0.0;
    ospec.score_clamp = 5.0;
    OneTimeModel omodel(ospec, CandidateSet::Full(opts.length),
                        DeriveSeed(seed, 300 + b));
    Jitter(omodel.params(), rng);
    for (PsiKind psi : {PsiKind::kCe, PsiKind::kMae}) {
      Raise(cell("onetime_" + ToString(psi)),
            GradCheckOnetime(omodel, batch, psi, kEps));
    }
  }
  double worst = 0.0;
  for (const Cell& c : cells) {
    res.metrics[c.tag + "_max_rel_error"] = c.worst;
    Raise(worst, c.worst);
    res.Check(c.worst < 1e-4, c.tag + " relative error " + Str(c.worst));
  }
  res.metrics["max_rel_error"] = worst;
  res.metrics["batches"] = batches;
  res.seconds = timer.Seconds();
  return res;
}

// ---------------------------------------------------------------------------

SuiteResult ConsistencySuite(std::uint64_t seed) {
  const Timer timer;
  SuiteResult res;
  res.name = "consistency";
  const std::vector<std::size_t> ns = {100, 1000, 10000, 100000};
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 0; s < 5; ++s) seeds.push_back(DeriveSeed(seed, s));

  struct Case {
    std::string world;
    lab::LabSurrogate surrogate;
    std::string tag;
  };
  const std::vector<Case> cases = {
      {"token-a", {PhiKind::kLogistic, PsiKind::kCe}, "token-a/logistic"},
      {"token-a", {PhiKind::kSquare, PsiKind::kCe}, "token-a/square"},
      {"token-b", {PhiKind::kLogistic, PsiKind::kCe}, "token-b/logistic"},
      {"token-b", {PhiKind::kSquare, PsiKind::kCe}, "token-b/square"},
      {"onetime-a", {PhiKind::kLogistic, PsiKind::kCe}, "onetime-a/ce"},
      {"onetime-a", {PhiKind::kLogistic, PsiKind::kMae}, "onetime-a/mae"},
  };
  for (const char* name_c : {"token-a", "token-b", "onetime-a"}) {
    const std::string name = name_c;
    const lab::FiniteWorld w = lab::BuiltinWorld(name);
    const bool token = w.kind == lab::WorldKind::kToken;
    const double bayes = token ? lab::BayesTokenRisk(w).risk
                               : lab::BayesOnetimeRisk(w).risk;
    const double brute =
        token ? lab::EnumerateTokenRisk(w) : lab::EnumerateOnetimeRisk(w);
    res.metrics[name + "/bayes_risk"] = bayes;
    res.metrics[name + "/bayes_enum_diff"] = std::abs(bayes - brute);
    res.Check(bayes == brute, name + " Bayes risk differs from enumeration");
  }
  for (const Case& c : cases) {
    const lab::FiniteWorld w = lab::BuiltinWorld(c.world);
    const std::vector<lab::GapCell> grid =
        lab::GapSweep(w, c.surrogate, ns, seeds);
    std::vector<double> mean(ns.size(), 0.0);
    double worst_final = 0.0;
    std::size_t negative = 0;
    for (const lab::GapCell& cell : grid) {
      const std::size_t k =
          std::find(ns.begin(), ns.end(), cell.n) - ns.begin();
      mean[k] += cell.result.gap / seeds.size();
      if (cell.result.realized < cell.result.bayes) ++negative;
      if (cell.n == ns.back()) {
        Raise(worst_final, cell.result.gap / w.Scale());
      }
    }
    bool monotone = true;
    for (std::size_t k = 0; k < ns.size(); ++k) {
      res.metrics[c.tag + "/mean_gap_n" + std::to_string(ns[k])] = mean[k];
      if (k > 0 && mean[k] > mean[k - 1]) monotone = false;
    }
    res.metrics[c.tag + "/max_rel_gap_final"] = worst_final;
    res.Check(negative == 0, c.tag + " realized risk below Bayes");
    res.Check(worst_final < 0.01, c.tag + " gap at n = 1e5 " + Str(worst_final));
    res.Check(monotone, c.tag + " mean gap increases with n");

    const lab::BoundAudit audit = lab::AuditBound(w, c.surrogate, ns, seeds);
    res.metrics[c.tag + "/audit_slope"] = audit.slope;
    res.Check(audit.within, c.tag + " deviation slope " + Str(audit.slope));
  }
  {
    const lab::FiniteWorld flat = lab::BuiltinWorld("onetime-flat");
    const bool degenerate = lab::IsDegenerate(flat);
    const lab::GapResult gap =
        lab::ConsistencyGap(flat, {PhiKind::kLogistic, PsiKind::kCe}, 1000,
                            seeds.front());
    res.metrics["onetime-flat/degenerate"] = degenerate ? 1.0 : 0.0;
    res.metrics["onetime-flat/gap"] = gap.gap;
    res.Check(degenerate && gap.degenerate, "flat world not flagged degenerate");
    res.Check(gap.gap == 0.0, "flat world has a positive gap");
  }
  res.seconds = timer.Seconds();
  return res;
}

// ---------------------------------------------------------------------------

namespace {

// Best mean system loss at each total number of deferred tokens, by
// trying every per-token mask of every trace jointly. Traces share L.
std::vector<double> EnumerateTokenFrontier(std::span<const Trace> traces) {
  const int length = traces.front().length();
  const std::size_t bits = traces.size() * length;
  std::vector<double> best(bits + 1, std::numeric_limits<double>::infinity());
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << bits); ++mask) {
    double loss = 0.0;
    std::size_t bit = 0;
    for (const Trace& t : traces) {
      for (const StepRecord& s : t.steps) {
        loss += ((mask >> bit) & 1) ? s.expert_loss : s.model_loss;
        ++bit;
      }
    }
    double& slot = best[std::popcount(mask)];
    slot = std::min(slot, loss);
  }
  for (double& v : best) v /= static_cast<double>(traces.size());
  return best;
}

// 1 when `curve` has exactly one point per integer budget and each loss
// equals the enumerated frontier.
bool MatchesFrontier(const DeferralCurve& curve,
                     std::span<const double> frontier, std::size_t count) {
  if (curve.points.size() != frontier.size()) return false;
  for (std::size_t k = 0; k < frontier.size(); ++k) {
    const double x = static_cast<double>(k) / static_cast<double>(count);
    if (curve.points[k].deferred != x) return false;
    if (curve.points[k].loss != frontier[k]) return false;
  }
  return true;
}

}  // namespace

SuiteResult OracleSuite(std::size_t instances, std::size_t tsp_instances,
                        std::uint64_t seed) {
  const Timer timer;
  SuiteResult res;
  res.name = "oracle";
  Rng rng(DeriveSeed(seed, 400));
  std::size_t token_bad = 0;
  for (std::size_t i = 0; i < instances; ++i) {
    FuzzOptions opts;
    opts.length = 1 + static_cast<int>(rng.Below(10));
    opts.dyadic = true;
    const std::vector<Trace> one = {FuzzTrace(rng, opts)};
    if (!MatchesFrontier(OptimalCurveToken(one), EnumerateTokenFrontier(one),
                         1)) {
      ++token_bad;
    }
  }
  // Pools of two to four traces with 12 tokens at most, where the budget
  // can be split unevenly between instances.
  std::size_t pooled_bad = 0;
  const std::size_t pools = std::max<std::size_t>(1, instances / 5);
  for (std::size_t i = 0; i < pools; ++i) {
    const std::size_t count = 2 + rng.Below(3);
    FuzzOptions opts;
    opts.length = 1 + static_cast<int>(rng.Below(12 / count));
    opts.dyadic = true;
    std::vector<Trace> pool;
    for (std::size_t k = 0; k < count; ++k) pool.push_back(FuzzTrace(rng, opts));
    if (!MatchesFrontier(OptimalCurveToken(pool), EnumerateTokenFrontier(pool),
                         count)) {
      ++pooled_bad;
    }
  }
  res.metrics["token_instances"] = static_cast<double>(instances);
  res.metrics["token_mismatches"] = static_cast<double>(token_bad);
  res.metrics["pooled_sets"] = static_cast<double>(pools);
  res.metrics["pooled_mismatches"] = static_cast<double>(pooled_bad);
  res.Check(token_bad == 0, "optimal token curve differs from enumeration");
  res.Check(pooled_bad == 0, "pooled optimal curve differs from enumeration");

  // Tour lengths summed over different rotations of the same cycle can
  // differ in the last bits, hence the relative slack.
  constexpr double kSlack = 1e-9;
  std::size_t tsp_bad = 0;
  double worst_gap = 0.0;
  for (std::size_t i = 0; i < tsp_instances; ++i) {
    const std::size_t n = 5 + rng.Below(8);
    const TspInstance inst = GenTsp(1, n, DeriveSeed(seed, 500 + i)).front();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t k = n - 1; k > 1; --k) {
      std::swap(order[k], order[1 + rng.Below(k)]);
    }
    const std::size_t p = rng.Below(n);
    const std::vector<int> prefix(order.begin(), order.begin() + p);
    const double exact = TourLength(inst, HeldKarpComplete(inst, prefix));
    const double two = TourLength(inst, TspExpertComplete(inst, prefix, false));
    const double nn = TourLength(inst, NearestNeighborComplete(inst, prefix));
    const double tol = kSlack * std::max(1.0, nn);
    if (two < exact - tol || two > nn + tol) ++tsp_bad;
    Raise(worst_gap, (two - exact) / exact);
  }
  res.metrics["tsp_instances"] = static_cast<double>(tsp_instances);
  res.metrics["tsp_out_of_range"] = static_cast<double>(tsp_bad);
  res.metrics["tsp_max_rel_excess"] = worst_gap;
  res.Check(tsp_bad == 0, "2-opt completion outside [exact, NN]");
  res.seconds = timer.Seconds();
  return res;
}

// ---------------------------------------------------------------------------

SuiteResult RandomLawSuite(std::size_t draws, std::uint64_t seed) {
  const Timer timer;
  SuiteResult res;
  res.name = "random_law";
  Rng rng(DeriveSeed(seed, 600));
  double worst = 0.0;
  for (int length : {4, 8, 12}) {
    FuzzOptions opts;
    opts.length = length;
    std::vector<Trace> traces;
    for (int i = 0; i < 100; ++i) traces.push_back(FuzzTrace(rng, opts));
    const std::vector<double> probs = ProbabilityGrid(10);
    const double mc =
        Audc(RandomCurveToken(traces, DeriveSeed(seed, length), probs, draws));
    const double analytic = Audc(AnalyticRandomCurve(traces));
    const double rel = std::abs(mc - analytic) / analytic;
    res.metrics["rel_error_L" + std::to_string(length)] = rel;
    Raise(worst, rel);
  }
  res.metrics["draws"] = static_cast<double>(draws);
  res.metrics["max_rel_error"] = worst;
  res.Check(worst <= 0.02, "random AUDC off the line by " + Str(worst));
  res.seconds = timer.Seconds();
  return res;
}

// ---------------------------------------------------------------------------

SuiteResult PropertySuite(std::size_t samples, std::uint64_t seed) {
  const Timer timer;
  SuiteResult res;
  res.name = "property";
  Rng rng(DeriveSeed(seed, 700));

  for (PhiKind kind : {PhiKind::kLogistic, PhiKind::kSquare}) {
    std::size_t bad = 0;
    for (std::size_t i = 0; i < samples; ++i) {
      const double l = rng.Uniform();
      const double c = rng.Uniform();
      const double a = rng.Uniform(-6.0, 6.0);
      const double b = rng.Uniform(-6.0, 6.0);
      const double lam = rng.Uniform();
      const double mid = TokenStepSurrogate(kind, l, c, lam * a + (1 - lam) * b);
      const double chord = lam * TokenStepSurrogate(kind, l, c, a) +
                           (1 - lam) * TokenStepSurrogate(kind, l, c, b);
      if (mid > chord + 1e-9) ++bad;
    }
    res.metrics["convexity_violations_" + ToString(kind)] = bad;
    res.Check(bad == 0, "token surrogate not convex for " + ToString(kind));
  }
  // mae is not convex in g; its violations are reported, not failed.
  for (PsiKind kind : {PsiKind::kCe, PsiKind::kMae}) {
    std::size_t bad = 0;
    for (std::size_t i = 0; i < samples; ++i) {
      const std::size_t n = 2 + rng.Below(5);
      std::vector<double> w(n);
      for (double& v : w) v = rng.Uniform();
      const std::vector<double> a = RandomScores(rng, n, 3.0);
      const std::vector<double> b = RandomScores(rng, n, 3.0);
      const double lam = rng.Uniform();
      std::vector<double> m(n);
      for (std::size_t k = 0; k < n; ++k) m[k] = lam * a[k] + (1 - lam) * b[k];
      const double chord =
          lam * WeightedPsi(kind, w, a) + (1 - lam) * WeightedPsi(kind, w, b);
      if (WeightedPsi(kind, w, m) > chord + 1e-9) ++bad;
    }
    res.metrics["convexity_violations_" + ToString(kind)] = bad;
    if (kind == PsiKind::kCe) res.Check(bad == 0, "ce surrogate not convex");
  }

  // Scale equivariance and the sign of the tabular minimizer.
  std::size_t scale_bad = 0;
  std::size_t sign_bad = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double l = rng.Uniform(0.01, 1.0);
    const double c = rng.Uniform(0.01, 1.0);
    const double r = rng.Uniform(-4.0, 4.0);
    const double k = rng.Uniform(0.1, 10.0);
    for (PhiKind kind : {PhiKind::kLogistic, PhiKind::kSquare}) {
      const double lhs = k * TokenStepSurrogate(kind, l, c, r);
      const double rhs = TokenStepSurrogate(kind, k * l, k * c, r);
      if (std::abs(lhs - rhs) > 1e-12 * std::max(1.0, std::abs(lhs))) {
        ++scale_bad;
      }
      if (i % 50 == 0 && std::abs(l - c) > 1e-3) {
        const bool s1 = lab::TabularTokenScore(kind, l, c) >= 0.0;
        const bool s2 = lab::TabularTokenScore(kind, k * l, k * c) >= 0.0;
        if (s1 != s2 || s1 != (c <= l)) ++sign_bad;
      }
    }
    if (i % 50 == 0) {
      std::vector<double> w(3 + rng.Below(3));
      for (double& v : w) v = rng.Uniform();
      std::vector<double> kw(w);
      for (double& v : kw) v *= k;
      for (PsiKind kind : {PsiKind::kCe, PsiKind::kMae}) {
        const std::vector<double> g1 = lab::TabularOnetimeScores(kind, w);
        const std::vector<double> g2 = lab::TabularOnetimeScores(kind, kw);
        if (ArgmaxPreferLast(g1) != ArgmaxPreferLast(g2)) ++sign_bad;
        const std::vector<double> g = RandomScores(rng, w.size(), 2.0);
        const double a = k * WeightedPsi(kind, w, g);
        const double b = WeightedPsi(kind, kw, g);
        if (std::abs(a - b) > 1e-12 * std::max(1.0, std::abs(a))) ++scale_bad;
      }
    }
  }
  res.metrics["scale_violations"] = static_cast<double>(scale_bad);
  res.metrics["argmin_changes"] = static_cast<double>(sign_bad);
  res.Check(scale_bad == 0, "surrogate not scale equivariant");
  res.Check(sign_bad == 0, "minimizer moves under cost scaling");

  // Off-argmax floors: ln 2 for ce, 1/2 for mae.
  std::size_t floor_bad = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    const std::size_t n = 2 + rng.Below(6);
    const std::vector<double> g = RandomScores(rng, n, 4.0);
    const std::size_t top = ArgmaxPreferLast(g);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == top) continue;
      if (Psi(PsiKind::kCe, g, j) < std::log(2.0) - 1e-12) ++floor_bad;
      if (Psi(PsiKind::kMae, g, j) < 0.5 - 1e-12) ++floor_bad;
    }
  }
  res.metrics["psi_floor_violations"] = static_cast<double>(floor_bad);
  res.Check(floor_bad == 0, "psi below its off-argmax floor");

  // Cost ladder: linear, nonincreasing, zero at L + 1, sums to
  // alpha_1 (L + 1) / 2 over j = 1..L.
  double ladder_err = 0.0;
  for (int length = 1; length <= 60; ++length) {
    const double alpha1 = rng.Uniform(0.0, 5.0);
    const CostSchedule s(alpha1, length);
    double sum = 0.0;
    for (int j = 1; j <= length; ++j) {
      sum += s.AlphaAt(j);
      if (s.AlphaAt(j + 1) > s.AlphaAt(j)) ladder_err = 1.0;
    }
    Raise(ladder_err, std::abs(s.AlphaAt(length + 1)));
    Raise(ladder_err, std::abs(sum - alpha1 * (length + 1) / 2.0));
  }
  res.metrics["ladder_error"] = ladder_err;
  res.Check(ladder_err <= 1e-12, "cost ladder off by " + Str(ladder_err));

  // Small generated datasets obey their declared bounds, and building one
  // twice gives identical traces.
  std::size_t invalid = 0;
  std::string first_violation;
  auto check_data = [&](const TaskDataset& data) {
    for (const auto* split : {&data.train, &data.test}) {
      for (const Trace& t : *split) {
        if (auto v = ValidateTrace(t, data.bounds)) {
          if (first_violation.empty()) {
            first_violation = ToString(data.kind) + " " + v->path + ": " +
                              v->message;
          }
          ++invalid;
        }
      }
    }
  };
  TspConfig tsp;
  tsp.n = 10;
  tsp.train = 12;
  tsp.test = 4;
  tsp.seed = seed;
  check_data(BuildTspDataset(tsp));
  tsp.exact = true;
  check_data(BuildTspDataset(tsp));
  MwpConfig mwp;
  mwp.train = 60;
  mwp.test = 10;
  mwp.seed = seed;
  const TaskDataset m1 = BuildMwpDataset(mwp);
  check_data(m1);
  TextConfig text;
  text.train = 60;
  text.test = 10;
  text.seed = seed;
  check_data(BuildTextDataset(text));
  res.metrics["invalid_task_traces"] = static_cast<double>(invalid);
  res.Check(invalid == 0, "task trace invalid: " + first_violation);
  const TaskDataset m2 = BuildMwpDataset(mwp);
  res.Check(TracesToNdjson(m1.test) == TracesToNdjson(m2.test),
            "dataset build not deterministic");
  res.seconds = timer.Seconds();
  return res;
}

// ---------------------------------------------------------------------------

std::vector<SuiteResult> RunAll(std::size_t samples, std::uint64_t seed) {
  std::vector<SuiteResult> out;
  out.push_back(IdentitySuite(samples, seed));
  out.push_back(DominanceSuite(samples, seed));
  out.push_back(GradientSuite(20, seed));
  out.push_back(ConsistencySuite(seed));
  out.push_back(OracleSuite(100, 200, seed));
  out.push_back(RandomLawSuite(samples, seed));
  out.push_back(PropertySuite(samples, seed));
  return out;
}

}  // namespace seqdefer::verify
