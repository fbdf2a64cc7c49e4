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

#include "seqdefer/consistency.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "seqdefer/rng.hpp"

namespace seqdefer::lab {

namespace {

using nlohmann::json;

std::size_t Categorical(std::span<const double> probs, Rng& rng) {
  const double u = rng.Uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.size() - 1;
}

void CheckDistribution(std::span<const double> probs, const std::string& where) {
  if (probs.empty()) Fail(ErrorKind::kData, where + ": no outcomes");
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) Fail(ErrorKind::kData, where + ": negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    Fail(ErrorKind::kData, where + ": probabilities sum to " +
                               std::to_string(total) + ", not 1");
  }
}

std::vector<double> Probs(std::span<const TokenOutcome> outs) {
  std::vector<double> p;
  for (const auto& o : outs) p.push_back(o.prob);
  return p;
}

std::vector<double> Probs(std::span<const OnetimeOutcome> outs) {
  std::vector<double> p;
  for (const auto& o : outs) p.push_back(o.prob);
  return p;
}

double CMaxOf(std::span<const double> r) {
  return *std::max_element(r.begin(), r.end());
}

void CheckKind(const FiniteWorld& w, WorldKind kind) {
  if (w.kind != kind) {
    Fail(ErrorKind::kParameter, "world " + w.name + " has the wrong kind");
  }
}

std::vector<std::vector<TokenOutcome>> Cells(
    std::initializer_list<std::initializer_list<TokenOutcome>> rows) {
  std::vector<std::vector<TokenOutcome>> out;
  for (const auto& r : rows) out.emplace_back(r);
  return out;
}

}  // namespace

void ValidateWorld(const FiniteWorld& w) {
  if (w.length < 1) Fail(ErrorKind::kData, "world length must be >= 1");
  if (!(w.cost_min > 0.0) || w.cost_max < w.cost_min) {
    Fail(ErrorKind::kData, "world cost bounds need 0 < c-bar <= C-bar");
  }
  CheckDistribution(w.context_probs, "contexts");
  const std::size_t k_count = w.contexts();
  if (w.kind == WorldKind::kToken) {
    if (w.token.size() != k_count) {
      Fail(ErrorKind::kData, "token table does not match the context count");
    }
    for (std::size_t k = 0; k < k_count; ++k) {
      if (w.token[k].size() != static_cast<std::size_t>(w.length)) {
        Fail(ErrorKind::kData, "context " + std::to_string(k) +
                                   ": step count differs from the length");
      }
      for (std::size_t j = 0; j < w.token[k].size(); ++j) {
        const std::string where =
            "cell (" + std::to_string(k) + ", " + std::to_string(j + 1) + ")";
        CheckDistribution(Probs(w.token[k][j]), where);
        for (const TokenOutcome& o : w.token[k][j]) {
          if (o.l < 0.0 || o.l > w.loss_max) {
            Fail(ErrorKind::kData, where + ": loss outside [0, l-bar]");
          }
          if (o.c < w.cost_min || o.c > w.cost_max) {
            Fail(ErrorKind::kData, where + ": cost outside [c-bar, C-bar]");
          }
        }
      }
    }
    return;
  }
  CandidateSet cands(w.candidates, w.length);  // throws on a bad set
  if (w.onetime.size() != k_count) {
    Fail(ErrorKind::kData, "one-time table does not match the context count");
  }
  for (std::size_t k = 0; k < k_count; ++k) {
    const std::string where = "context " + std::to_string(k);
    CheckDistribution(Probs(w.onetime[k]), where);
    for (const OnetimeOutcome& o : w.onetime[k]) {
      if (o.realized.size() != cands.size()) {
        Fail(ErrorKind::kData, where + ": realized vector length differs from |J|");
      }
      for (double r : o.realized) {
        if (!std::isfinite(r) || r < 0.0 || r > w.loss_max + w.cost_max) {
          Fail(ErrorKind::kData, where + ": realized loss out of bounds");
        }
      }
    }
  }
}

bool IsDegenerate(const FiniteWorld& w) {
  if (w.kind == WorldKind::kToken) {
    for (const auto& row : w.token) {
      for (const auto& cell : row) {
        for (const TokenOutcome& o : cell) {
          if (std::abs(o.l - o.c) > w.delta) return false;
        }
      }
    }
    return true;
  }
  for (const auto& outs : w.onetime) {
    for (const OnetimeOutcome& o : outs) {
      const auto [lo, hi] = std::minmax_element(o.realized.begin(), o.realized.end());
      if (*hi - *lo > w.delta) return false;
    }
  }
  return true;
}

std::vector<std::string> BuiltinWorldNames() {
  return {"token-a", "token-b", "onetime-a", "onetime-flat"};
}

FiniteWorld BuiltinWorld(const std::string& name) {
  FiniteWorld w;
  w.name = name;
  w.loss_max = 1.0;
  w.cost_min = 0.1;
  w.cost_max = 1.0;
  if (name == "token-a") {
    w.kind = WorldKind::kToken;
    w.length = 3;
    w.context_probs = {0.5, 0.3, 0.2};
    w.token = {
        Cells({{{0.5, 0.9, 0.3}, {0.5, 0.5, 0.3}},
               {{0.5, 0.2, 0.4}, {0.5, 0.0, 0.6}},
               {{0.5, 0.6, 0.5}, {0.5, 0.4, 0.35}}}),
        Cells({{{0.5, 0.3, 0.2}, {0.5, 0.1, 0.3}},
               {{0.5, 1.0, 0.5}, {0.5, 0.6, 0.7}},
               {{0.5, 0.0, 0.1}, {0.5, 0.2, 0.1}}}),  // E[l] = E[c]
        Cells({{{0.5, 0.8, 0.9}, {0.5, 0.8, 0.5}},
               {{0.5, 0.3, 0.2}, {0.5, 0.5, 0.8}},
               {{0.5, 1.0, 0.1}, {0.5, 0.7, 0.2}}})};
  } else if (name == "token-b") {
    w.kind = WorldKind::kToken;
    w.length = 2;
    w.context_probs = {0.2, 0.4, 0.4};
    w.token = {
        Cells({{{0.2, 0.9, 0.2}, {0.5, 0.4, 0.4}, {0.3, 0.1, 0.8}},
               {{0.3, 1.0, 0.3}, {0.3, 0.6, 0.5}, {0.4, 0.2, 0.2}}}),
        Cells({{{0.4, 0.0, 0.1}, {0.4, 0.2, 0.3}, {0.2, 0.9, 0.9}},
               {{0.1, 1.0, 0.1}, {0.6, 0.7, 0.6}, {0.3, 0.3, 0.2}}}),
        Cells({{{0.5, 0.5, 0.5}, {0.5, 0.5, 0.3}},
               {{0.5, 0.0, 0.2}, {0.5, 0.4, 0.3}}})};
  } else if (name == "onetime-a") {
    w.kind = WorldKind::kOnetime;
    w.length = 3;
    w.candidates = {1, 2, 3, 4};
    w.context_probs = {0.4, 0.35, 0.25};
    w.onetime = {
        {{0.5, {0.9, 0.6, 0.7, 1.2}}, {0.5, {0.7, 0.8, 0.5, 1.0}}},
        {{0.6, {0.5, 0.9, 1.0, 0.2}}, {0.4, {0.6, 0.7, 0.8, 0.6}}},
        {{0.3, {0.4, 0.5, 0.9, 1.5}},
         {0.3, {0.5, 0.2, 0.8, 1.4}},
         {0.4, {0.4, 0.4, 0.6, 1.6}}}};
  } else if (name == "onetime-flat") {
    w.kind = WorldKind::kOnetime;
    w.length = 2;
    w.candidates = {1, 2, 3};
    w.context_probs = {0.5, 0.5};
    w.onetime = {{{1.0, {0.4, 0.4, 0.4}}},
                 {{0.5, {0.7, 0.7, 0.7}}, {0.5, {0.2, 0.2, 0.2}}}};
  } else {
    Fail(ErrorKind::kParameter, "unknown built-in world '" + name + "'");
  }
  ValidateWorld(w);
  return w;
}

json WorldToJson(const FiniteWorld& w) {
  json j = {{"version", kWorldVersion},
            {"name", w.name},
            {"kind", w.kind == WorldKind::kToken ? "token" : "onetime"},
            {"length", w.length},
            {"bounds",
             {{"loss_max", w.loss_max},
              {"cost_min", w.cost_min},
              {"cost_max", w.cost_max}}},
            {"delta", w.delta}};
  json contexts = json::array();
  for (std::size_t k = 0; k < w.contexts(); ++k) {
    json ctx = {{"prob", w.context_probs[k]}};
    if (w.kind == WorldKind::kToken) {
      json steps = json::array();
      for (const auto& cell : w.token[k]) {
        json outs = json::array();
        for (const auto& o : cell) {
          outs.push_back({{"prob", o.prob}, {"l", o.l}, {"c", o.c}});
        }
        steps.push_back(outs);
      }
      ctx["steps"] = steps;
    } else {
      json outs = json::array();
      for (const auto& o : w.onetime[k]) {
        outs.push_back({{"prob", o.prob}, {"realized", o.realized}});
      }
      ctx["outcomes"] = outs;
    }
    contexts.push_back(ctx);
  }
  j["contexts"] = contexts;
  if (w.kind == WorldKind::kOnetime) j["candidates"] = w.candidates;
  return j;
}

FiniteWorld WorldFromJson(const json& j) {
  if (!j.is_object() || j.value("version", "") != kWorldVersion) {
    Fail(ErrorKind::kData, "world file is not tagged world/v1");
  }
  FiniteWorld w;
  try {
    w.name = j.value("name", "");
    const std::string kind = j.at("kind").get<std::string>();
    if (kind != "token" && kind != "onetime") {
      Fail(ErrorKind::kData, "unknown world kind '" + kind + "'");
    }
    w.kind = kind == "token" ? WorldKind::kToken : WorldKind::kOnetime;
    w.length = j.at("length").get<int>();
    const json& b = j.at("bounds");
    w.loss_max = b.at("loss_max").get<double>();
    w.cost_min = b.at("cost_min").get<double>();
    w.cost_max = b.at("cost_max").get<double>();
    w.delta = j.value("delta", 0.0);
    if (w.kind == WorldKind::kOnetime) {
      w.candidates = j.at("candidates").get<std::vector<int>>();
    }
    for (const json& ctx : j.at("contexts")) {
      w.context_probs.push_back(ctx.at("prob").get<double>());
      if (w.kind == WorldKind::kToken) {
        std::vector<std::vector<TokenOutcome>> steps;
        for (const json& cell : ctx.at("steps")) {
          std::vector<TokenOutcome> outs;
          for (const json& o : cell) {
            outs.push_back({o.at("prob").get<double>(), o.at("l").get<double>(),
                            o.at("c").get<double>()});
          }
          steps.push_back(std::move(outs));
        }
        w.token.push_back(std::move(steps));
      } else {
        std::vector<OnetimeOutcome> outs;
        for (const json& o : ctx.at("outcomes")) {
          outs.push_back({o.at("prob").get<double>(),
                          o.at("realized").get<std::vector<double>>()});
        }
        w.onetime.push_back(std::move(outs));
      }
    }
  } catch (const json::exception& e) {
    Fail(ErrorKind::kData, std::string("malformed world: ") + e.what());
  }
  ValidateWorld(w);
  return w;
}

// ---------------------------------------------------------------------------

std::vector<std::vector<double>> MeanLoss(const FiniteWorld& w) {
  CheckKind(w, WorldKind::kToken);
  std::vector<std::vector<double>> m(w.contexts(), std::vector<double>(w.length));
  for (std::size_t k = 0; k < w.contexts(); ++k) {
    for (int j = 0; j < w.length; ++j) {
      for (const auto& o : w.token[k][j]) m[k][j] += o.prob * o.l;
    }
  }
  return m;
}

std::vector<std::vector<double>> MeanCost(const FiniteWorld& w) {
  CheckKind(w, WorldKind::kToken);
  std::vector<std::vector<double>> m(w.contexts(), std::vector<double>(w.length));
  for (std::size_t k = 0; k < w.contexts(); ++k) {
    for (int j = 0; j < w.length; ++j) {
      for (const auto& o : w.token[k][j]) m[k][j] += o.prob * o.c;
    }
  }
  return m;
}

std::vector<std::vector<double>> MeanRealized(const FiniteWorld& w) {
  CheckKind(w, WorldKind::kOnetime);
  std::vector<std::vector<double>> m(w.contexts(),
                                     std::vector<double>(w.candidates.size()));
  for (std::size_t k = 0; k < w.contexts(); ++k) {
    for (const auto& o : w.onetime[k]) {
      for (std::size_t j = 0; j < o.realized.size(); ++j) {
        m[k][j] += o.prob * o.realized[j];
      }
    }
  }
  return m;
}

double TokenRisk(const FiniteWorld& w, const TokenScores& scores) {
  const auto el = MeanLoss(w);
  const auto ec = MeanCost(w);
  if (scores.size() != w.contexts()) {
    Fail(ErrorKind::kShape, "token scores need one row per context");
  }
  double risk = 0.0;
  for (std::size_t k = 0; k < w.contexts(); ++k) {
    if (scores[k].size() != static_cast<std::size_t>(w.length)) {
      Fail(ErrorKind::kShape, "token scores need one entry per step");
    }
    double row = 0.0;
    for (int j = 0; j < w.length; ++j) {
      row += TokenStepRealized(el[k][j], ec[k][j], scores[k][j]);
    }
    risk += w.context_probs[k] * row / w.length;
  }
  return risk;
}

double OnetimeRisk(const FiniteWorld& w, const OnetimeChoices& choices) {
  const auto er = MeanRealized(w);
  if (choices.size() != w.contexts()) {
    Fail(ErrorKind::kShape, "one-time choices need one entry per context");
  }
  double risk = 0.0;
  for (std::size_t k = 0; k < w.contexts(); ++k) {
    if (choices[k] >= er[k].size()) {
      Fail(ErrorKind::kPosition, "choice outside the candidate set");
    }
    risk += w.context_probs[k] * er[k][choices[k]];
  }
  return risk;
}

BayesToken BayesTokenRisk(const FiniteWorld& w) {
  const auto el = MeanLoss(w);
  const auto ec = MeanCost(w);
  BayesToken out;
  TokenScores scores(w.contexts(), std::vector<double>(w.length));
  out.defer.assign(w.contexts(), std::vector<int>(w.length));
  for (std::size_t k = 0; k < w.contexts(); ++k) {
    for (int j = 0; j < w.length; ++j) {
      out.defer[k][j] = ec[k][j] <= el[k][j] ? 1 : 0;
      scores[k][j] = out.defer[k][j] ? 1.0 : -1.0;
    }
  }
  out.risk = TokenRisk(w, scores);
  return out;
}

BayesOnetime BayesOnetimeRisk(const FiniteWorld& w) {
  const auto er = MeanRealized(w);
  BayesOnetime out;
  for (const auto& row : er) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < row.size(); ++j) {
      if (row[j] <= row[best]) best = j;
    }
    out.choice.push_back(best);
  }
  out.risk = OnetimeRisk(w, out.choice);
  return out;
}

double EnumerateTokenRisk(const FiniteWorld& w) {
  const std::size_t bits = w.contexts() * static_cast<std::size_t>(w.length);
  if (bits > 20) Fail(ErrorKind::kCapability, "world too large to enumerate");
  double best = std::numeric_limits<double>::infinity();
  TokenScores scores(w.contexts(), std::vector<double>(w.length));
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << bits); ++mask) {
    for (std::size_t b = 0; b < bits; ++b) {
      scores[b / w.length][b % w.length] = (mask >> b) & 1 ? 1.0 : -1.0;
    }
    best = std::min(best, TokenRisk(w, scores));
  }
  return best;
}

double EnumerateOnetimeRisk(const FiniteWorld& w) {
  CheckKind(w, WorldKind::kOnetime);
  const std::size_t m = w.candidates.size();
  double count = 1.0;
  for (std::size_t k = 0; k < w.contexts(); ++k) count *= static_cast<double>(m);
  if (count > 1048576.0) {
    Fail(ErrorKind::kCapability, "world too large to enumerate");
  }
  double best = std::numeric_limits<double>::infinity();
  OnetimeChoices choice(w.contexts(), 0);
  while (true) {
    best = std::min(best, OnetimeRisk(w, choice));
    std::size_t k = 0;
    while (k < choice.size() && ++choice[k] == m) choice[k++] = 0;
    if (k == choice.size()) break;
  }
  return best;
}

// ---------------------------------------------------------------------------

TokenStats SampleToken(const FiniteWorld& w, std::size_t n, std::uint64_t seed) {
  CheckKind(w, WorldKind::kToken);
  TokenStats s;
  s.n = n;
  s.count.assign(w.contexts(), 0);
  s.sum_l.assign(w.contexts(), std::vector<double>(w.length, 0.0));
  s.sum_c = s.sum_l;
  std::vector<std::vector<std::vector<double>>> probs(w.contexts());
  for (std::size_t k = 0; k < w.contexts(); ++k) {
    for (const auto& cell : w.token[k]) probs[k].push_back(Probs(cell));
  }
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = Categorical(w.context_probs, rng);
    ++s.count[k];
    for (int j = 0; j < w.length; ++j) {
      const TokenOutcome& o = w.token[k][j][Categorical(probs[k][j], rng)];
      s.sum_l[k][j] += o.l;
      s.sum_c[k][j] += o.c;
    }
  }
  return s;
}

OnetimeStats SampleOnetime(const FiniteWorld& w, std::size_t n,
                           std::uint64_t seed) {
  CheckKind(w, WorldKind::kOnetime);
  OnetimeStats s;
  s.n = n;
  s.count.assign(w.contexts(), 0);
  s.weight.assign(w.contexts(), std::vector<double>(w.candidates.size(), 0.0));
  std::vector<std::vector<double>> probs;
  for (const auto& outs : w.onetime) probs.push_back(Probs(outs));
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = Categorical(w.context_probs, rng);
    ++s.count[k];
    const OnetimeOutcome& o = w.onetime[k][Categorical(probs[k], rng)];
    const double cmax = CMaxOf(o.realized);
    for (std::size_t j = 0; j < o.realized.size(); ++j) {
      s.weight[k][j] += cmax - o.realized[j];
    }
  }
  return s;
}

double MinimizeConvex1D(const std::function<double(double)>& derivative,
                        double lo, double hi) {
  if (!(lo <= hi)) Fail(ErrorKind::kParameter, "empty search interval");
  if (derivative(lo) >= 0.0) return lo;
  if (derivative(hi) <= 0.0) return hi;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (derivative(mid) > 0.0) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double TabularTokenScore(PhiKind kind, double a, double b) {
  if (a == 0.0 && b == 0.0) return 0.0;
  return MinimizeConvex1D(
      [&](double r) { return TokenStepSurrogateDerivative(kind, a, b, r); },
      -kScoreBound, kScoreBound);
}

std::vector<double> TabularOnetimeScores(PsiKind kind,
                                         std::span<const double> weights) {
  std::vector<double> g(weights.size(), 0.0);
  const double top = *std::max_element(weights.begin(), weights.end());
  if (!(top > 0.0)) return g;
  if (kind == PsiKind::kMae) {
    g[ArgmaxPreferLast(weights)] = kScoreBound;
    return g;
  }
  for (std::size_t j = 0; j < g.size(); ++j) {
    g[j] = weights[j] > 0.0
               ? std::max(-kScoreBound, std::log(weights[j] / top))
               : -kScoreBound;
  }
  return g;
}

TokenScores FitTabularToken(PhiKind kind, const TokenStats& stats) {
  TokenScores r(stats.sum_l.size());
  for (std::size_t k = 0; k < r.size(); ++k) {
    for (std::size_t j = 0; j < stats.sum_l[k].size(); ++j) {
      r[k].push_back(TabularTokenScore(kind, stats.sum_l[k][j], stats.sum_c[k][j]));
    }
  }
  return r;
}

std::vector<std::vector<double>> FitTabularOnetime(PsiKind kind,
                                                   const OnetimeStats& stats) {
  std::vector<std::vector<double>> g;
  for (const auto& w : stats.weight) g.push_back(TabularOnetimeScores(kind, w));
  return g;
}

OnetimeChoices ChoicesFromScores(const std::vector<std::vector<double>>& g) {
  OnetimeChoices c;
  for (const auto& row : g) c.push_back(ArgmaxPreferLast(row));
  return c;
}

GapResult ConsistencyGap(const FiniteWorld& w, LabSurrogate surrogate,
                         std::size_t n, std::uint64_t seed) {
  GapResult out;
  out.degenerate = IsDegenerate(w);
  if (w.kind == WorldKind::kToken) {
    const TokenScores r = FitTabularToken(surrogate.phi, SampleToken(w, n, seed));
    out.realized = TokenRisk(w, r);
    out.bayes = BayesTokenRisk(w).risk;
  } else {
    const auto g = FitTabularOnetime(surrogate.psi, SampleOnetime(w, n, seed));
    out.realized = OnetimeRisk(w, ChoicesFromScores(g));
    out.bayes = BayesOnetimeRisk(w).risk;
  }
  out.gap = out.realized - out.bayes;
  return out;
}

std::vector<GapCell> GapSweep(const FiniteWorld& w, LabSurrogate surrogate,
                              std::span<const std::size_t> ns,
                              std::span<const std::uint64_t> seeds) {
  std::vector<GapCell> cells(ns.size() * seeds.size());
  const long total = static_cast<long>(cells.size());
#pragma omp parallel for schedule(dynamic)
  for (long c = 0; c < total; ++c) {
    const std::size_t a = static_cast<std::size_t>(c) / seeds.size();
    const std::size_t b = static_cast<std::size_t>(c) % seeds.size();
    cells[c].n = ns[a];
    cells[c].seed = seeds[b];
    cells[c].result = ConsistencyGap(w, surrogate, ns[a], seeds[b]);
  }
  return cells;
}

double SurrogateDeviation(const FiniteWorld& w, LabSurrogate surrogate,
                          std::size_t n, std::uint64_t seed) {
  if (n == 0) Fail(ErrorKind::kParameter, "sample size must be positive");
  const double inv_n = 1.0 / static_cast<double>(n);
  double pop = 0.0;
  double emp = 0.0;
  if (w.kind == WorldKind::kToken) {
    const TokenStats s = SampleToken(w, n, seed);
    const TokenScores r = FitTabularToken(surrogate.phi, s);
    const auto el = MeanLoss(w);
    const auto ec = MeanCost(w);
    for (std::size_t k = 0; k < w.contexts(); ++k) {
      for (int j = 0; j < w.length; ++j) {
        pop += w.context_probs[k] *
               TokenStepSurrogate(surrogate.phi, el[k][j], ec[k][j], r[k][j]) /
               w.length;
        emp += inv_n *
               TokenStepSurrogate(surrogate.phi, s.sum_l[k][j], s.sum_c[k][j],
                                  r[k][j]) /
               w.length;
      }
    }
  } else {
    const OnetimeStats s = SampleOnetime(w, n, seed);
    const auto g = FitTabularOnetime(surrogate.psi, s);
    for (std::size_t k = 0; k < w.contexts(); ++k) {
      std::vector<double> pop_w(w.candidates.size(), 0.0);
      for (const OnetimeOutcome& o : w.onetime[k]) {
        const double cmax = CMaxOf(o.realized);
        for (std::size_t j = 0; j < pop_w.size(); ++j) {
          pop_w[j] += o.prob * (cmax - o.realized[j]);
        }
      }
      for (double& v : pop_w) v *= w.context_probs[k];
      pop += WeightedPsi(surrogate.psi, pop_w, g[k]);
      emp += inv_n * WeightedPsi(surrogate.psi, s.weight[k], g[k]);
    }
  }
  return std::abs(pop - emp);
}

double FitSlope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    Fail(ErrorKind::kParameter, "slope fit needs two or more paired points");
  }
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) Fail(ErrorKind::kParameter, "slope fit needs distinct x");
  return sxy / sxx;
}

BoundAudit AuditBound(const FiniteWorld& w, LabSurrogate surrogate,
                      std::span<const std::size_t> ns,
                      std::span<const std::uint64_t> seeds) {
  if (ns.size() < 3) {
    Fail(ErrorKind::kParameter, "bound audit needs at least three grid points");
  }
  if (seeds.empty()) Fail(ErrorKind::kParameter, "bound audit needs seeds");
  BoundAudit out;
  out.n.assign(ns.begin(), ns.end());
  std::vector<double> dev(ns.size() * seeds.size());
  const long total = static_cast<long>(dev.size());
#pragma omp parallel for schedule(dynamic)
  for (long c = 0; c < total; ++c) {
    dev[c] = SurrogateDeviation(w, surrogate, ns[c / seeds.size()],
                                seeds[c % seeds.size()]);
  }
  std::vector<double> lx;
  std::vector<double> ly;
  for (std::size_t a = 0; a < ns.size(); ++a) {
    double m = 0.0;
    for (std::size_t b = 0; b < seeds.size(); ++b) {
      m += dev[a * seeds.size() + b] / static_cast<double>(seeds.size());
    }
    out.mean_deviation.push_back(m);
    if (m > 0.0) {
      lx.push_back(std::log(static_cast<double>(ns[a])));
      ly.push_back(std::log(m));
    }
  }
  if (lx.size() < 2) {
    out.converged = true;
    out.within = true;
    return out;
  }
  out.slope = FitSlope(lx, ly);
  out.within = out.slope >= -0.8 && out.slope <= -0.2;
  return out;
}

}  // namespace seqdefer::lab
