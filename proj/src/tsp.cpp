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

#include "seqdefer/baselines.hpp"
#include "seqdefer/tasks.hpp"

namespace seqdefer {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kImprove = 1e-12;

std::vector<bool> VisitedMask(std::span<const int> prefix, std::size_t n) {
  std::vector<bool> seen(n, false);
  for (int c : prefix) {
    if (c < 0 || static_cast<std::size_t>(c) >= n) {
      Fail(ErrorKind::kValidity, "prefix names a city outside the instance");
    }
    if (seen[c]) Fail(ErrorKind::kValidity, "prefix repeats a city");
    seen[c] = true;
  }
  return seen;
}

// Proper intersection of tour edges a and b, edge k joining positions k
// and k + 1 (cyclically). Edges sharing a city never cross.
bool Crosses(const TspInstance& inst, const std::vector<int>& tour, int a,
             int b) {
  const int n = static_cast<int>(tour.size());
  const int p = tour[a], q = tour[(a + 1) % n];
  const int r = tour[b], s = tour[(b + 1) % n];
  if (p == r || p == s || q == r || q == s) return false;
  auto orient = [&](int u, int v, int w) {
    const auto& U = inst.coords[u];
    const auto& V = inst.coords[v];
    const auto& W = inst.coords[w];
    return (V[0] - U[0]) * (W[1] - U[1]) - (V[1] - U[1]) * (W[0] - U[0]);
  };
  const double d1 = orient(p, q, r), d2 = orient(p, q, s);
  const double d3 = orient(r, s, p), d4 = orient(r, s, q);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0)) && d1 != 0 &&
         d2 != 0 && d3 != 0 && d4 != 0;
}

std::vector<int> EdgeCrossings(const TspInstance& inst,
                               const std::vector<int>& tour) {
  const int n = static_cast<int>(tour.size());
  std::vector<int> count(n, 0);
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      if (Crosses(inst, tour, a, b)) {
        ++count[a];
        ++count[b];
      }
    }
  }
  return count;
}

}  // namespace

std::vector<TspInstance> GenTsp(std::size_t count, std::size_t n,
                                std::uint64_t seed) {
  if (n < 4) Fail(ErrorKind::kParameter, "TSP instances need n >= 4");
  std::vector<TspInstance> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(DeriveSeed(seed, i));
    out[i].coords.resize(n);
    for (auto& c : out[i].coords) {
      c[0] = rng.Normal();
      c[1] = rng.Normal();
    }
  }
  return out;
}

double Distance(const TspInstance& inst, int a, int b) {
  const double dx = inst.coords[a][0] - inst.coords[b][0];
  const double dy = inst.coords[a][1] - inst.coords[b][1];
  return std::sqrt(dx * dx + dy * dy);
}

double PathLength(const TspInstance& inst, std::span<const int> path) {
  double len = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) {
    len += Distance(inst, path[i - 1], path[i]);
  }
  return len;
}

double TourLength(const TspInstance& inst, std::span<const int> tour) {
  if (tour.size() < 2) return 0.0;
  return PathLength(inst, tour) + Distance(inst, tour.back(), tour.front());
}

bool IsPermutation(std::span<const int> tour, std::size_t n) {
  if (tour.size() != n) return false;
  std::vector<bool> seen(n, false);
  for (int c : tour) {
    if (c < 0 || static_cast<std::size_t>(c) >= n || seen[c]) return false;
    seen[c] = true;
  }
  return true;
}

TspPrediction TspPredict(const TspInstance& inst) {
  const std::size_t n = inst.size();
  TspPrediction pred;
  std::vector<bool> seen(n, false);
  pred.tour.push_back(0);
  pred.conf.push_back(0.0);
  pred.dist.emplace_back(n, 0.0);
  pred.dist.back()[0] = 1.0;
  seen[0] = true;
  for (std::size_t step = 1; step < n; ++step) {
    const int cur = pred.tour.back();
    int best = -1;
    double best_d = kInf;
    for (std::size_t c = 0; c < n; ++c) {
      if (seen[c]) continue;
      const double d = Distance(inst, cur, static_cast<int>(c));
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    // Softmax over -d, shifted by the nearest distance.
    std::vector<double> p(n, 0.0);
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      if (seen[c]) continue;
      p[c] = std::exp(best_d - Distance(inst, cur, static_cast<int>(c)));
      z += p[c];
    }
    for (double& v : p) v /= z;
    pred.conf.push_back(std::max(0.0, std::log(z)));
    pred.dist.push_back(std::move(p));
    pred.tour.push_back(best);
    seen[best] = true;
  }
  return pred;
}

std::vector<int> NearestNeighborComplete(const TspInstance& inst,
                                         std::span<const int> prefix) {
  const std::size_t n = inst.size();
  std::vector<bool> seen = VisitedMask(prefix, n);
  std::vector<int> tour(prefix.begin(), prefix.end());
  if (tour.empty()) {
    tour.push_back(0);
    seen[0] = true;
  }
  while (tour.size() < n) {
    const int cur = tour.back();
    int best = -1;
    double best_d = kInf;
    for (std::size_t c = 0; c < n; ++c) {
      if (seen[c]) continue;
      const double d = Distance(inst, cur, static_cast<int>(c));
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    tour.push_back(best);
    seen[best] = true;
  }
  return tour;
}

void TwoOptSuffix(const TspInstance& inst, std::vector<int>& tour,
                  std::size_t frozen) {
  const std::size_t n = tour.size();
  if (n < 4) return;
  // Path P = [anchor, free cities..., closing city]; only the free window
  // is reversed, so both anchors and the frozen edges stay in place.
  const std::size_t anchor = frozen <= 1 ? 0 : frozen - 1;
  std::vector<int> path(tour.begin() + anchor, tour.end());
  path.push_back(tour.front());
  const std::size_t m = path.size();  // free cities are path[1..m-2]
  if (m < 4) return;
  bool improved = true;
  while (improved) {
    improved = false;
    for (std::size_t i = 1; i + 1 < m; ++i) {
      for (std::size_t k = i + 1; k + 1 < m; ++k) {
        const double before = Distance(inst, path[i - 1], path[i]) +
                              Distance(inst, path[k], path[k + 1]);
        const double after = Distance(inst, path[i - 1], path[k]) +
                             Distance(inst, path[i], path[k + 1]);
        if (after < before - kImprove) {
          std::reverse(path.begin() + i, path.begin() + k + 1);
          improved = true;
        }
      }
    }
  }
  std::copy(path.begin(), path.end() - 1, tour.begin() + anchor);
}

std::vector<int> HeldKarpComplete(const TspInstance& inst,
                                  std::span<const int> prefix) {
  const std::size_t n = inst.size();
  std::vector<bool> seen = VisitedMask(prefix, n);
  std::vector<int> head(prefix.begin(), prefix.end());
  if (head.empty()) {
    head.push_back(0);
    seen[0] = true;
  }
  std::vector<int> rest;
  for (std::size_t c = 0; c < n; ++c) {
    if (!seen[c]) rest.push_back(static_cast<int>(c));
  }
  const std::size_t m = rest.size();
  if (m > 12) {
    Fail(ErrorKind::kParameter, "exact completion supports at most 12 free cities");
  }
  if (m == 0) return head;
  const int start = head.back();
  const int close = head.front();
  const std::size_t full = (std::size_t{1} << m) - 1;
  std::vector<double> dp((full + 1) * m, kInf);
  std::vector<int> parent((full + 1) * m, -1);
  for (std::size_t v = 0; v < m; ++v) {
    dp[(std::size_t{1} << v) * m + v] = Distance(inst, start, rest[v]);
  }
  for (std::size_t s = 1; s <= full; ++s) {
    for (std::size_t v = 0; v < m; ++v) {
      const double cur = dp[s * m + v];
      if (!(s & (std::size_t{1} << v)) || cur == kInf) continue;
      for (std::size_t w = 0; w < m; ++w) {
        if (s & (std::size_t{1} << w)) continue;
        const std::size_t t = s | (std::size_t{1} << w);
        const double cand = cur + Distance(inst, rest[v], rest[w]);
        if (cand < dp[t * m + w]) {
          dp[t * m + w] = cand;
          parent[t * m + w] = static_cast<int>(v);
        }
      }
    }
  }
  std::size_t last = 0;
  double best = kInf;
  for (std::size_t v = 0; v < m; ++v) {
    const double total = dp[full * m + v] + Distance(inst, rest[v], close);
    if (total < best) {
      best = total;
      last = v;
    }
  }
  std::vector<int> tail;
  std::size_t s = full;
  int v = static_cast<int>(last);
  while (v >= 0) {
    tail.push_back(rest[v]);
    const int p = parent[s * m + v];
    s &= ~(std::size_t{1} << v);
    v = p;
  }
  std::reverse(tail.begin(), tail.end());
  head.insert(head.end(), tail.begin(), tail.end());
  return head;
}

std::vector<int> TspExpertComplete(const TspInstance& inst,
                                   std::span<const int> prefix, bool exact) {
  VisitedMask(prefix, inst.size());
  if (exact) return HeldKarpComplete(inst, prefix);
  std::vector<int> tour = NearestNeighborComplete(inst, prefix);
  TwoOptSuffix(inst, tour, prefix.size());
  return tour;
}

std::size_t TspSummaryDim(std::size_t n) { return 6 * n + 1; }

TaskBounds TspBounds(std::size_t n, double alpha1) {
  TaskBounds b;
  b.label_kind = LabelKind::kDiscrete;
  b.vocab_size = static_cast<std::int64_t>(n);
  b.length = static_cast<int>(n);
  b.feature_dim = kTspFeatureDim;
  b.summary_dim = TspSummaryDim(n);
  b.loss_max = 40.0;  // edge length; coordinates are standard normal
  b.cost_min = alpha1 / static_cast<double>(n);
  b.cost_max = b.loss_max + b.cost_min;
  return b;
}

Trace TspTrace(const TspInstance& inst, const std::string& id,
               const CostSchedule& schedule, bool exact) {
  const int n = static_cast<int>(inst.size());
  if (schedule.length() != n) {
    Fail(ErrorKind::kShape, "cost schedule length must equal city count");
  }
  const TspPrediction pred = TspPredict(inst);
  const std::span<const int> model(pred.tour);

  // Realized tour for every hand-off j = 1..n+1: model cities 1..j-1,
  // expert completion afterwards.
  std::vector<std::vector<int>> tours(n + 1);
  std::vector<double> totals(n + 1);
  for (int j = 1; j <= n + 1; ++j) {
    tours[j - 1] = j == n + 1 ? pred.tour
                              : TspExpertComplete(inst, model.first(j - 1), exact);
    totals[j - 1] = TourLength(inst, tours[j - 1]);
  }
  const double ref = *std::min_element(totals.begin(), totals.end());

  Trace t;
  t.instance_id = id;
  for (const auto& c : inst.coords) {
    t.inputs.push_back(c[0]);
    t.inputs.push_back(c[1]);
  }
  for (int c : tours[0]) t.target.emplace_back(std::int64_t{c});

  std::vector<double> entropies;
  std::vector<double> edges;
  for (int j = 1; j <= n; ++j) {
    StepRecord s;
    s.j = j;
    s.model_pred = std::int64_t{pred.tour[j - 1]};
    const int expert_next = tours[j - 1][j - 1];
    s.expert_pred = std::int64_t{expert_next};
    const int prev = j == 1 ? -1 : pred.tour[j - 2];
    s.model_loss = prev < 0 ? 0.0 : Distance(inst, prev, pred.tour[j - 1]);
    s.expert_loss = prev < 0 ? 0.0 : Distance(inst, prev, expert_next);
    s.expert_cost = s.expert_loss + schedule.PerToken();
    s.conf_score = pred.conf[j - 1];
    s.dist = pred.dist[j - 1];
    const double h = Entropy(s.dist);
    const double top = *std::max_element(s.dist.begin(), s.dist.end());
    s.features = {static_cast<double>(j) / n, s.conf_score, h, s.model_loss,
                  top, static_cast<double>(n - j) / n};
    entropies.push_back(h);
    edges.push_back(s.model_loss);
    t.steps.push_back(std::move(s));
  }

  t.x_summary = pred.conf;
  t.x_summary.insert(t.x_summary.end(), entropies.begin(), entropies.end());
  t.x_summary.insert(t.x_summary.end(), edges.begin(), edges.end());
  const std::vector<int> crossings = EdgeCrossings(inst, pred.tour);
  t.x_summary.insert(t.x_summary.end(), crossings.begin(), crossings.end());
  // Crossings among the edges leaving positions j..n.
  std::vector<double> suffix(n, 0.0);
  for (int a = n - 1; a >= 0; --a) {
    double c = a + 1 < n ? suffix[a + 1] : 0.0;
    for (int b = a + 1; b < n; ++b) {
      if (Crosses(inst, pred.tour, a, b)) c += 1.0;
    }
    suffix[a] = c;
  }
  t.x_summary.insert(t.x_summary.end(), suffix.begin(), suffix.end());
  // Best single 2-opt improvement among the edges leaving positions j..n.
  std::vector<double> gain(n, 0.0);
  for (int a = n - 1; a >= 0; --a) {
    double g = a + 1 < n ? gain[a + 1] : 0.0;
    for (int b = a + 2; b < n; ++b) {
      if (a == 0 && b == n - 1) continue;
      const int p = pred.tour[a], q = pred.tour[a + 1];
      const int r = pred.tour[b], u = pred.tour[(b + 1) % n];
      g = std::max(g, Distance(inst, p, q) + Distance(inst, r, u) -
                          Distance(inst, p, r) - Distance(inst, q, u));
    }
    gain[a] = g;
  }
  t.x_summary.insert(t.x_summary.end(), gain.begin(), gain.end());
  t.x_summary.push_back(totals[n]);

  for (int j = 1; j <= n + 1; ++j) {
    const double prefix = j == n + 1 ? totals[n]
                                     : PathLength(inst, model.first(j - 1));
    const double alpha = schedule.AlphaAt(j);
    const double quality = j == n + 1 ? 0.0 : std::max(0.0, totals[j - 1] - prefix);
    t.candidates.push_back(j);
    t.prefix_losses.push_back(prefix);
    t.onetime_costs.push_back(quality + alpha);
    t.onetime_alpha.push_back(alpha);
    t.system_losses.push_back(100.0 * (totals[j - 1] - ref) / ref);
  }
  t.expert_full_loss = t.system_losses.front();
  t.model_full_loss = t.system_losses.back();
  return t;
}

TspSplit GenTspSplit(const TspConfig& config) {
  return {GenTsp(config.train, config.n, DeriveSeed(config.seed, 11)),
          GenTsp(config.test, config.n, DeriveSeed(config.seed, 12))};
}

TaskDataset TraceTspSplit(const TspSplit& split, const TspConfig& config) {
  if (config.exact && config.n > 12) {
    Fail(ErrorKind::kConfig, "exact TSP completion needs n <= 12");
  }
  for (const auto* part : {&split.train, &split.test}) {
    for (const TspInstance& inst : *part) {
      if (inst.size() != config.n) {
        Fail(ErrorKind::kData, "TSP instance size differs from the configured n");
      }
    }
  }
  TaskDataset data;
  data.kind = TaskKind::kTsp;
  data.alpha1 = config.alpha1;
  data.bounds = TspBounds(config.n, config.alpha1);
  data.predictor = {{"model", "nearest_neighbor"},
                    {"expert", config.exact ? "held_karp" : "two_opt"},
                    {"n", config.n}};
  const CostSchedule schedule(config.alpha1, static_cast<int>(config.n));
  const auto& train = split.train;
  const auto& test = split.test;
  data.train.resize(train.size());
  data.test.resize(test.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < train.size(); ++i) {
    data.train[i] = TspTrace(train[i], "tsp-train-" + std::to_string(i),
                             schedule, config.exact);
  }
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < test.size(); ++i) {
    data.test[i] = TspTrace(test[i], "tsp-test-" + std::to_string(i), schedule,
                            config.exact);
  }
  return data;
}

TaskDataset BuildTspDataset(const TspConfig& config) {
  return TraceTspSplit(GenTspSplit(config), config);
}

nlohmann::json TspToJson(const std::vector<TspInstance>& instances) {
  nlohmann::json j;
  j["version"] = "tsp/v1";
  j["instances"] = nlohmann::json::array();
  for (const TspInstance& inst : instances) {
    nlohmann::json coords = nlohmann::json::array();
    for (const auto& c : inst.coords) coords.push_back({c[0], c[1]});
    j["instances"].push_back(std::move(coords));
  }
  return j;
}

std::vector<TspInstance> TspFromJson(const nlohmann::json& j) {
  if (j.value("version", "") != "tsp/v1") {
    Fail(ErrorKind::kData, "expected a tsp/v1 document");
  }
  std::vector<TspInstance> out;
  for (const auto& coords : j.at("instances")) {
    TspInstance inst;
    for (const auto& c : coords) {
      inst.coords.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
    }
    if (inst.size() < 4) Fail(ErrorKind::kData, "TSP instance with n < 4");
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace seqdefer
