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

#include "seqdefer/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "seqdefer/rng.hpp"

namespace seqdefer {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

int SharedLength(std::span<const Trace> traces) {
  if (traces.empty()) Fail(ErrorKind::kEmptyInput, "no traces");
  const int length = traces.front().length();
  for (const Trace& t : traces) {
    if (t.length() != length) Fail(ErrorKind::kShape, "traces differ in L");
  }
  return length;
}

double Sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(-z)), stable.
double Softplus(double z) {
  return z > 0.0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

}  // namespace

std::string ToString(ConfidenceKind kind) {
  switch (kind) {
    case ConfidenceKind::kNegLogProb:
      return "neg_log_prob";
    case ConfidenceKind::kEntropy:
      return "entropy";
    case ConfidenceKind::kMcVariance:
      return "mc_variance";
  }
  return "unknown";
}

ConfidenceKind ParseConfidenceKind(const std::string& name) {
  if (name == "neg_log_prob") return ConfidenceKind::kNegLogProb;
  if (name == "entropy") return ConfidenceKind::kEntropy;
  if (name == "mc_variance") return ConfidenceKind::kMcVariance;
  Fail(ErrorKind::kConfig, "unknown confidence kind '" + name + "'");
}

double Entropy(std::span<const double> dist) {
  double h = 0.0;
  for (double p : dist) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

double StepConfidence(ConfidenceKind kind, const StepRecord& step) {
  if (kind != ConfidenceKind::kEntropy) return step.conf_score;
  if (step.dist.empty()) {
    Fail(ErrorKind::kCapability,
         "entropy needs a finite-vocabulary predictive distribution");
  }
  return Entropy(step.dist);
}

std::vector<double> TokenwiseConf(ConfidenceKind kind, const Trace& trace) {
  std::vector<double> out;
  out.reserve(trace.steps.size());
  for (const StepRecord& s : trace.steps) out.push_back(StepConfidence(kind, s));
  return out;
}

std::string ToString(const ChowRule& rule) {
  switch (rule.kind) {
    case ChowKind::kSum:
      return "ChowSum";
    case ChowKind::kMean:
      return "ChowMean";
    case ChowKind::kQuantile: {
      std::ostringstream os;
      os << "ChowQuantile" << rule.alpha;
      return os.str();
    }
  }
  return "Chow";
}

double Quantile(std::vector<double> values, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    Fail(ErrorKind::kParameter, "quantile level must lie in [0, 1]");
  }
  if (values.empty()) Fail(ErrorKind::kEmptyInput, "quantile of no values");
  std::sort(values.begin(), values.end());
  const double pos = alpha * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

double ChowScore(const ChowRule& rule, std::span<const double> scores) {
  if (rule.kind == ChowKind::kQuantile) {
    return Quantile({scores.begin(), scores.end()}, rule.alpha);
  }
  if (scores.empty()) Fail(ErrorKind::kEmptyInput, "no token scores");
  double sum = 0.0;
  for (double s : scores) sum += s;
  return rule.kind == ChowKind::kSum ? sum
                                     : sum / static_cast<double>(scores.size());
}

double ChowScore(const ChowRule& rule, const Trace& trace) {
  std::vector<double> scores;
  for (const StepRecord& s : trace.steps) scores.push_back(s.conf_score);
  return ChowScore(rule, scores);
}

std::vector<double> OnetimeConf(ConfidenceKind kind, const Trace& trace,
                                const CandidateSet& candidates) {
  if (candidates.length() != trace.length()) {
    Fail(ErrorKind::kShape, "candidate set length differs from trace");
  }
  std::vector<double> g(candidates.size());
  double lowest = kInf;
  for (std::size_t k = 0; k < candidates.NoDeferIndex(); ++k) {
    g[k] = StepConfidence(kind, trace.steps[candidates[k] - 1]);
    lowest = std::min(lowest, g[k]);
  }
  g[candidates.NoDeferIndex()] = lowest - 1.0;
  return g;
}

// ---------------------------------------------------------------------------

std::vector<double> WholeEmbedModel::Features(const Trace& trace) {
  std::vector<double> f = trace.x_summary;
  std::vector<double> conf;
  for (const StepRecord& s : trace.steps) conf.push_back(s.conf_score);
  f.push_back(ChowScore({ChowKind::kSum}, conf));
  f.push_back(ChowScore({ChowKind::kMean}, conf));
  f.push_back(*std::max_element(conf.begin(), conf.end()));
  return f;
}

double WholeEmbedModel::Score(const Trace& trace) const {
  const std::vector<double> x = scaler.Apply(Features(trace));
  double z = bias;
  for (std::size_t k = 0; k < x.size(); ++k) z += weights[k] * x[k];
  return z;
}

WholeEmbedResult TrainWholeEmbed(std::span<const Trace> traces,
                                 const TrainConfig& config) {
  if (traces.empty()) Fail(ErrorKind::kEmptyInput, "no training traces");
  if (config.epochs < 0) Fail(ErrorKind::kParameter, "epochs must be >= 0");
  std::vector<std::vector<double>> rows;
  std::vector<double> labels;
  WholeEmbedResult result;
  WholeEmbedLog& log = result.log;
  for (const Trace& t : traces) {
    rows.push_back(WholeEmbedModel::Features(t));
    const bool expert_better = t.expert_full_loss < t.model_full_loss;
    labels.push_back(expert_better ? 1.0 : 0.0);
    (expert_better ? log.positives : log.negatives) += 1;
  }
  const std::size_t dim = rows.front().size();
  WholeEmbedModel& model = result.model;
  model.scaler = FeatureScaler::Fit(rows, dim);
  model.weights.assign(dim, 0.0);
  const double n = static_cast<double>(rows.size());
  // Prior log-odds, kept finite for single-class data.
  const double prior =
      (static_cast<double>(log.positives) + 0.5) / (n + 1.0);
  model.bias = std::log(prior / (1.0 - prior));
  if (log.positives == 0 || log.negatives == 0) {
    log.warnings.push_back(
        "whole-sequence labels are single-class; returning the prior-score "
        "model");
    return result;
  }
  for (auto& r : rows) r = model.scaler.Apply(r);

  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  const double lr = config.learning_rate;
  std::vector<double> m(dim + 1, 0.0);
  std::vector<double> v(dim + 1, 0.0);
  std::vector<double> grad(dim + 1);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double z = model.bias;
      for (std::size_t k = 0; k < dim; ++k) z += model.weights[k] * rows[i][k];
      // Label y: loss softplus(-z) for y = 1, softplus(z) for y = 0.
      loss += labels[i] > 0.5 ? Softplus(z) : Softplus(-z);
      const double d = (Sigmoid(z) - labels[i]) / n;
      for (std::size_t k = 0; k < dim; ++k) grad[k] += d * rows[i][k];
      grad[dim] += d;
    }
    loss /= n;
    if (!std::isfinite(loss)) {
      Fail(ErrorKind::kNumeric, "non-finite whole-sequence training loss");
    }
    log.train_loss.push_back(loss);
    const double t = static_cast<double>(epoch + 1);
    const double bc1 = 1.0 - std::pow(kBeta1, t);
    const double bc2 = 1.0 - std::pow(kBeta2, t);
    for (std::size_t k = 0; k <= dim; ++k) {
      m[k] = kBeta1 * m[k] + (1.0 - kBeta1) * grad[k];
      v[k] = kBeta2 * v[k] + (1.0 - kBeta2) * grad[k] * grad[k];
      const double step = (m[k] / bc1) / (std::sqrt(v[k] / bc2) + kEps);
      double& w = k < dim ? model.weights[k] : model.bias;
      const double decay = k < dim ? config.weight_decay * w : 0.0;
      w -= lr * (step + decay);
    }
    log.epochs_run = epoch + 1;
  }
  return result;
}

// ---------------------------------------------------------------------------

std::vector<double> ProbabilityGrid(int steps) {
  if (steps < 1) Fail(ErrorKind::kParameter, "grid needs at least one step");
  std::vector<double> p;
  for (int k = 0; k <= steps; ++k) {
    p.push_back(static_cast<double>(k) / steps);
  }
  return p;
}

DeferralCurve RandomCurveToken(std::span<const Trace> traces,
                               std::uint64_t seed,
                               std::span<const double> probabilities,
                               std::size_t draws) {
  const int length = SharedLength(traces);
  if (draws == 0) Fail(ErrorKind::kParameter, "need at least one draw");
  std::vector<CurvePoint> raw(probabilities.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t b = 0; b < probabilities.size(); ++b) {
    const double p = probabilities[b];
    Rng rng(DeriveSeed(seed, b));
    std::vector<double> xs(draws);
    std::vector<double> ys(draws);
    for (std::size_t d = 0; d < draws; ++d) {
      const Trace& t = traces[rng.Below(traces.size())];
      for (const StepRecord& s : t.steps) {
        if (rng.Bernoulli(p)) {
          xs[d] += 1.0;
          ys[d] += s.expert_loss;
        } else {
          ys[d] += s.model_loss;
        }
      }
    }
    const double n = static_cast<double>(draws);
    raw[b] = {p, PairwiseSum(xs) / n, PairwiseSum(ys) / n};
  }
  return FinalizeCurve("Random", std::move(raw), length, MeanModelLoss(traces),
                       MeanExpertLoss(traces));
}

DeferralCurve RandomCurveWhole(std::span<const Trace> traces,
                               std::uint64_t seed,
                               std::span<const double> probabilities,
                               std::size_t draws) {
  const int length = SharedLength(traces);
  if (draws == 0) Fail(ErrorKind::kParameter, "need at least one draw");
  std::vector<CurvePoint> raw(probabilities.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t b = 0; b < probabilities.size(); ++b) {
    Rng rng(DeriveSeed(seed, b));
    std::vector<double> xs(draws);
    std::vector<double> ys(draws);
    for (std::size_t d = 0; d < draws; ++d) {
      const Trace& t = traces[rng.Below(traces.size())];
      if (rng.Bernoulli(probabilities[b])) {
        xs[d] = length;
        ys[d] = t.expert_full_loss;
      } else {
        ys[d] = t.model_full_loss;
      }
    }
    const double n = static_cast<double>(draws);
    raw[b] = {probabilities[b], PairwiseSum(xs) / n, PairwiseSum(ys) / n};
  }
  return FinalizeCurve("RandomWhole", std::move(raw), length,
                       MeanModelLoss(traces), MeanExpertLoss(traces));
}

DeferralCurve AnalyticRandomCurve(std::span<const Trace> traces) {
  const int length = SharedLength(traces);
  return FinalizeCurve("Random", {}, length, MeanModelLoss(traces),
                       MeanExpertLoss(traces));
}

DeferralCurve OptimalCurveToken(std::span<const Trace> traces) {
  const int length = SharedLength(traces);
  std::vector<double> gains;
  double base = 0.0;
  for (const Trace& t : traces) {
    for (const StepRecord& s : t.steps) {
      gains.push_back(s.model_loss - s.expert_loss);
      base += s.model_loss;
    }
  }
  std::sort(gains.begin(), gains.end(), std::greater<>());
  const double n = static_cast<double>(traces.size());
  std::vector<CurvePoint> raw;
  double loss = base;
  raw.push_back({kInf, 0.0, loss / n});
  for (std::size_t k = 0; k < gains.size(); ++k) {
    loss -= gains[k];
    raw.push_back({gains[k], static_cast<double>(k + 1) / n, loss / n});
  }
  return FinalizeCurve("Optimal", std::move(raw), length,
                       MeanModelLoss(traces), MeanExpertLoss(traces));
}

std::vector<CurvePoint> LowerConvexHull(std::vector<CurvePoint> points) {
  std::vector<CurvePoint> hull;
  for (const CurvePoint& p : points) {
    while (hull.size() >= 2) {
      const CurvePoint& a = hull[hull.size() - 2];
      const CurvePoint& b = hull.back();
      const double cross = (b.deferred - a.deferred) * (p.loss - a.loss) -
                           (b.loss - a.loss) * (p.deferred - a.deferred);
      if (cross <= 0.0) {
        hull.pop_back();
      } else {
        break;
      }
    }
    hull.push_back(p);
  }
  return hull;
}

DeferralCurve OptimalCurveOnetime(std::span<const Trace> traces,
                                  const CandidateSet& candidates) {
  const int length = SharedLength(traces);
  const std::size_t budget =
      traces.size() * static_cast<std::size_t>(length);
  std::vector<double> best(budget + 1, kInf);
  std::vector<double> next(budget + 1);
  best[0] = 0.0;
  std::size_t reach = 0;
  for (const Trace& t : traces) {
    std::fill(next.begin(), next.end(), kInf);
    for (std::size_t k = 0; k < candidates.size(); ++k) {
      const int j = candidates[k];
      const std::size_t cost = static_cast<std::size_t>(length - j + 1);
      const double loss = t.system_losses[t.CandidateIndex(j)];
      for (std::size_t b = 0; b <= reach; ++b) {
        if (best[b] == kInf) continue;
        next[b + cost] = std::min(next[b + cost], best[b] + loss);
      }
    }
    reach += static_cast<std::size_t>(length - candidates[0] + 1);
    best.swap(next);
  }
  const double n = static_cast<double>(traces.size());
  std::vector<CurvePoint> points;
  double running = kInf;
  for (std::size_t b = 0; b <= budget; ++b) {
    running = std::min(running, best[b]);
    if (running == kInf) continue;
    points.push_back({kInf, static_cast<double>(b) / n, running / n});
  }
  // The j = 1 option (b = budget) equals the expert-only endpoint only when
  // 1 is a candidate; otherwise extend to the pinned endpoint.
  points.push_back({-kInf, static_cast<double>(length), MeanExpertLoss(traces)});
  std::vector<CurvePoint> hull = LowerConvexHull(std::move(points));
  return FinalizeCurve("Optimal", std::move(hull), length,
                       MeanModelLoss(traces), MeanExpertLoss(traces));
}

}  // namespace seqdefer
