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

#include "seqdefer/evaluation.hpp"

#include <omp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "seqdefer/surrogates.hpp"

namespace seqdefer {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

int CommonLength(std::span<const Trace> traces) {
  if (traces.empty()) Fail(ErrorKind::kEmptyInput, "no traces to evaluate");
  const int length = traces.front().length();
  for (const Trace& t : traces) {
    if (t.length() != length) {
      Fail(ErrorKind::kShape, "traces in one evaluation must share L");
    }
  }
  return length;
}

struct Cell {
  double deferred = 0.0;
  double loss = 0.0;
};

// Reduces a thresholds x instances grid of cells into raw curve points.
std::vector<CurvePoint> ReduceCells(std::span<const double> thresholds,
                                    std::size_t instances,
                                    const std::vector<Cell>& cells) {
  std::vector<CurvePoint> raw;
  raw.reserve(thresholds.size());
  std::vector<double> xs(instances);
  std::vector<double> ys(instances);
  const double n = static_cast<double>(instances);
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    for (std::size_t i = 0; i < instances; ++i) {
      xs[i] = cells[t * instances + i].deferred;
      ys[i] = cells[t * instances + i].loss;
    }
    raw.push_back({thresholds[t], PairwiseSum(xs) / n, PairwiseSum(ys) / n});
  }
  return raw;
}

DeferralCurve Pin(const std::string& method, std::span<const Trace> traces,
                  std::vector<CurvePoint> raw) {
  const int length = CommonLength(traces);
  return FinalizeCurve(method, std::move(raw), length, MeanModelLoss(traces),
                       MeanExpertLoss(traces));
}

Cell OnetimeCell(const Trace& trace, const OnetimeChoice& choice,
                 double tau) {
  if (choice.stay_score > tau) return {0.0, trace.model_full_loss};
  const std::size_t k = trace.CandidateIndex(choice.handoff);
  return {static_cast<double>(trace.length() - choice.handoff + 1),
          trace.system_losses[k]};
}

Cell WholeCell(const Trace& trace, double score, double tau) {
  if (score > tau) {
    return {static_cast<double>(trace.length()), trace.expert_full_loss};
  }
  return {0.0, trace.model_full_loss};
}

std::vector<OnetimeChoice> Choices(std::span<const Trace> traces,
                                   const CandidateSet& candidates,
                                   const std::vector<std::vector<double>>& g) {
  if (g.size() != traces.size()) {
    Fail(ErrorKind::kShape, "need one score vector per trace");
  }
  std::vector<OnetimeChoice> choices;
  choices.reserve(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!candidates.IsSubsetOf(traces[i].Candidates())) {
      Fail(ErrorKind::kPosition, "candidate set not stored in trace " +
                                     traces[i].instance_id);
    }
    choices.push_back(ChooseOnetime(candidates, g[i]));
  }
  return choices;
}

}  // namespace

DeferralCurve FinalizeCurve(std::string method, std::vector<CurvePoint> raw,
                            double max_deferred, double model_loss,
                            double expert_loss) {
  std::stable_sort(raw.begin(), raw.end(),
                   [](const CurvePoint& a, const CurvePoint& b) {
                     return a.deferred < b.deferred;
                   });
  DeferralCurve curve{std::move(method), {}};
  curve.points.push_back({kInf, 0.0, model_loss});
  for (std::size_t i = 0; i < raw.size();) {
    std::size_t k = i;
    double sum = 0.0;
    while (k < raw.size() && raw[k].deferred == raw[i].deferred) {
      sum += raw[k].loss;
      ++k;
    }
    const double x = raw[i].deferred;
    if (x > 0.0 && x < max_deferred) {
      curve.points.push_back(
          {raw[i].threshold, x, sum / static_cast<double>(k - i)});
    }
    i = k;
  }
  curve.points.push_back({-kInf, max_deferred, expert_loss});
  return curve;
}

double Audc(const DeferralCurve& curve) {
  const auto& p = curve.points;
  if (p.size() < 2) {
    Fail(ErrorKind::kDegenerateCurve, "AUDC needs at least two points");
  }
  std::vector<double> pieces(p.size() - 1);
  for (std::size_t i = 1; i < p.size(); ++i) {
    pieces[i - 1] =
        0.5 * (p[i].loss + p[i - 1].loss) * (p[i].deferred - p[i - 1].deferred);
  }
  return PairwiseSum(pieces);
}

double PctImprovement(double audc_method, double audc_random) {
  if (audc_random == 0.0) {
    Fail(ErrorKind::kDivision, "random-rejector AUDC is zero");
  }
  return 100.0 * (audc_random - audc_method) / audc_random;
}

std::vector<double> ThresholdGrid(std::vector<double> scores) {
  std::erase_if(scores, [](double s) { return !std::isfinite(s); });
  std::sort(scores.begin(), scores.end());
  scores.erase(std::unique(scores.begin(), scores.end()), scores.end());
  scores.insert(scores.begin(), -kInf);
  scores.push_back(kInf);
  return scores;
}

double PairwiseSum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return PairwiseSum(values.first(half)) + PairwiseSum(values.subspan(half));
}

double MeanModelLoss(std::span<const Trace> traces) {
  std::vector<double> v;
  for (const Trace& t : traces) v.push_back(t.model_full_loss);
  return PairwiseSum(v) / static_cast<double>(v.size());
}

double MeanExpertLoss(std::span<const Trace> traces) {
  std::vector<double> v;
  for (const Trace& t : traces) v.push_back(t.expert_full_loss);
  return PairwiseSum(v) / static_cast<double>(v.size());
}

std::string ToString(TokenEvalMode mode) {
  return mode == TokenEvalMode::kStatic ? "static" : "reroll";
}

PolicyOutcome RunTokenPolicy(const Trace& trace, const RolloutEnv& env,
                             TokenEvalMode mode, StepScorer& scorer,
                             double tau) {
  PolicyOutcome out;
  std::vector<Label> context;
  context.reserve(trace.length());
  for (int j = 1; j <= trace.length(); ++j) {
    const StepRecord rec = mode == TokenEvalMode::kStatic
                               ? trace.steps[j - 1]
                               : env.Step(trace, context);
    const bool defer = scorer.Next(rec) >= tau;
    scorer.Commit(defer);
    if (defer) {
      out.deferred += 1.0;
      out.loss += rec.expert_loss;
      context.push_back(rec.expert_pred);
    } else {
      out.loss += rec.model_loss;
      context.push_back(rec.model_pred);
    }
  }
  return out;
}

std::vector<double> ObservedTokenScores(std::span<const Trace> traces,
                                        const RolloutEnv& env,
                                        TokenEvalMode mode,
                                        const ScorerFactory& factory) {
  std::vector<std::vector<double>> per(traces.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < traces.size(); ++i) {
    auto scorer = factory();
    std::vector<Label> context;
    for (int j = 1; j <= traces[i].length(); ++j) {
      const StepRecord rec = mode == TokenEvalMode::kStatic
                                 ? traces[i].steps[j - 1]
                                 : env.Step(traces[i], context);
      per[i].push_back(scorer->Next(rec));
      scorer->Commit(false);
      context.push_back(rec.model_pred);
    }
  }
  std::vector<double> all;
  for (const auto& v : per) all.insert(all.end(), v.begin(), v.end());
  return all;
}

DeferralCurve CurveToken(const std::string& method,
                         std::span<const Trace> traces, const RolloutEnv& env,
                         TokenEvalMode mode, const ScorerFactory& factory,
                         std::span<const double> thresholds) {
  CommonLength(traces);
  if (thresholds.empty()) Fail(ErrorKind::kParameter, "no thresholds");
  const std::size_t n = traces.size();
  const std::size_t cells = thresholds.size() * n;
  std::vector<Cell> grid(cells);
#pragma omp parallel
  {
    std::unique_ptr<StepScorer> scorer;
#pragma omp for schedule(dynamic, 16)
    for (std::size_t c = 0; c < cells; ++c) {
      scorer = factory();
      const PolicyOutcome o = RunTokenPolicy(traces[c % n], env, mode, *scorer,
                                             thresholds[c / n]);
      grid[c] = {o.deferred, o.loss};
    }
  }
  return Pin(method, traces, ReduceCells(thresholds, n, grid));
}

OnetimeChoice ChooseOnetime(const CandidateSet& candidates,
                            std::span<const double> g) {
  if (g.size() != candidates.size()) {
    Fail(ErrorKind::kShape, "score vector must have one entry per candidate");
  }
  const std::size_t last = candidates.NoDeferIndex();
  const std::size_t best = ArgmaxPreferLast(g.first(last));
  return {g[last], candidates[best]};
}

DeferralCurve CurveOnetime(const std::string& method,
                           std::span<const Trace> traces,
                           const CandidateSet& candidates,
                           const std::vector<std::vector<double>>& g,
                           std::span<const double> thresholds) {
  CommonLength(traces);
  if (thresholds.empty()) Fail(ErrorKind::kParameter, "no thresholds");
  const std::vector<OnetimeChoice> choices = Choices(traces, candidates, g);
  const std::size_t n = traces.size();
  const std::size_t cells = thresholds.size() * n;
  std::vector<Cell> grid(cells);
#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < cells; ++c) {
    grid[c] = OnetimeCell(traces[c % n], choices[c % n], thresholds[c / n]);
  }
  return Pin(method, traces, ReduceCells(thresholds, n, grid));
}

DeferralCurve CurveWhole(const std::string& method,
                         std::span<const Trace> traces,
                         std::span<const double> scores,
                         std::span<const double> thresholds) {
  CommonLength(traces);
  if (scores.size() != traces.size()) {
    Fail(ErrorKind::kShape, "need one score per trace");
  }
  if (thresholds.empty()) Fail(ErrorKind::kParameter, "no thresholds");
  const std::size_t n = traces.size();
  const std::size_t cells = thresholds.size() * n;
  std::vector<Cell> grid(cells);
#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < cells; ++c) {
    grid[c] = WholeCell(traces[c % n], scores[c % n], thresholds[c / n]);
  }
  return Pin(method, traces, ReduceCells(thresholds, n, grid));
}

namespace serial {

namespace {

DeferralCurve PinSerial(const std::string& method,
                        std::span<const Trace> traces,
                        std::vector<CurvePoint> raw) {
  const int length = CommonLength(traces);
  double model = 0.0;
  double expert = 0.0;
  for (const Trace& t : traces) {
    model += t.model_full_loss;
    expert += t.expert_full_loss;
  }
  const double n = static_cast<double>(traces.size());
  return FinalizeCurve(method, std::move(raw), length, model / n, expert / n);
}

}  // namespace

DeferralCurve CurveToken(const std::string& method,
                         std::span<const Trace> traces, const RolloutEnv& env,
                         TokenEvalMode mode, const ScorerFactory& factory,
                         std::span<const double> thresholds) {
  std::vector<CurvePoint> raw;
  for (double tau : thresholds) {
    double x = 0.0;
    double y = 0.0;
    for (const Trace& t : traces) {
      auto scorer = factory();
      const PolicyOutcome o = RunTokenPolicy(t, env, mode, *scorer, tau);
      x += o.deferred;
      y += o.loss;
    }
    const double n = static_cast<double>(traces.size());
    raw.push_back({tau, x / n, y / n});
  }
  return PinSerial(method, traces, std::move(raw));
}

DeferralCurve CurveOnetime(const std::string& method,
                           std::span<const Trace> traces,
                           const CandidateSet& candidates,
                           const std::vector<std::vector<double>>& g,
                           std::span<const double> thresholds) {
  std::vector<CurvePoint> raw;
  for (double tau : thresholds) {
    double x = 0.0;
    double y = 0.0;
    for (std::size_t i = 0; i < traces.size(); ++i) {
      const OnetimeChoice choice = ChooseOnetime(candidates, g.at(i));
      const Cell c = OnetimeCell(traces[i], choice, tau);
      x += c.deferred;
      y += c.loss;
    }
    const double n = static_cast<double>(traces.size());
    raw.push_back({tau, x / n, y / n});
  }
  return PinSerial(method, traces, std::move(raw));
}

DeferralCurve CurveWhole(const std::string& method,
                         std::span<const Trace> traces,
                         std::span<const double> scores,
                         std::span<const double> thresholds) {
  std::vector<CurvePoint> raw;
  for (double tau : thresholds) {
    double x = 0.0;
    double y = 0.0;
    for (std::size_t i = 0; i < traces.size(); ++i) {
      const Cell c = WholeCell(traces[i], scores[i], tau);
      x += c.deferred;
      y += c.loss;
    }
    const double n = static_cast<double>(traces.size());
    raw.push_back({tau, x / n, y / n});
  }
  return PinSerial(method, traces, std::move(raw));
}

}  // namespace serial

std::string FormatDouble(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::string CurvesToCsv(const std::vector<DeferralCurve>& curves) {
  std::ostringstream os;
  os << "method,threshold,deferred_count,loss\n";
  for (const DeferralCurve& c : curves) {
    for (const CurvePoint& p : c.points) {
      os << c.method << ',' << FormatDouble(p.threshold) << ','
         << FormatDouble(p.deferred) << ',' << FormatDouble(p.loss) << '\n';
    }
  }
  return os.str();
}

std::string SummaryToCsv(const std::vector<SummaryRow>& rows) {
  std::ostringstream os;
  os << "method,audc,pct_improvement,seed\n";
  for (const SummaryRow& r : rows) {
    os << r.method << ',' << FormatDouble(r.audc) << ','
       << FormatDouble(r.pct_improvement) << ',' << r.seed << '\n';
  }
  return os.str();
}

}  // namespace seqdefer
