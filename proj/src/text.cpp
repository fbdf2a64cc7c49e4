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

#include "seqdefer/tasks.hpp"

namespace seqdefer {

namespace {

std::vector<double> Softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

std::int64_t Sample(std::span<const double> p, Rng& rng) {
  const double u = rng.Uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return static_cast<std::int64_t>(i);
  }
  return static_cast<std::int64_t>(p.size() - 1);
}

double EntropyOf(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

std::size_t RowCount(int vocab, int order) {
  std::size_t n = 1;
  for (int k = 0; k < order; ++k) n *= static_cast<std::size_t>(vocab);
  return n;
}

void CheckShape(int vocab, int order) {
  if (vocab < 2) Fail(ErrorKind::kParameter, "vocabulary needs >= 2 tokens");
  if (order < 1) Fail(ErrorKind::kParameter, "n-gram order must be >= 1");
}

std::vector<std::int64_t> History(const Trace& trace,
                                  std::span<const Label> context) {
  std::vector<std::int64_t> h;
  for (double v : trace.inputs) h.push_back(static_cast<std::int64_t>(v));
  for (const Label& l : context) h.push_back(LabelId(l));
  return h;
}

}  // namespace

std::size_t NGramTable::RowIndex(std::span<const std::int64_t> history) const {
  if (history.size() < static_cast<std::size_t>(order)) {
    Fail(ErrorKind::kShape, "history shorter than the n-gram order");
  }
  std::size_t idx = 0;
  for (std::size_t k = history.size() - order; k < history.size(); ++k) {
    if (history[k] < 0 || history[k] >= vocab) {
      Fail(ErrorKind::kData, "token id " + std::to_string(history[k]) +
                                 " outside the vocabulary");
    }
    idx = idx * static_cast<std::size_t>(vocab) +
          static_cast<std::size_t>(history[k]);
  }
  return idx;
}

const std::vector<double>& NGramTable::Dist(
    std::span<const std::int64_t> history) const {
  return rows.at(RowIndex(history));
}

std::int64_t NGramTable::Predict(std::span<const std::int64_t> history) const {
  const auto& p = Dist(history);
  return static_cast<std::int64_t>(
      std::max_element(p.begin(), p.end()) - p.begin());
}

NGramTable RandomChain(int vocab, int order, double temperature, Rng& rng) {
  CheckShape(vocab, order);
  if (!(temperature > 0.0)) {
    Fail(ErrorKind::kParameter, "chain temperature must be > 0");
  }
  NGramTable t{order, vocab, {}};
  std::vector<double> logits(vocab);
  for (std::size_t r = 0; r < RowCount(vocab, order); ++r) {
    for (double& l : logits) l = temperature * rng.Normal();
    t.rows.push_back(Softmax(logits));
  }
  return t;
}

NGramTable FitNGram(const std::vector<std::vector<std::int64_t>>& sequences,
                    int vocab, int order, double smoothing) {
  CheckShape(vocab, order);
  if (smoothing < 0.0) Fail(ErrorKind::kParameter, "smoothing must be >= 0");
  NGramTable t{order, vocab, {}};
  t.rows.assign(RowCount(vocab, order), std::vector<double>(vocab, 0.0));
  for (const auto& seq : sequences) {
    for (std::size_t i = order; i < seq.size(); ++i) {
      const std::span<const std::int64_t> hist(seq.data(), i);
      if (seq[i] < 0 || seq[i] >= vocab) {
        Fail(ErrorKind::kData, "token id outside the vocabulary");
      }
      t.rows[t.RowIndex(hist)][seq[i]] += 1.0;
    }
  }
  for (auto& row : t.rows) {
    double total = 0.0;
    for (double& c : row) {
      c += smoothing;
      total += c;
    }
    for (double& c : row) c = total > 0.0 ? c / total : 1.0 / vocab;
  }
  return t;
}

std::vector<TextInstance> SampleText(const NGramTable& chain,
                                     std::size_t count, int length,
                                     std::uint64_t seed) {
  if (length < 1) Fail(ErrorKind::kParameter, "sequence length must be >= 1");
  std::vector<TextInstance> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(DeriveSeed(seed, i));
    std::vector<std::int64_t> seq;
    for (int k = 0; k < 2; ++k) {
      seq.push_back(static_cast<std::int64_t>(rng.Below(chain.vocab)));
    }
    for (int k = 0; k < length; ++k) seq.push_back(Sample(chain.Dist(seq), rng));
    out[i].context.assign(seq.begin(), seq.begin() + 2);
    out[i].target.assign(seq.begin() + 2, seq.end());
  }
  return out;
}

std::size_t TextFeatureDim(int vocab) { return 4 + 2 * static_cast<std::size_t>(vocab); }

std::size_t TextSummaryDim(int vocab, int length) {
  return 2 * static_cast<std::size_t>(vocab) + 2 * static_cast<std::size_t>(length);
}

TaskBounds TextBounds(int vocab, int length, double alpha1) {
  TaskBounds b;
  b.label_kind = LabelKind::kDiscrete;
  b.vocab_size = vocab;
  b.length = length;
  b.feature_dim = TextFeatureDim(vocab);
  b.summary_dim = TextSummaryDim(vocab, length);
  b.loss_max = 1.0;
  b.cost_min = alpha1 / length;
  b.cost_max = 1.0 + b.cost_min;
  return b;
}

StepRecord TextEnv::Step(const Trace& trace,
                         std::span<const Label> context) const {
  const std::size_t j = context.size() + 1;
  const std::size_t length = trace.target.size();
  if (j > length) Fail(ErrorKind::kPosition, "rollout ran past the sequence");
  const std::vector<std::int64_t> hist = History(trace, context);
  const std::vector<double>& p = predictor_.Dist(hist);
  const std::int64_t y = LabelId(trace.target[j - 1]);
  StepRecord s;
  s.j = static_cast<int>(j);
  const std::int64_t pred = predictor_.Predict(hist);
  const std::int64_t e = expert_.Predict(hist);
  s.model_pred = pred;
  s.expert_pred = e;
  s.model_loss = pred == y ? 0.0 : 1.0;
  s.expert_loss = e == y ? 0.0 : 1.0;
  s.expert_cost = s.expert_loss + price_;
  s.conf_score = -std::log(p[pred]);
  s.dist = p;
  s.features = {static_cast<double>(j) / static_cast<double>(length),
                s.conf_score, EntropyOf(p),
                *std::max_element(p.begin(), p.end())};
  const int v = predictor_.vocab;
  const std::int64_t prev = hist[hist.size() - 1];
  const std::int64_t prev2 = hist[hist.size() - 2];
  for (int k = 0; k < v; ++k) s.features.push_back(prev == k ? 1.0 : 0.0);
  for (int k = 0; k < v; ++k) s.features.push_back(prev2 == k ? 1.0 : 0.0);
  return s;
}

Trace TextTrace(const TextInstance& inst, const std::string& id,
                const TextEnv& env, const CostSchedule& schedule, int vocab) {
  if (inst.context.size() != 2) {
    Fail(ErrorKind::kShape, "text instances carry two context tokens");
  }
  Trace t;
  t.instance_id = id;
  for (std::int64_t c : inst.context) t.inputs.push_back(static_cast<double>(c));
  for (std::int64_t y : inst.target) t.target.emplace_back(y);
  std::vector<Label> context;
  for (std::size_t j = 1; j <= inst.target.size(); ++j) {
    t.steps.push_back(env.Step(t, context));
    context.push_back(t.steps.back().model_pred);
  }
  FillOnetimeFromEnv(t, env, schedule);
  for (std::int64_t c : inst.context) {
    for (int k = 0; k < vocab; ++k) t.x_summary.push_back(c == k ? 1.0 : 0.0);
  }
  for (const StepRecord& s : t.steps) t.x_summary.push_back(s.conf_score);
  for (const StepRecord& s : t.steps) t.x_summary.push_back(EntropyOf(s.dist));
  return t;
}

TextSplit GenTextSplit(const TextConfig& config) {
  Rng chain_rng(DeriveSeed(config.seed, 41));
  TextSplit split;
  split.chain = RandomChain(config.vocab, 2, config.temperature, chain_rng);
  split.train = SampleText(split.chain, config.train, config.length,
                           DeriveSeed(config.seed, 42));
  split.test = SampleText(split.chain, config.test, config.length,
                          DeriveSeed(config.seed, 43));
  return split;
}

TaskDataset TraceTextSplit(const TextSplit& split, const TextConfig& config) {
  const auto& train = split.train;
  const auto& test = split.test;
  if (train.empty()) Fail(ErrorKind::kData, "no text training sequences");
  std::vector<std::vector<std::int64_t>> seqs;
  for (const TextInstance& inst : train) {
    std::vector<std::int64_t> s = inst.context;
    s.insert(s.end(), inst.target.begin(), inst.target.end());
    seqs.push_back(std::move(s));
  }
  const NGramTable predictor = FitNGram(seqs, config.vocab, 1, config.smoothing);
  const NGramTable expert = FitNGram(seqs, config.vocab, 2, config.smoothing);
  const TextEnv env(predictor, expert, 0.0);

  TaskDataset data;
  data.kind = TaskKind::kText;
  data.predictor = {{"predictor", NGramToJson(predictor)},
                    {"expert", NGramToJson(expert)},
                    {"chain", NGramToJson(split.chain)}};
  data.alpha1 = 0.0;
  data.bounds = TextBounds(config.vocab, config.length, 0.0);
  const CostSchedule free(0.0, config.length);
  data.train.resize(train.size());
  data.test.resize(test.size());
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < train.size(); ++i) {
    data.train[i] = TextTrace(train[i], "text-train-" + std::to_string(i), env,
                              free, config.vocab);
  }
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < test.size(); ++i) {
    data.test[i] = TextTrace(test[i], "text-test-" + std::to_string(i), env,
                             free, config.vocab);
  }
  const double alpha1 =
      config.alpha1 ? *config.alpha1 : RecommendAlpha1(data.train);
  ApplySchedule(data, alpha1);
  return data;
}

TaskDataset BuildTextDataset(const TextConfig& config) {
  return TraceTextSplit(GenTextSplit(config), config);
}

nlohmann::json NGramToJson(const NGramTable& table) {
  return {{"kind", "ngram"},
          {"order", table.order},
          {"vocab", table.vocab},
          {"rows", table.rows}};
}

NGramTable NGramFromJson(const nlohmann::json& j) {
  NGramTable t;
  t.order = j.at("order").get<int>();
  t.vocab = j.at("vocab").get<int>();
  t.rows = j.at("rows").get<std::vector<std::vector<double>>>();
  CheckShape(t.vocab, t.order);
  if (t.rows.size() != RowCount(t.vocab, t.order)) {
    Fail(ErrorKind::kData, "n-gram table has the wrong number of rows");
  }
  for (const auto& r : t.rows) {
    if (r.size() != static_cast<std::size_t>(t.vocab)) {
      Fail(ErrorKind::kData, "n-gram row width differs from the vocabulary");
    }
  }
  return t;
}

}  // namespace seqdefer
