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

#include "seqdefer/tasks.hpp"

#include "seqdefer/trace_io.hpp"

namespace seqdefer {

std::string ToString(TaskKind kind) {
  switch (kind) {
    case TaskKind::kTsp: return "tsp";
    case TaskKind::kMwp: return "mwp";
    case TaskKind::kText: return "text";
  }
  return "mwp";
}

TaskKind ParseTaskKind(const std::string& name) {
  if (name == "tsp") return TaskKind::kTsp;
  if (name == "mwp") return TaskKind::kMwp;
  if (name == "text") return TaskKind::kText;
  Fail(ErrorKind::kConfig, "unknown task '" + name + "'");
}

std::unique_ptr<RolloutEnv> MakeEnv(const TaskDataset& data) {
  const double price = data.alpha1 / data.bounds.length;
  switch (data.kind) {
    case TaskKind::kTsp:
      return std::make_unique<StaticEnv>();
    case TaskKind::kMwp:
      return std::make_unique<MwpEnv>(ArModelFromJson(data.predictor), price);
    case TaskKind::kText:
      return std::make_unique<TextEnv>(
          NGramFromJson(data.predictor.at("predictor")),
          NGramFromJson(data.predictor.at("expert")), price);
  }
  Fail(ErrorKind::kConfig, "unknown task");
}

void ApplySchedule(Trace& trace, const CostSchedule& schedule) {
  if (schedule.length() != trace.length()) {
    Fail(ErrorKind::kShape, "schedule length differs from trace length");
  }
  for (StepRecord& s : trace.steps) {
    s.expert_cost = s.expert_loss + schedule.PerToken();
  }
  for (std::size_t k = 0; k < trace.candidates.size(); ++k) {
    const double quality = trace.onetime_costs[k] - trace.onetime_alpha[k];
    const double alpha = schedule.AlphaAt(trace.candidates[k]);
    trace.onetime_alpha[k] = alpha;
    trace.onetime_costs[k] = std::max(0.0, quality) + alpha;
  }
}

void ApplySchedule(TaskDataset& data, double alpha1) {
  const CostSchedule schedule(alpha1, data.bounds.length);
  for (Trace& t : data.train) ApplySchedule(t, schedule);
  for (Trace& t : data.test) ApplySchedule(t, schedule);
  const double old_price = data.alpha1 / data.bounds.length;
  data.bounds.cost_min += schedule.PerToken() - old_price;
  data.bounds.cost_max += schedule.PerToken() - old_price;
  data.alpha1 = alpha1;
}

void FillOnetimeFromEnv(Trace& trace, const RolloutEnv& env,
                        const CostSchedule& schedule) {
  const int length = trace.length();
  trace.candidates.clear();
  trace.prefix_losses.clear();
  trace.onetime_costs.clear();
  trace.onetime_alpha.clear();
  trace.system_losses.clear();
  double prefix = 0.0;
  for (int j = 1; j <= length + 1; ++j) {
    std::vector<Label> context;
    for (int i = 1; i < j; ++i) context.push_back(trace.steps[i - 1].model_pred);
    double quality = 0.0;
    for (int i = j; i <= length; ++i) {
      const StepRecord rec = env.Step(trace, context);
      quality += rec.expert_loss;
      context.push_back(rec.expert_pred);
    }
    const double alpha = schedule.AlphaAt(j);
    trace.candidates.push_back(j);
    trace.prefix_losses.push_back(prefix);
    trace.onetime_costs.push_back(quality + alpha);
    trace.onetime_alpha.push_back(alpha);
    trace.system_losses.push_back(prefix + quality);
    if (j <= length) prefix += trace.steps[j - 1].model_loss;
  }
  trace.expert_full_loss = trace.system_losses.front();
  trace.model_full_loss = trace.system_losses.back();
}

void SaveDataset(const std::filesystem::path& dir, const TaskDataset& data,
                 const std::string& config_hash) {
  nlohmann::json meta;
  meta["version"] = "dataset/v1";
  if (!config_hash.empty()) meta["config_hash"] = config_hash;
  meta["task"] = ToString(data.kind);
  meta["alpha1"] = data.alpha1;
  meta["bounds"] = BoundsToJson(data.bounds);
  meta["predictor"] = data.predictor;
  meta["train_count"] = data.train.size();
  meta["test_count"] = data.test.size();
  WriteFile(dir / "meta.json", meta.dump(2) + "\n");
  WriteTraces(dir / "train.ndjson", data.train);
  WriteTraces(dir / "test.ndjson", data.test);
}

TaskDataset LoadDataset(const std::filesystem::path& dir) {
  const auto meta_path = dir / "meta.json";
  if (!std::filesystem::exists(meta_path)) {
    Fail(ErrorKind::kIo, "missing dataset metadata " + meta_path.string());
  }
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(ReadFile(meta_path));
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kData, meta_path.string() + ": " + e.what());
  }
  if (meta.value("version", "") != "dataset/v1") {
    Fail(ErrorKind::kData, meta_path.string() + ": expected dataset/v1");
  }
  TaskDataset data;
  data.kind = ParseTaskKind(meta.at("task").get<std::string>());
  data.alpha1 = meta.at("alpha1").get<double>();
  data.bounds = BoundsFromJson(meta.at("bounds"));
  data.predictor = meta.at("predictor");
  data.train = ReadTraces(dir / "train.ndjson");
  data.test = ReadTraces(dir / "test.ndjson");
  return data;
}

}  // namespace seqdefer
