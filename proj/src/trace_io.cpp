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

#include "seqdefer/trace_io.hpp"

#include <fstream>
#include <sstream>

namespace seqdefer {

using nlohmann::json;

json LabelToJson(const Label& label) {
  if (IsDiscrete(label)) return json(LabelId(label));
  return json(LabelValue(label));
}

Label LabelFromJson(const json& j) {
  if (j.is_number_integer()) return Label{j.get<std::int64_t>()};
  if (j.is_number_float()) return Label{j.get<double>()};
  Fail(ErrorKind::kData, "label must be a number");
}

namespace {

json StepToJson(const StepRecord& s) {
  json j;
  j["j"] = s.j;
  j["model_pred"] = LabelToJson(s.model_pred);
  j["expert_pred"] = LabelToJson(s.expert_pred);
  j["model_loss"] = s.model_loss;
  j["expert_loss"] = s.expert_loss;
  j["expert_cost"] = s.expert_cost;
  j["conf_score"] = s.conf_score;
  j["dist"] = s.dist;
  j["features"] = s.features;
  return j;
}

StepRecord StepFromJson(const json& j) {
  StepRecord s;
  s.j = j.at("j").get<int>();
  s.model_pred = LabelFromJson(j.at("model_pred"));
  s.expert_pred = LabelFromJson(j.at("expert_pred"));
  s.model_loss = j.at("model_loss").get<double>();
  s.expert_loss = j.at("expert_loss").get<double>();
  s.expert_cost = j.at("expert_cost").get<double>();
  s.conf_score = j.at("conf_score").get<double>();
  s.dist = j.at("dist").get<std::vector<double>>();
  s.features = j.at("features").get<std::vector<double>>();
  return s;
}

}  // namespace

json TraceToJson(const Trace& t) {
  json j;
  j["version"] = kTraceVersion;
  j["instance_id"] = t.instance_id;
  j["x_summary"] = t.x_summary;
  j["inputs"] = t.inputs;
  json target = json::array();
  for (const Label& l : t.target) target.push_back(LabelToJson(l));
  j["target"] = std::move(target);
  json steps = json::array();
  for (const StepRecord& s : t.steps) steps.push_back(StepToJson(s));
  j["steps"] = std::move(steps);
  j["candidates"] = t.candidates;
  j["prefix_losses"] = t.prefix_losses;
  j["onetime_costs"] = t.onetime_costs;
  j["onetime_alpha"] = t.onetime_alpha;
  j["system_losses"] = t.system_losses;
  j["expert_full_loss"] = t.expert_full_loss;
  j["model_full_loss"] = t.model_full_loss;
  return j;
}

Trace TraceFromJson(const json& j) {
  if (!j.contains("version") || j.at("version") != kTraceVersion) {
    Fail(ErrorKind::kData, "trace document lacks version tag trace/v1");
  }
  try {
    Trace t;
    t.instance_id = j.at("instance_id").get<std::string>();
    t.x_summary = j.at("x_summary").get<std::vector<double>>();
    t.inputs = j.at("inputs").get<std::vector<double>>();
    for (const json& l : j.at("target")) t.target.push_back(LabelFromJson(l));
    for (const json& s : j.at("steps")) t.steps.push_back(StepFromJson(s));
    t.candidates = j.at("candidates").get<std::vector<int>>();
    t.prefix_losses = j.at("prefix_losses").get<std::vector<double>>();
    t.onetime_costs = j.at("onetime_costs").get<std::vector<double>>();
    t.onetime_alpha = j.at("onetime_alpha").get<std::vector<double>>();
    t.system_losses = j.at("system_losses").get<std::vector<double>>();
    t.expert_full_loss = j.at("expert_full_loss").get<double>();
    t.model_full_loss = j.at("model_full_loss").get<double>();
    return t;
  } catch (const json::exception& e) {
    Fail(ErrorKind::kData, std::string("malformed trace: ") + e.what());
  }
}

json BoundsToJson(const TaskBounds& b) {
  return json{{"label_kind", b.label_kind == LabelKind::kDiscrete ? "discrete"
                                                                  : "scalar"},
              {"vocab_size", b.vocab_size},
              {"length", b.length},
              {"feature_dim", b.feature_dim},
              {"summary_dim", b.summary_dim},
              {"loss_max", b.loss_max},
              {"cost_min", b.cost_min},
              {"cost_max", b.cost_max}};
}

TaskBounds BoundsFromJson(const json& j) {
  TaskBounds b;
  b.label_kind = j.at("label_kind") == "discrete" ? LabelKind::kDiscrete
                                                  : LabelKind::kScalar;
  b.vocab_size = j.at("vocab_size").get<std::int64_t>();
  b.length = j.at("length").get<int>();
  b.feature_dim = j.at("feature_dim").get<std::size_t>();
  b.summary_dim = j.at("summary_dim").get<std::size_t>();
  b.loss_max = j.at("loss_max").get<double>();
  b.cost_min = j.at("cost_min").get<double>();
  b.cost_max = j.at("cost_max").get<double>();
  return b;
}

std::string TracesToNdjson(const std::vector<Trace>& traces) {
  std::string out;
  for (const Trace& t : traces) {
    out += TraceToJson(t).dump();
    out += '\n';
  }
  return out;
}

std::vector<Trace> TracesFromNdjson(const std::string& text) {
  std::vector<Trace> traces;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::parse_error& e) {
      Fail(ErrorKind::kData,
           "line " + std::to_string(lineno) + ": " + e.what());
    }
    traces.push_back(TraceFromJson(doc));
  }
  return traces;
}

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void WriteFile(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorKind::kIo, "cannot write " + path.string());
  out << content;
}

void WriteTraces(const std::filesystem::path& path,
                 const std::vector<Trace>& traces) {
  WriteFile(path, TracesToNdjson(traces));
}

std::vector<Trace> ReadTraces(const std::filesystem::path& path) {
  return TracesFromNdjson(ReadFile(path));
}

}  // namespace seqdefer
